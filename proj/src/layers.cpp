#include "advinfer/layers.hpp"

#include "advinfer/error.hpp"

#include <algorithm>
#include <cmath>

namespace advinfer {

namespace {

double fan_in_bound(Eigen::Index fan_in) {
  return 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(fan_in, 1)));
}

}  // namespace

Var Linear::operator()(Graph& g, const Var& x) const {
  Var y = matmul(g.param(*weight), x);
  return bias != nullptr ? add(y, g.param(*bias)) : y;
}

Linear make_linear(ParamStore& store, const std::string& prefix, Eigen::Index in,
                   Eigen::Index out, Rng& rng, bool with_bias) {
  Linear l;
  l.weight = &store.create_uniform(prefix + ".weight", out, in, fan_in_bound(in), rng);
  if (with_bias) l.bias = &store.create(prefix + ".bias", out, 1);
  return l;
}

LstmParams make_lstm(ParamStore& store, const std::string& prefix, Eigen::Index input,
                     Eigen::Index hidden, Rng& rng) {
  LstmParams p;
  p.weight = &store.create_uniform(prefix + ".weight", 4 * hidden, input + hidden,
                                   fan_in_bound(input + hidden), rng);
  p.bias = &store.create(prefix + ".bias", 4 * hidden, 1);
  // Forget-gate bias starts at 1.
  p.bias->value.middleRows(hidden, hidden).setOnes();
  return p;
}

LstmState zero_state(Graph& g, Eigen::Index hidden, Eigen::Index batch) {
  return {g.constant(Matrix::Zero(hidden, batch)), g.constant(Matrix::Zero(hidden, batch))};
}

LstmState lstm_cell(Graph& g, const LstmParams& p, const Var& x, const LstmState& prev) {
  const Eigen::Index H = p.hidden_size();
  if (x.rows() != p.input_size() || prev.h.rows() != H || prev.c.rows() != H ||
      prev.h.cols() != x.cols() || prev.c.cols() != x.cols()) {
    throw ShapeError("lstm_cell: input " + std::to_string(x.rows()) + "x" +
                     std::to_string(x.cols()) + " does not match cell (input " +
                     std::to_string(p.input_size()) + ", hidden " + std::to_string(H) + ")");
  }
  const Var parts[] = {x, prev.h};
  Var gates = add(matmul(g.param(*p.weight), concat_rows(parts)), g.param(*p.bias));
  Var i = sigmoid(slice_rows(gates, 0, H));
  Var f = sigmoid(slice_rows(gates, H, H));
  Var cand = tanh(slice_rows(gates, 2 * H, H));
  Var o = sigmoid(slice_rows(gates, 3 * H, H));
  Var c = add(mul(f, prev.c), mul(i, cand));
  Var h = mul(o, tanh(c));
  return {h, c};
}

BiLstmParams make_bilstm(ParamStore& store, const std::string& prefix, Eigen::Index vocab,
                         Eigen::Index embed, Eigen::Index hidden, Rng& rng) {
  BiLstmParams p;
  p.embed = &store.create_uniform(prefix + ".embed", embed, vocab, 0.1, rng);
  p.forward = make_lstm(store, prefix + ".fwd", embed, hidden, rng);
  p.backward = make_lstm(store, prefix + ".bwd", embed, hidden, rng);
  return p;
}

Var bilstm_encode(Graph& g, const BiLstmParams& p, std::span<const TokenIds> batch) {
  if (batch.empty()) throw ValidationError("bilstm_encode: empty batch");
  std::size_t max_len = 0;
  for (const TokenIds& s : batch) {
    if (s.empty()) throw ValidationError("bilstm_encode: empty sequence");
    max_len = std::max(max_len, s.size());
  }
  const auto B = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index H = p.hidden_size();
  Var table = g.param(*p.embed);

  auto run = [&](const LstmParams& cell, bool reverse) {
    LstmState st = zero_state(g, H, B);
    std::vector<int> ids(batch.size());
    RowVector mask(B);
    for (std::size_t t = 0; t < max_len; ++t) {
      bool all_live = true;
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const TokenIds& s = batch[b];
        if (t < s.size()) {
          ids[b] = reverse ? s[s.size() - 1 - t] : s[t];
          mask(static_cast<Eigen::Index>(b)) = 1.0;
        } else {
          ids[b] = s.front();
          mask(static_cast<Eigen::Index>(b)) = 0.0;
          all_live = false;
        }
      }
      LstmState next = lstm_cell(g, cell, embedding(table, ids), st);
      if (all_live) {
        st = next;
      } else {
        st = {blend(next.h, st.h, mask), blend(next.c, st.c, mask)};
      }
    }
    return st.h;
  };

  const Var halves[] = {run(p.forward, false), run(p.backward, true)};
  return concat_rows(halves);
}

AttentionParams make_attention(ParamStore& store, const std::string& prefix,
                               Eigen::Index query_dim, Eigen::Index segment_dim,
                               Eigen::Index attn_dim, Rng& rng) {
  AttentionParams p;
  p.query = &store.create_uniform(prefix + ".query", attn_dim, query_dim,
                                  fan_in_bound(query_dim), rng);
  p.segment = &store.create_uniform(prefix + ".segment", attn_dim, segment_dim,
                                    fan_in_bound(segment_dim), rng);
  p.bias = &store.create(prefix + ".bias", attn_dim, 1);
  p.score = &store.create_uniform(prefix + ".score", attn_dim, 1, fan_in_bound(attn_dim), rng);
  return p;
}

AttentionSegments prepare_segments(Graph& g, const AttentionParams& p,
                                   const Matrix& segments_rows) {
  if (segments_rows.rows() < 1) throw ShapeError("temporal attention over zero segments");
  if (segments_rows.cols() != p.segment->value.cols()) {
    throw ShapeError("temporal attention: segment dim " +
                     std::to_string(segments_rows.cols()) + ", expected " +
                     std::to_string(p.segment->value.cols()));
  }
  AttentionSegments s;
  s.segments = g.constant(segments_rows.transpose());
  s.segment_proj = add(matmul(g.param(*p.segment), s.segments), g.param(*p.bias));
  return s;
}

Var temporal_attention(Graph& g, const AttentionParams& p, const Var& query,
                       const AttentionSegments& segs) {
  Var qp = matmul(g.param(*p.query), query);
  return attention_pool(qp, segs.segment_proj, g.param(*p.score), segs.segments);
}

Vector softmax_with_temperature(const Vector& p, double tau) {
  if (!(tau > 0.0)) throw ValidationError("temperature must be positive");
  if (p.size() == 0 || (p.array() < 0.0).any() || !p.allFinite()) {
    throw ValidationError("softmax_with_temperature needs a nonnegative finite vector");
  }
  if (p.sum() <= 0.0) throw ValidationError("softmax_with_temperature of a zero vector");
  if (tau == 1.0) return p;
  // Work in log space relative to the max entry so tiny tau does not underflow.
  const double mx = p.maxCoeff();
  Vector out(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    out(i) = p(i) > 0.0 ? std::exp((std::log(p(i)) - std::log(mx)) / tau) : 0.0;
  }
  return out / out.sum();
}

GradCheckReport grad_check(const std::function<Var(Graph&)>& loss, ParamStore& store,
                           double rel_tol, double step, double abs_floor,
                           std::size_t max_entries_per_param) {
  store.zero_grad();
  {
    Graph g(true);
    Var out = loss(g);
    g.backward(out);
  }
  std::vector<std::pair<Parameter*, Matrix>> analytic;
  store.for_each([&](Parameter& p) { analytic.emplace_back(&p, p.grad); });

  auto eval = [&]() {
    Graph g(false);
    return loss(g).scalar();
  };

  GradCheckReport report;
  report.passed = true;
  for (auto& [p, grad] : analytic) {
    const Eigen::Index n = p->value.size();
    Eigen::Index stride = 1;
    if (max_entries_per_param > 0 && static_cast<std::size_t>(n) > max_entries_per_param) {
      stride = n / static_cast<Eigen::Index>(max_entries_per_param);
    }
    for (Eigen::Index k = 0; k < n; k += stride) {
      double& x = p->value.data()[k];
      const double saved = x;
      x = saved + step;
      const double fp = eval();
      x = saved - step;
      const double fm = eval();
      x = saved;
      const double numeric = (fp - fm) / (2.0 * step);
      const double a = grad.data()[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.entries_checked;
      if (rel > report.worst_rel_error) {
        report.worst_rel_error = rel;
        report.worst_param = p->name;
        report.worst_index = k;
      }
    }
  }
  report.passed = report.worst_rel_error < rel_tol;
  store.zero_grad();
  return report;
}

}  // namespace advinfer
