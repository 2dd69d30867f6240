#pragma once

// Neural building blocks shared by the generator and the discriminators.

#include "advinfer/autodiff.hpp"
#include "advinfer/params.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace advinfer {

using TokenIds = std::vector<int>;

// Affine map y = W x + b.
struct Linear {
  Parameter* weight = nullptr;  // out x in
  Parameter* bias = nullptr;    // out x 1, may be null
  Var operator()(Graph& g, const Var& x) const;
  Eigen::Index in() const { return weight->value.cols(); }
  Eigen::Index out() const { return weight->value.rows(); }
};
Linear make_linear(ParamStore& store, const std::string& prefix, Eigen::Index in,
                   Eigen::Index out, Rng& rng, bool with_bias = true);

// Standard LSTM cell, gate order (input, forget, candidate, output).
struct LstmParams {
  Parameter* weight = nullptr;  // 4H x (input + H)
  Parameter* bias = nullptr;    // 4H x 1
  Eigen::Index input_size() const { return weight->value.cols() - hidden_size(); }
  Eigen::Index hidden_size() const { return bias->value.rows() / 4; }
};
LstmParams make_lstm(ParamStore& store, const std::string& prefix, Eigen::Index input,
                     Eigen::Index hidden, Rng& rng);

struct LstmState {
  Var h;
  Var c;
};
LstmState zero_state(Graph& g, Eigen::Index hidden, Eigen::Index batch = 1);

// c = f*c_prev + i*g ; h = o*tanh(c). Columns of x are batch items.
LstmState lstm_cell(Graph& g, const LstmParams& p, const Var& x, const LstmState& prev);

// Word embedding (E x V) followed by a forward and a backward LSTM.
struct BiLstmParams {
  Parameter* embed = nullptr;
  LstmParams forward;
  LstmParams backward;
  Eigen::Index hidden_size() const { return forward.hidden_size(); }
};
BiLstmParams make_bilstm(ParamStore& store, const std::string& prefix, Eigen::Index vocab,
                         Eigen::Index embed, Eigen::Index hidden, Rng& rng);

// Encodes each (nonempty) sentence into [h_forward_last ; h_backward_last],
// giving a 2H x batch matrix. Shorter sentences are masked so their final
// state is the one reached at their own last token.
Var bilstm_encode(Graph& g, const BiLstmParams& p, std::span<const TokenIds> batch);

// Additive temporal attention over a T x D segment matrix:
//   score_t = w^T tanh(W_q q + W_s s_t + b), output = sum_t softmax(score)_t s_t
struct AttentionParams {
  Parameter* query = nullptr;    // A x Q
  Parameter* segment = nullptr;  // A x D
  Parameter* bias = nullptr;     // A x 1
  Parameter* score = nullptr;    // A x 1
};
AttentionParams make_attention(ParamStore& store, const std::string& prefix,
                               Eigen::Index query_dim, Eigen::Index segment_dim,
                               Eigen::Index attn_dim, Rng& rng);

// Segment-side projections, computed once per clip and graph.
struct AttentionSegments {
  Var segments;      // D x T
  Var segment_proj;  // A x T (includes bias)
};
// `segments_rows` is T x D (one segment per row), T >= 1.
AttentionSegments prepare_segments(Graph& g, const AttentionParams& p,
                                   const Matrix& segments_rows);
// query: Q x B -> D x B attended vectors.
Var temporal_attention(Graph& g, const AttentionParams& p, const Var& query,
                       const AttentionSegments& segs);

// p_tau(i) = p(i)^(1/tau) / sum_j p(j)^(1/tau). tau == 1 returns p unchanged.
Vector softmax_with_temperature(const Vector& p, double tau);

struct GradCheckReport {
  bool passed = false;
  double worst_rel_error = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  std::size_t entries_checked = 0;
};

// Central-difference check of the gradients produced by backward() for the
// scalar `loss`. Relative error is |a - n| / max(|a|, |n|, abs_floor).
// max_entries_per_param > 0 checks an evenly strided subset of each tensor.
GradCheckReport grad_check(const std::function<Var(Graph&)>& loss, ParamStore& store,
                           double rel_tol = 1e-4, double step = 1e-5,
                           double abs_floor = 1e-4,
                           std::size_t max_entries_per_param = 0);

}  // namespace advinfer
