#include "advinfer/autodiff.hpp"

#include "advinfer/error.hpp"
#include "advinfer/params.hpp"

#include <cmath>
#include <sstream>

namespace advinfer {

namespace {

Graph& graph_of(const Var& a) {
  if (!a.valid()) throw ValidationError("operation on an empty Var");
  return *a.graph();
}

Graph& graph_of(const Var& a, const Var& b) {
  Graph& g = graph_of(a);
  if (&graph_of(b) != &g) throw ValidationError("Vars belong to different graphs");
  return g;
}

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) +
                   " and " + shape_str(b));
}

// Accumulate d into the gradient of node id, if it takes gradients.
void accumulate(Graph& g, int id, const Matrix& d) {
  if (g.needs_grad(id)) g.grad(id) += d;
}

// Reduces a broadcast gradient back to the column-vector shape of b.
void accumulate_broadcast(Graph& g, int id, const Matrix& d) {
  if (!g.needs_grad(id)) return;
  Matrix& gr = g.grad(id);
  if (gr.cols() == d.cols()) {
    gr += d;
  } else {
    gr += d.rowwise().sum();
  }
}

}  // namespace

const Matrix& Var::value() const { return graph_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("scalar() on a " + shape_str(v) + " value");
  }
  return v(0, 0);
}

void check_finite(const Matrix& m, const std::string& where) {
  if (!m.allFinite()) throw NumericError("non-finite value produced by " + where);
}

Var Graph::constant(Matrix value) {
  check_finite(value, "constant");
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, nullptr, false});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Graph::param(Parameter& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) {
    return Var(this, it->second);
  }
  nodes_.push_back(Node{p.value, Matrix(), nullptr, &p, record_});
  int id = static_cast<int>(nodes_.size()) - 1;
  param_ids_.emplace(&p, id);
  return Var(this, id);
}

Var Graph::push(Matrix value, std::initializer_list<Var> parents, BackwardFn fn,
                const char* op) {
  return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
              std::move(fn), op);
}

Var Graph::push(Matrix value, std::span<const Var> parents, BackwardFn fn,
                const char* op) {
  check_finite(value, op);
  bool needs = false;
  if (record_) {
    for (const Var& p : parents) needs = needs || nodes_[p.id()].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(fn) : nullptr,
                        nullptr, needs});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Graph::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0 && n.value.size() != 0) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Graph::backward(const Var& out) {
  if (!record_) throw ValidationError("backward() on a non-recording graph");
  if (out.graph() != this) throw ValidationError("backward() on a foreign Var");
  if (out.rows() != 1 || out.cols() != 1) {
    throw ShapeError("backward() needs a 1x1 output, got " + shape_str(out.value()));
  }
  if (!nodes_[out.id()].needs_grad) return;
  grad(out.id())(0, 0) += 1.0;
  for (int id = out.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
  }
  for (Node& n : nodes_) {
    if (n.param == nullptr || n.grad.size() == 0) continue;
    check_finite(n.grad, "gradient of " + n.param->name);
    if (n.param->grad.size() == 0) {
      n.param->grad = Matrix::Zero(n.value.rows(), n.value.cols());
    }
    n.param->grad += n.grad;
    n.grad.setZero();
  }
}

// ---- ops -------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  Graph& g = graph_of(a, b);
  if (a.cols() != b.rows()) shape_fail("matmul", a.value(), b.value());
  int ia = a.id(), ib = b.id();
  return g.push(a.value() * b.value(), {a, b},
                [ia, ib](Graph& g, int self) {
                  const Matrix& d = g.grad(self);
                  if (g.needs_grad(ia)) g.grad(ia).noalias() += d * g.value(ib).transpose();
                  if (g.needs_grad(ib)) g.grad(ib).noalias() += g.value(ia).transpose() * d;
                },
                "matmul");
}

Var add(const Var& a, const Var& b) {
  Graph& g = graph_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out;
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    out = av + bv;
  } else if (av.rows() == bv.rows() && bv.cols() == 1) {
    out = av.colwise() + bv.col(0);
  } else {
    shape_fail("add", av, bv);
  }
  int ia = a.id(), ib = b.id();
  return g.push(std::move(out), {a, b},
                [ia, ib](Graph& g, int self) {
                  const Matrix& d = g.grad(self);
                  accumulate(g, ia, d);
                  accumulate_broadcast(g, ib, d);
                },
                "add");
}

Var sub(const Var& a, const Var& b) {
  Graph& g = graph_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out;
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    out = av - bv;
  } else if (av.rows() == bv.rows() && bv.cols() == 1) {
    out = av.colwise() - bv.col(0);
  } else {
    shape_fail("sub", av, bv);
  }
  int ia = a.id(), ib = b.id();
  return g.push(std::move(out), {a, b},
                [ia, ib](Graph& g, int self) {
                  const Matrix& d = g.grad(self);
                  accumulate(g, ia, d);
                  accumulate_broadcast(g, ib, -d);
                },
                "sub");
}

Var mul(const Var& a, const Var& b) {
  Graph& g = graph_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_fail("mul", av, bv);
  int ia = a.id(), ib = b.id();
  return g.push(av.cwiseProduct(bv), {a, b},
                [ia, ib](Graph& g, int self) {
                  const Matrix& d = g.grad(self);
                  if (g.needs_grad(ia)) g.grad(ia) += d.cwiseProduct(g.value(ib));
                  if (g.needs_grad(ib)) g.grad(ib) += d.cwiseProduct(g.value(ia));
                },
                "mul");
}

Var scale(const Var& a, double s) {
  Graph& g = graph_of(a);
  int ia = a.id();
  return g.push(a.value() * s, {a},
                [ia, s](Graph& g, int self) { accumulate(g, ia, g.grad(self) * s); },
                "scale");
}

Var sigmoid(const Var& a) {
  Graph& g = graph_of(a);
  Matrix out = a.value().unaryExpr([](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  int ia = a.id();
  return g.push(std::move(out), {a},
                [ia](Graph& g, int self) {
                  const Matrix& y = g.value(self);
                  g.grad(ia) += g.grad(self).cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
                },
                "sigmoid");
}

Var tanh(const Var& a) {
  Graph& g = graph_of(a);
  int ia = a.id();
  return g.push(a.value().array().tanh().matrix(), {a},
                [ia](Graph& g, int self) {
                  const Matrix& y = g.value(self);
                  g.grad(ia) += (g.grad(self).array() * (1.0 - y.array().square())).matrix();
                },
                "tanh");
}

Var log(const Var& a) {
  Graph& g = graph_of(a);
  int ia = a.id();
  return g.push(a.value().array().log().matrix(), {a},
                [ia](Graph& g, int self) {
                  g.grad(ia) += (g.grad(self).array() / g.value(ia).array()).matrix();
                },
                "log");
}

Var log_sigmoid(const Var& a) {
  Graph& g = graph_of(a);
  // log sigma(x) = -softplus(-x) = min(x, 0) - log1p(exp(-|x|))
  Matrix out = a.value().unaryExpr(
      [](double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); });
  int ia = a.id();
  return g.push(std::move(out), {a},
                [ia](Graph& g, int self) {
                  // d/dx log sigma(x) = 1 - sigma(x) = sigma(-x)
                  Matrix s = g.value(ia).unaryExpr([](double x) {
                    return x >= 0 ? std::exp(-x) / (1.0 + std::exp(-x))
                                  : 1.0 / (1.0 + std::exp(x));
                  });
                  g.grad(ia) += g.grad(self).cwiseProduct(s);
                },
                "log_sigmoid");
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ValidationError("concat_rows of nothing");
  Graph& g = graph_of(parts[0]);
  Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    graph_of(parts[0], p);
    if (p.cols() != cols) shape_fail("concat_rows", parts[0].value(), p.value());
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(r);
    r += p.rows();
  }
  return g.push(std::move(out), parts,
                [ids, offsets](Graph& g, int self) {
                  const Matrix& d = g.grad(self);
                  for (std::size_t k = 0; k < ids.size(); ++k) {
                    if (!g.needs_grad(ids[k])) continue;
                    Matrix& gk = g.grad(ids[k]);
                    gk += d.middleRows(offsets[k], gk.rows());
                  }
                },
                "concat_rows");
}

Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count) {
  Graph& g = graph_of(a);
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw ShapeError("slice_rows out of range");
  }
  int ia = a.id();
  return g.push(a.value().middleRows(begin, count), {a},
                [ia, begin, count](Graph& g, int self) {
                  g.grad(ia).middleRows(begin, count) += g.grad(self);
                },
                "slice_rows");
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ValidationError("concat_cols of nothing");
  Graph& g = graph_of(parts[0]);
  Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    graph_of(parts[0], p);
    if (p.rows() != rows) shape_fail("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(c);
    c += p.cols();
  }
  return g.push(std::move(out), parts,
                [ids, offsets](Graph& g, int self) {
                  const Matrix& d = g.grad(self);
                  for (std::size_t k = 0; k < ids.size(); ++k) {
                    if (!g.needs_grad(ids[k])) continue;
                    Matrix& gk = g.grad(ids[k]);
                    gk += d.middleCols(offsets[k], gk.cols());
                  }
                },
                "concat_cols");
}

Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index count) {
  Graph& g = graph_of(a);
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw ShapeError("slice_cols out of range");
  }
  int ia = a.id();
  return g.push(a.value().middleCols(begin, count), {a},
                [ia, begin, count](Graph& g, int self) {
                  g.grad(ia).middleCols(begin, count) += g.grad(self);
                },
                "slice_cols");
}

Var embedding(const Var& table, std::span<const int> ids) {
  Graph& g = graph_of(table);
  const Matrix& t = table.value();
  Matrix out(t.rows(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] < 0 || ids[j] >= t.cols()) {
      throw ShapeError("embedding id " + std::to_string(ids[j]) + " out of range");
    }
    out.col(static_cast<Eigen::Index>(j)) = t.col(ids[j]);
  }
  int it = table.id();
  std::vector<int> copy(ids.begin(), ids.end());
  return g.push(std::move(out), {table},
                [it, copy](Graph& g, int self) {
                  const Matrix& d = g.grad(self);
                  Matrix& gt = g.grad(it);
                  for (std::size_t j = 0; j < copy.size(); ++j) {
                    gt.col(copy[j]) += d.col(static_cast<Eigen::Index>(j));
                  }
                },
                "embedding");
}

Var sum(const Var& a) {
  Graph& g = graph_of(a);
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  int ia = a.id();
  return g.push(std::move(out), {a},
                [ia](Graph& g, int self) {
                  g.grad(ia).array() += g.grad(self)(0, 0);
                },
                "sum");
}

namespace {

Matrix log_softmax_value(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double mx = x.col(j).maxCoeff();
    double lse = mx + std::log((x.col(j).array() - mx).exp().sum());
    out.col(j) = x.col(j).array() - lse;
  }
  return out;
}

}  // namespace

Var softmax(const Var& a) {
  Graph& g = graph_of(a);
  Matrix out = log_softmax_value(a.value()).array().exp().matrix();
  int ia = a.id();
  return g.push(std::move(out), {a},
                [ia](Graph& g, int self) {
                  const Matrix& y = g.value(self);
                  const Matrix& d = g.grad(self);
                  Matrix& ga = g.grad(ia);
                  for (Eigen::Index j = 0; j < y.cols(); ++j) {
                    double dot = y.col(j).dot(d.col(j));
                    ga.col(j).array() += y.col(j).array() * (d.col(j).array() - dot);
                  }
                },
                "softmax");
}

Var log_softmax(const Var& a) {
  Graph& g = graph_of(a);
  int ia = a.id();
  return g.push(log_softmax_value(a.value()), {a},
                [ia](Graph& g, int self) {
                  const Matrix& y = g.value(self);
                  const Matrix& d = g.grad(self);
                  Matrix& ga = g.grad(ia);
                  for (Eigen::Index j = 0; j < y.cols(); ++j) {
                    double s = d.col(j).sum();
                    ga.col(j).array() += d.col(j).array() - y.col(j).array().exp() * s;
                  }
                },
                "log_softmax");
}

Var pick(const Var& a, std::span<const int> rows) {
  Graph& g = graph_of(a);
  const Matrix& av = a.value();
  if (static_cast<Eigen::Index>(rows.size()) != av.cols()) {
    throw ShapeError("pick: one row index per column required");
  }
  Matrix out(1, av.cols());
  for (Eigen::Index j = 0; j < av.cols(); ++j) {
    if (rows[j] < 0 || rows[j] >= av.rows()) throw ShapeError("pick: row out of range");
    out(0, j) = av(rows[j], j);
  }
  int ia = a.id();
  std::vector<int> copy(rows.begin(), rows.end());
  return g.push(std::move(out), {a},
                [ia, copy](Graph& g, int self) {
                  const Matrix& d = g.grad(self);
                  Matrix& ga = g.grad(ia);
                  for (std::size_t j = 0; j < copy.size(); ++j) {
                    ga(copy[j], static_cast<Eigen::Index>(j)) += d(0, static_cast<Eigen::Index>(j));
                  }
                },
                "pick");
}

Var cross_entropy(const Var& logits, std::span<const int> targets,
                  std::span<const double> weights) {
  Graph& g = graph_of(logits);
  const Matrix& x = logits.value();
  if (static_cast<Eigen::Index>(targets.size()) != x.cols()) {
    throw ShapeError("cross_entropy: one target per column required");
  }
  if (!weights.empty() && weights.size() != targets.size()) {
    throw ShapeError("cross_entropy: weight count mismatch");
  }
  Matrix lsm = log_softmax_value(x);
  std::vector<double> w(targets.size(), 1.0);
  if (!weights.empty()) w.assign(weights.begin(), weights.end());
  double loss = 0.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (targets[j] < 0 || targets[j] >= x.rows()) {
      throw ShapeError("cross_entropy: target out of range");
    }
    if (w[j] != 0.0) loss -= w[j] * lsm(targets[j], j);
  }
  Matrix out(1, 1);
  out(0, 0) = loss;
  int il = logits.id();
  std::vector<int> t(targets.begin(), targets.end());
  return g.push(std::move(out), {logits},
                [il, t, w, lsm](Graph& g, int self) {
                  double d = g.grad(self)(0, 0);
                  Matrix& gl = g.grad(il);
                  for (std::size_t j = 0; j < t.size(); ++j) {
                    if (w[j] == 0.0) continue;
                    auto col = static_cast<Eigen::Index>(j);
                    gl.col(col).array() += d * w[j] * lsm.col(col).array().exp();
                    gl(t[j], col) -= d * w[j];
                  }
                },
                "cross_entropy");
}

Var blend(const Var& a, const Var& b, const RowVector& mask) {
  Graph& g = graph_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols() || mask.size() != av.cols()) {
    shape_fail("blend", av, bv);
  }
  Matrix out = bv;
  for (Eigen::Index j = 0; j < av.cols(); ++j) {
    if (mask(j) != 0.0) out.col(j) = av.col(j);
  }
  int ia = a.id(), ib = b.id();
  return g.push(std::move(out), {a, b},
                [ia, ib, mask](Graph& g, int self) {
                  const Matrix& d = g.grad(self);
                  for (Eigen::Index j = 0; j < d.cols(); ++j) {
                    int target = mask(j) != 0.0 ? ia : ib;
                    if (g.needs_grad(target)) g.grad(target).col(j) += d.col(j);
                  }
                },
                "blend");
}

Matrix attention_weights(const Matrix& query_proj, const Matrix& segment_proj,
                         const Matrix& w) {
  const Eigen::Index T = segment_proj.cols();
  const Eigen::Index B = query_proj.cols();
  Matrix alpha(T, B);
  for (Eigen::Index j = 0; j < B; ++j) {
    for (Eigen::Index t = 0; t < T; ++t) {
      alpha(t, j) =
          w.col(0).dot((query_proj.col(j) + segment_proj.col(t)).array().tanh().matrix());
    }
    double mx = alpha.col(j).maxCoeff();
    alpha.col(j) = (alpha.col(j).array() - mx).exp();
    alpha.col(j) /= alpha.col(j).sum();
  }
  return alpha;
}

Var attention_pool(const Var& query_proj, const Var& segment_proj, const Var& w,
                   const Var& segments) {
  Graph& g = graph_of(query_proj, segment_proj);
  graph_of(query_proj, w);
  graph_of(query_proj, segments);
  const Matrix& qp = query_proj.value();
  const Matrix& sp = segment_proj.value();
  const Matrix& wv = w.value();
  const Matrix& seg = segments.value();
  if (sp.cols() < 1) throw ShapeError("attention over zero segments");
  if (qp.rows() != sp.rows() || wv.rows() != qp.rows() || wv.cols() != 1 ||
      seg.cols() != sp.cols()) {
    throw ShapeError("attention_pool: inconsistent shapes");
  }
  Matrix alpha = attention_weights(qp, sp, wv);
  Matrix out = seg * alpha;
  int iq = query_proj.id(), is = segment_proj.id(), iw = w.id(), ig = segments.id();
  return g.push(std::move(out), {query_proj, segment_proj, w, segments},
                [iq, is, iw, ig, alpha](Graph& g, int self) {
                  const Matrix& d = g.grad(self);
                  const Matrix& qp = g.value(iq);
                  const Matrix& sp = g.value(is);
                  const Matrix& wv = g.value(iw);
                  const Matrix& seg = g.value(ig);
                  const Eigen::Index T = sp.cols();
                  if (g.needs_grad(ig)) g.grad(ig).noalias() += d * alpha.transpose();
                  // d alpha(t, j) = seg(:, t) . d(:, j)
                  Matrix dalpha = seg.transpose() * d;
                  for (Eigen::Index j = 0; j < d.cols(); ++j) {
                    double mean = alpha.col(j).dot(dalpha.col(j));
                    for (Eigen::Index t = 0; t < T; ++t) {
                      double de = alpha(t, j) * (dalpha(t, j) - mean);
                      if (de == 0.0) continue;
                      Vector u = (qp.col(j) + sp.col(t)).array().tanh();
                      if (g.needs_grad(iw)) g.grad(iw).col(0) += de * u;
                      Vector dz = de * wv.col(0).array() * (1.0 - u.array().square());
                      if (g.needs_grad(iq)) g.grad(iq).col(j) += dz;
                      if (g.needs_grad(is)) g.grad(is).col(t) += dz;
                    }
                  }
                },
                "attention_pool");
}

}  // namespace advinfer
