#pragma once

// Reverse-mode automatic differentiation over dense column-batched matrices.
//
// Every value is an Eigen matrix whose columns are independent batch items.
// A Graph records operations as they are evaluated; backward() walks the
// tape in reverse and accumulates gradients into the Parameters that were
// bound with Graph::param(). Non-finite values raise NumericError at the
// op that produced them.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace advinfer {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct Parameter;
class Graph;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  // Convenience for 1x1 values.
  double scalar() const;

  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  // With record == false no backward closures are stored (inference mode).
  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  Var param(Parameter& p);

  // Seeds d(out)/d(out) = 1 (out must be 1x1), propagates, then adds the
  // accumulated leaf gradients into Parameter::grad.
  void backward(const Var& out);

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  // -- op construction interface --
  using BackwardFn = std::function<void(Graph&, int)>;
  Var push(Matrix value, std::initializer_list<Var> parents, BackwardFn fn,
           const char* op);
  Var push(Matrix value, std::span<const Var> parents, BackwardFn fn,
           const char* op);
  const Matrix& value(int id) const { return nodes_[id].value; }
  // Gradient slot of a node, zero-initialised on first access.
  Matrix& grad(int id);
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };
  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_ids_;
};

// Throws NumericError naming `where` if m holds NaN or Inf.
void check_finite(const Matrix& m, const std::string& where);

// ---- primitive ops ---------------------------------------------------------

Var matmul(const Var& a, const Var& b);
// Elementwise; b may be a column vector broadcast across a's columns.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var log(const Var& a);
// log(sigmoid(a)), computed without overflow.
Var log_sigmoid(const Var& a);

Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index count);

// Columns of `table` (E x V) selected by ids: result E x ids.size().
Var embedding(const Var& table, std::span<const int> ids);

// Sum of all entries (1x1).
Var sum(const Var& a);
// Per-column softmax / log-softmax.
Var softmax(const Var& a);
Var log_softmax(const Var& a);
// 1 x n row with entries a(rows[j], j).
Var pick(const Var& a, std::span<const int> rows);
// -sum_j weight_j * log_softmax(logits)(target_j, j). Weight 0 masks a column.
Var cross_entropy(const Var& logits, std::span<const int> targets,
                  std::span<const double> weights = {});
// mask (1 x n, entries 0/1): column j is a(:,j) where mask_j = 1, else b(:,j).
Var blend(const Var& a, const Var& b, const RowVector& mask);

// Additive attention pooling shared across batch columns.
//   score(t, j) = w^T tanh(query_proj(:, j) + segment_proj(:, t))
//   out(:, j)   = sum_t softmax_t(score(:, j)) * segments(:, t)
// query_proj: A x B, segment_proj: A x T, w: A x 1, segments: D x T.
Var attention_pool(const Var& query_proj, const Var& segment_proj, const Var& w,
                   const Var& segments);
// Attention weights (T x B) for the same inputs, value only.
Matrix attention_weights(const Matrix& query_proj, const Matrix& segment_proj,
                         const Matrix& w);

}  // namespace advinfer
