#include "advinfer/autodiff.hpp"
#include "advinfer/error.hpp"
#include "advinfer/layers.hpp"
#include "advinfer/params.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace advinfer;

namespace {

struct Fixture {
  ParamStore store;
  Rng rng{make_rng(3)};
  Parameter& p(const std::string& name, int r, int c) { return store.create_uniform(name, r, c, 1.0, rng); }
};

void expect_grad_ok(const std::function<Var(Graph&)>& f, ParamStore& s, double tol = 1e-6) {
  const GradCheckReport r = grad_check(f, s, tol);
  EXPECT_TRUE(r.passed) << "worst " << r.worst_param << "[" << r.worst_index << "] rel " << r.worst_rel_error;
  EXPECT_GT(r.entries_checked, 0u);
}

}  // namespace

TEST(Autodiff, ElementwiseOps) {
  Fixture fx;
  Parameter& a = fx.p("a", 3, 4);
  Parameter& b = fx.p("b", 3, 4);
  Parameter& col = fx.p("col", 3, 1);
  expect_grad_ok([&](Graph& g) {
    Var x = g.param(a), y = g.param(b);
    Var t = add(mul(sigmoid(x), tanh(y)), sub(scale(x, 0.3), g.param(col)));
    return sum(mul(t, t));
  }, fx.store);
}

TEST(Autodiff, MatmulSoftmaxPick) {
  Fixture fx;
  Parameter& w = fx.p("w", 5, 3);
  Parameter& x = fx.p("x", 3, 4);
  const int rows[] = {0, 4, 2, 1};
  expect_grad_ok([&](Graph& g) {
    Var z = matmul(g.param(w), g.param(x));
    return add(sum(pick(log_softmax(z), rows)), sum(mul(softmax(z), z)));
  }, fx.store);
}

TEST(Autodiff, CrossEntropyWithMask) {
  Fixture fx;
  Parameter& z = fx.p("z", 6, 3);
  const int targets[] = {1, 5, 0};
  const double weights[] = {1.0, 0.0, 2.0};
  expect_grad_ok([&](Graph& g) { return cross_entropy(g.param(z), targets, weights); }, fx.store);
  // masked column contributes nothing
  Graph g;
  const double w1[] = {1.0, 0.0, 0.0};
  const double w2[] = {1.0, 0.0, 0.0};
  const int t2[] = {1, 2, 3};
  EXPECT_DOUBLE_EQ(cross_entropy(g.constant(z.value), targets, w1).scalar(),
                   cross_entropy(g.constant(z.value), t2, w2).scalar());
}

TEST(Autodiff, ConcatSliceEmbeddingBlend) {
  Fixture fx;
  Parameter& table = fx.p("table", 4, 7);
  Parameter& a = fx.p("a", 2, 3);
  const int ids[] = {6, 0, 6};
  RowVector mask(3);
  mask << 1, 0, 1;
  expect_grad_ok([&](Graph& g) {
    Var e = embedding(g.param(table), ids);
    const Var rows[] = {e, g.param(a)};
    Var c = concat_rows(rows);
    Var s = slice_rows(c, 1, 4);
    const Var cols[] = {s, slice_cols(s, 1, 2)};
    Var cc = concat_cols(cols);
    Var bl = blend(slice_cols(cc, 0, 3), slice_cols(cc, 2, 3), mask);
    return sum(mul(bl, tanh(bl)));
  }, fx.store);
}

TEST(Autodiff, LogSigmoidStable) {
  Graph g;
  Matrix m(1, 3);
  m << -800.0, 0.0, 800.0;
  Var v = log_sigmoid(g.constant(m));
  EXPECT_NEAR(v.value()(0, 0), -800.0, 1e-9);
  EXPECT_NEAR(v.value()(0, 1), std::log(0.5), 1e-12);
  EXPECT_NEAR(v.value()(0, 2), 0.0, 1e-12);
  Fixture fx;
  Parameter& a = fx.p("a", 2, 2);
  expect_grad_ok([&](Graph& g2) { return sum(log_sigmoid(scale(g2.param(a), 3.0))); }, fx.store);
}

TEST(Autodiff, AttentionPool) {
  Fixture fx;
  Parameter& q = fx.p("q", 4, 2);
  Parameter& s = fx.p("s", 4, 5);
  Parameter& w = fx.p("w", 4, 1);
  Parameter& seg = fx.p("seg", 3, 5);
  expect_grad_ok([&](Graph& g) {
    Var out = attention_pool(g.param(q), g.param(s), g.param(w), g.param(seg));
    return sum(mul(out, out));
  }, fx.store);
}

TEST(Autodiff, LinearMapExact) {
  Fixture fx;
  Parameter& w = fx.p("w", 3, 3);
  Matrix x = Matrix::Random(3, 2);
  const GradCheckReport r = grad_check([&](Graph& g) { return sum(matmul(g.param(w), g.constant(x))); },
                                       fx.store, 1e-8);
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.worst_rel_error, 1e-8);
}

TEST(Autodiff, CorruptedGradientFails) {
  Fixture fx;
  Parameter& w = fx.p("w", 2, 2);
  // Backward deliberately doubles the true gradient.
  auto bad_square = [](const Var& a) {
    Graph& g = *a.graph();
    const int id = a.id();
    return g.push(a.value().array().square().matrix(), {a},
                  [id](Graph& gr, int self) {
                    if (gr.needs_grad(id)) gr.grad(id) += 4.0 * gr.value(id).cwiseProduct(gr.grad(self));
                  }, "bad_square");
  };
  const GradCheckReport r = grad_check([&](Graph& g) { return sum(bad_square(g.param(w))); }, fx.store);
  EXPECT_FALSE(r.passed);
}

TEST(Autodiff, NonFiniteRaises) {
  Graph g;
  Matrix m(1, 1);
  m << -1.0;
  EXPECT_THROW(log(g.constant(m)), NumericError);
}

TEST(Autodiff, ShapeMismatchRaises) {
  Graph g;
  EXPECT_THROW(matmul(g.constant(Matrix::Ones(2, 3)), g.constant(Matrix::Ones(2, 3))), ShapeError);
  EXPECT_THROW(add(g.constant(Matrix::Ones(2, 3)), g.constant(Matrix::Ones(3, 3))), ShapeError);
}

TEST(Autodiff, InferenceModeRecordsNoGrad) {
  ParamStore s;
  Parameter& p = s.create("p", 1, 1);
  p.value(0, 0) = 2.0;
  Graph g(false);
  Var v = mul(g.param(p), g.param(p));
  EXPECT_DOUBLE_EQ(v.scalar(), 4.0);
  EXPECT_FALSE(g.recording());
}
