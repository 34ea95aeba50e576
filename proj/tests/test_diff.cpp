#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "gen.hpp"
#include "gradcheck.hpp"
#include "onh/diff.hpp"

using namespace onh;
using namespace onh::diff;

namespace {

Matrix random_matrix(gen::Rng& r, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.normal(scale);
  return m;
}

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST(Ops, ReluExample) {
  Graph g;
  auto y = g.relu(g.constant(row({-1, 0, 2})));
  EXPECT_EQ(g.value(y), row({0, 0, 2}));
}

TEST(Ops, SoftmaxOfZerosIsUniform) {
  Graph g;
  auto y = g.softmax(g.constant(row({0, 0, 0, 0})));
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(g.value(y)(0, i), 0.25);
}

TEST(Ops, SoftmaxSumsToOneAndIgnoresShift) {
  gen::Rng r(1);
  for (int rep = 0; rep < 100; ++rep) {
    Matrix x = random_matrix(r, 3, 6, 5.0);
    const double shift = r.uniform(-50, 50);
    Graph g;
    const Matrix a = g.value(g.softmax(g.constant(x)));
    const Matrix b = g.value(g.softmax(g.constant((x.array() + shift).matrix())));
    for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(a.row(i).sum(), 1.0, 1e-12);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-12);
  }
  // Large logits stay finite.
  Graph g;
  const Matrix big = g.value(g.softmax(g.constant(row({1000, 999, -1000}))));
  EXPECT_TRUE(big.allFinite());
  EXPECT_NEAR(big(0, 0), 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
}

TEST(Ops, DenseMatchesTripleLoop) {
  gen::Rng r(2);
  for (int rep = 0; rep < 20; ++rep) {
    const auto n = r.integer(1, 40), in = r.integer(1, 20), out = r.integer(1, 20);
    Matrix x = random_matrix(r, n, in), w = random_matrix(r, in, out), b = random_matrix(r, 1, out);
    Graph g;
    const Matrix y = g.value(g.dense(g.constant(x), g.constant(w), g.constant(b)));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < out; ++j) {
        double acc = b(0, j);
        for (int k = 0; k < in; ++k) acc += x(i, k) * w(k, j);
        EXPECT_NEAR(y(i, j), acc, 1e-12);
      }
  }
}

TEST(Ops, ProductRowsDependOnlyOnTheirInputRow) {
  // A row of a multi-row product must not change with the rest of the batch.
  gen::Rng r(3);
  const Matrix w = random_matrix(r, 64, 33);
  const Matrix x = random_matrix(r, 37, 64);
  Graph g;
  const Matrix full = g.value(g.matmul(g.constant(x), g.constant(w)));
  for (int rep = 0; rep < 30; ++rep) {
    const auto perm = gen::permutation(r, 37);
    const std::size_t n = 2 + r.index(35);
    Matrix sub(static_cast<Eigen::Index>(n), 64);
    for (std::size_t i = 0; i < n; ++i) sub.row(i) = x.row(perm[i]);
    const Matrix out = g.value(g.matmul(g.constant(sub), g.constant(w)));
    for (std::size_t i = 0; i < n; ++i) ASSERT_TRUE(bit_equal(Matrix(out.row(i)), Matrix(full.row(perm[i])))) << rep;
  }
}

TEST(Ops, MaxOverSetRoutesToLowestIndexOnTies) {
  Matrix x(3, 2);
  x << 1, 5, 4, 5, 4, 2;
  Graph g;
  Var v = g.variable(x);
  Var m = g.max_over_set(v);
  EXPECT_EQ(g.value(m), row({4, 5}));
  g.backward(g.sum(m));
  Matrix expect = Matrix::Zero(3, 2);
  expect(1, 0) = 1;
  expect(0, 1) = 1;
  EXPECT_EQ(g.grad(v), expect);
}

TEST(Ops, ShapeMismatchNamesOpAndShapes) {
  Graph g;
  auto a = g.constant(Matrix::Zero(2, 3));
  auto b = g.constant(Matrix::Zero(2, 4));
  try {
    g.matmul(a, b);
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("(2, 3)"), std::string::npos);
    EXPECT_NE(msg.find("(2, 4)"), std::string::npos);
  }
  EXPECT_THROW(g.add(a, b), ValidationError);
  EXPECT_THROW(g.mul(a, b), ValidationError);
  EXPECT_THROW(g.sub(a, b), ValidationError);
  EXPECT_THROW(g.concat_cols(a, g.constant(Matrix::Zero(3, 1))), ValidationError);
  EXPECT_THROW(g.concat_rows({a, b}), ValidationError);
  EXPECT_THROW(g.add_row(a, g.constant(Matrix::Zero(1, 4))), ValidationError);
  EXPECT_THROW(g.dense(a, g.constant(Matrix::Zero(3, 2)), g.constant(Matrix::Zero(1, 3))), ValidationError);
  EXPECT_THROW(g.reshape(a, 4, 2), ValidationError);
  EXPECT_THROW(g.max_over_set(g.constant(Matrix::Zero(0, 3))), ValidationError);
}

TEST(Backward, LinearCaseIsOuterProduct) {
  gen::Rng r(4);
  ParamStore store(9);
  store.add("W", Tensor{{4, 3}, random_matrix(r, 4, 3)});
  const Matrix x = random_matrix(r, 5, 4);
  Graph g(&store);
  Var loss = g.sum(g.matmul(g.constant(x), g.param("W")));
  Gradients grads(store);
  g.backward(loss, &grads);
  // d/dW sum(x W) = x^T 1 = column sums of x repeated across outputs.
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(grads[0](i, j), x.col(i).sum(), 1e-14);
}

TEST(Backward, ReluGradientAtNegativeInputIsZero) {
  Graph g;
  Var x = g.variable(row({-3, -0.5, 2}));
  g.backward(g.sum(g.relu(x)));
  EXPECT_EQ(g.grad(x), row({0, 0, 1}));
}

TEST(Backward, NonScalarLossRejected) {
  Graph g;
  Var x = g.variable(row({1, 2}));
  EXPECT_THROW(g.backward(x), ValidationError);
}

TEST(Backward, NonFiniteValuesTrip) {
  Graph g;
  EXPECT_THROW(g.constant(row({1, NAN})), NonFiniteError);
  EXPECT_THROW(g.constant(row({INFINITY})), NonFiniteError);
  Var x = g.variable(row({1e300, 1e300}));
  Var s = g.sum_squares(x);  // overflows to inf
  EXPECT_THROW(g.backward(s), NonFiniteError);
}

TEST(Backward, ComposedNetMatchesFiniteDifferences) {
  for (std::uint64_t seed : {11, 12, 13}) {
    gen::Rng r(seed);
    ParamStore store(seed);
    store.add_glorot("W1", 3, 6);
    store.add("b1", Tensor{{6}, random_matrix(r, 1, 6, 0.1)});
    store.add_glorot("W2", 9, 4);
    store.add("b2", Tensor{{4}, random_matrix(r, 1, 4, 0.1)});
    store.add("scale", Tensor{{4}, random_matrix(r, 1, 4)});
    Matrix x = random_matrix(r, 7, 3);
    Matrix y = random_matrix(r, 2, 4);

    std::vector<gradcheck::Target> targets{{"x", &x}, {"y", &y}};
    for (std::size_t i = 0; i < store.size(); ++i) targets.push_back({store.name(i), &store.tensor(i).values});

    auto build = [&](Graph& g) {
      Var vx = g.variable(x), vy = g.variable(y);
      Var h = g.relu(g.dense(vx, g.param("W1"), g.param("b1")));
      h = g.concat_cols(h, vx);
      Var z = g.dense(h, g.param("W2"), g.param("b2"));
      Var p = g.softmax(z);
      Var pooled = g.max_over_set(g.mul(z, g.add_row(p, g.param("scale"))));
      // (2, 4) -> (4, 2) -> transpose -> (2, 4) exercises reshape and transpose.
      Var vy2 = g.transpose(g.reshape(vy, 4, 2));
      Var t = g.concat_rows({pooled, vy2});
      Var loss = g.add(g.mean(g.mul(t, t)), g.scale(g.sum(g.matmul(t, g.transpose(t))), 0.1));
      loss = g.add(loss, g.scale(g.sum_squares(g.reshape(t, 4, 3)), 0.05));
      std::vector<Var> vars{vx, vy};
      for (std::size_t i = 0; i < store.size(); ++i) vars.push_back(g.param(i));
      return std::make_pair(loss, vars);
    };
    const auto rep = gradcheck::check(&store, targets, build, 1000, seed);
    EXPECT_TRUE(rep.passed()) << "seed " << seed << ": " << rep.worst << " kinks " << rep.kinks;
    EXPECT_GT(rep.checked, 90u);
  }
}

TEST(Backward, F32GraphTracksF64) {
  gen::Rng r(5);
  ParamStore store(5);
  store.add_glorot("W", 3, 8);
  store.add("b", Tensor{{8}, random_matrix(r, 1, 8, 0.1)});
  const Matrix x = random_matrix(r, 16, 3);
  Gradients g64(store);
  Graph a(&store);
  a.backward(a.mean(a.relu(a.dense(a.constant(x), a.param(0), a.param(1)))), &g64);

  ParamMirror<float> mirror(store);
  BasicGraph<float> b(&mirror);
  BasicGradients<float> g32(store);
  b.backward(b.mean(b.relu(b.dense(b.constant(x.cast<float>()), b.param(0), b.param(1)))), &g32);
  Gradients up(store);
  up += g32;
  for (std::size_t i = 0; i < store.size(); ++i) EXPECT_LT((up[i] - g64[i]).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(ParamStoreTest, NamesUniqueAndOrderStable) {
  ParamStore s(1);
  s.add_glorot("a", 2, 3);
  s.add_zeros("c", {3});
  s.add_glorot("b", 3, 1);
  EXPECT_THROW(s.add_zeros("a", {1}), ValidationError);
  EXPECT_EQ(s.name(0), "a");
  EXPECT_EQ(s.name(1), "c");
  EXPECT_EQ(s.name(2), "b");
  EXPECT_EQ(s.index_of("b"), 2u);
  EXPECT_THROW(s.index_of("z"), ValidationError);
  EXPECT_EQ(s.scalar_count(), 6u + 3u + 3u);
  EXPECT_EQ(s.tensor(1).shape, (Shape{3}));
  EXPECT_EQ(s.tensor(0).values.rows(), 2);
}

TEST(ParamStoreTest, GlorotBoundsAndSeedDeterminism) {
  ParamStore a(7), b(7), c(8);
  for (auto* s : {&a, &b, &c}) s->add_glorot("W", 40, 60);
  const double bound = std::sqrt(6.0 / 100.0);
  EXPECT_LE(a.tensor(0).values.cwiseAbs().maxCoeff(), bound);
  EXPECT_GT(a.tensor(0).values.cwiseAbs().maxCoeff(), 0.95 * bound);
  EXPECT_NEAR(a.tensor(0).values.mean(), 0.0, 0.02);
  EXPECT_TRUE(bit_equal(a.tensor(0).values, b.tensor(0).values));
  EXPECT_FALSE(bit_equal(a.tensor(0).values, c.tensor(0).values));
}

TEST(Adam, DefaultHyperparameters) {
  AdamConfig c;
  EXPECT_EQ(c.lr, 0.001);
  EXPECT_EQ(c.beta1, 0.9);
  EXPECT_EQ(c.beta2, 0.999);
  EXPECT_EQ(c.eps, 1e-8);
}

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
  ParamStore s(3);
  s.add_glorot("W", 4, 4);
  const Matrix before = s.tensor(0).values;
  AdamState st(s, {});
  Gradients g(s);
  for (int i = 0; i < 5; ++i) adam_step(s, g, st);
  EXPECT_TRUE(bit_equal(before, s.tensor(0).values));
  EXPECT_EQ(st.t, 5u);
}

TEST(Adam, FirstStepIsSignStepOfLearningRate) {
  ParamStore s;
  s.add("p", Tensor{{1}, Matrix::Constant(1, 1, 2.0)});
  AdamState st(s, {});
  Gradients g(s);
  g[0](0, 0) = 1.0;
  adam_step(s, g, st);
  const double delta = s.tensor(0).values(0, 0) - 2.0;
  EXPECT_LT(delta, 0);
  EXPECT_GE(std::abs(delta), 0.99 * 0.001);
  EXPECT_LE(std::abs(delta), 0.001);
}

TEST(Adam, ThreeStepsOnQuadraticMatchHandRecurrence) {
  // f(p) = 0.5 * a * (p - c)^2 per coordinate.
  const double a[2] = {3.0, 0.5}, c[2] = {-1.0, 4.0};
  ParamStore s;
  s.add("p", Tensor{{2}, row({0.7, -2.0})});
  AdamConfig cfg{0.05, 0.8, 0.95, 1e-6};
  AdamState st(s, cfg);

  double p[2] = {0.7, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 3; ++t) {
    Gradients g(s);
    for (int k = 0; k < 2; ++k) g[0](0, k) = a[k] * (s.tensor(0).values(0, k) - c[k]);
    adam_step(s, g, st);
    for (int k = 0; k < 2; ++k) {
      const double gk = a[k] * (p[k] - c[k]);
      m[k] = 0.8 * m[k] + 0.2 * gk;
      v[k] = 0.95 * v[k] + 0.05 * gk * gk;
      const double mh = m[k] / (1 - std::pow(0.8, t)), vh = v[k] / (1 - std::pow(0.95, t));
      p[k] -= 0.05 * mh / (std::sqrt(vh) + 1e-6);
    }
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(s.tensor(0).values(0, k), p[k], 1e-12) << "t=" << t;
  }
  EXPECT_EQ(st.t, 3u);
}

TEST(Adam, ShapeMismatchRejected) {
  ParamStore s;
  s.add_zeros("p", {3});
  AdamState st(s, {});
  Gradients g(s);
  g[0] = Matrix::Zero(1, 4);
  EXPECT_THROW(adam_step(s, g, st), ValidationError);
  Gradients empty;
  EXPECT_THROW(adam_step(s, empty, st), ValidationError);
  EXPECT_EQ(st.t, 0u);
}

TEST(Adam, NonFiniteUpdateTrips) {
  ParamStore s;
  s.add_zeros("p", {1});
  AdamState st(s, {});
  Gradients g(s);
  g[0](0, 0) = NAN;
  EXPECT_THROW(adam_step(s, g, st), NonFiniteError);
}

TEST(Gradients, ReductionRequiresAlignment) {
  ParamStore a, b;
  a.add_zeros("x", {2});
  b.add_zeros("x", {2});
  b.add_zeros("y", {2});
  Gradients ga(a), gb(b);
  EXPECT_THROW(ga += gb, ValidationError);
}
