#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "csi/autodiff.hpp"
#include "csi/error.hpp"

using namespace csi;
using namespace csi::ad;

namespace {

constexpr int kPoints = 20;
constexpr double kTolerance = 1e-4;

Matrix random_matrix(std::mt19937_64& rng, Index r, Index c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Reduces any output to a scalar with fixed random weights so every output
// entry contributes a distinct gradient.
Var weighted_sum(Tape& t, Var y, std::uint64_t salt) {
  std::mt19937_64 rng(salt);
  return dot(y, t.constant(random_matrix(rng, y.rows(), y.cols())));
}

void check(const char* name, Index r, Index c, const std::function<Var(Tape&, Var)>& f, double lo = -1.0,
           double hi = 1.0) {
  std::mt19937_64 rng(std::hash<std::string>{}(name));
  for (int p = 0; p < kPoints; ++p) {
    const Matrix x = random_matrix(rng, r, c, lo, hi);
    const double err = grad_check([&](Tape& t, Var v) { return weighted_sum(t, f(t, v), 99); }, x);
    EXPECT_LT(err, kTolerance) << name << " point " << p;
  }
}

}  // namespace

TEST(GradCheck, ElementwiseAndLinear) {
  std::mt19937_64 rng(1);
  const Matrix w = random_matrix(rng, 4, 3), other = random_matrix(rng, 3, 4), bias = random_matrix(rng, 1, 4);
  check("matmul_left", 3, 4, [&](Tape& t, Var x) { return matmul(x, t.constant(w)); });
  check("matmul_right", 4, 3, [&](Tape& t, Var x) { return matmul(t.constant(other), x); });
  check("transpose", 3, 4, [](Tape&, Var x) { return transpose(x); });
  check("add", 3, 4, [&](Tape& t, Var x) { return add(x, t.constant(other)); });
  check("sub", 3, 4, [&](Tape& t, Var x) { return sub(t.constant(other), x); });
  check("add_bias_x", 3, 4, [&](Tape& t, Var x) { return add_bias(x, t.constant(bias)); });
  check("add_bias_b", 1, 4, [&](Tape& t, Var b) { return add_bias(t.constant(other), b); });
  check("mul", 3, 4, [&](Tape& t, Var x) { return mul(x, t.constant(other)); });
  check("mul_self", 3, 4, [](Tape&, Var x) { return mul(x, x); });
  check("div_num", 3, 4, [&](Tape& t, Var x) { return div(x, t.constant(other.array().abs() + 0.5)); });
  check("div_den", 3, 4, [&](Tape& t, Var x) { return div(t.constant(other), x); }, 0.5, 2.0);
  check("scale", 3, 4, [](Tape&, Var x) { return scale(x, -2.5); });
  check("mul_constant", 3, 4, [&](Tape&, Var x) { return mul_constant(x, other); });
  check("relu", 3, 4, [](Tape&, Var x) { return relu(x); });
  check("concat", 3, 2, [&](Tape& t, Var x) { return concat(x, t.constant(other)); });
  check("concat_many", 3, 2, [&](Tape& t, Var x) {
    const Var parts[] = {t.constant(other), x, x};
    return concat(parts);
  });
  const Index picks[] = {2, 0, 2, 1};
  check("gather_rows", 3, 4, [&](Tape&, Var x) { return gather_rows(x, picks); });
  check("stack_rows", 1, 4, [&](Tape& t, Var x) {
    const Var rows[] = {x, t.constant(bias), x};
    return stack_rows(rows);
  });
}

TEST(GradCheck, Reductions) {
  check("softmax", 3, 5, [](Tape&, Var x) { return softmax(x); }, -3.0, 3.0);
  check("log", 3, 4, [](Tape&, Var x) { return log(x); }, 0.2, 3.0);
  check("exp", 3, 4, [](Tape&, Var x) { return exp(x); });
  check("l2_norm", 3, 4, [](Tape&, Var x) { return l2_norm(x); });
  check("dot", 3, 4, [](Tape&, Var x) { return dot(x, x); });
  check("scalar_divide", 3, 4, [](Tape&, Var x) { return scalar_divide(x, 3.0); });
  check("scalar_divide_var", 1, 1, [](Tape& t, Var x) {
    return scalar_divide(t.constant(Matrix::Constant(2, 2, 1.5)), x);
  }, 0.5, 2.0);
  check("sum", 3, 4, [](Tape&, Var x) { return sum(x); });
  check("row_sum", 3, 4, [](Tape&, Var x) { return row_sum(x); });
  check("global_max_pool", 6, 3, [](Tape&, Var x) { return global_max_pool(x); });
  check("max_pool1d", 7, 3, [](Tape&, Var x) { return max_pool1d(x, 3, 2); });
  const Index offsets[] = {0, 2, 5, 7};
  check("segment_max_pool", 7, 3, [&](Tape&, Var x) { return segment_max_pool(x, offsets); });
  const Matrix labels = (Matrix(4, 1) << 1, 0, 0, 1).finished();
  check("bce", 4, 1, [&](Tape&, Var x) { return weighted_bce_with_logits(x, labels, 3.0); }, -4.0, 4.0);
}

TEST(GradCheck, ConvolutionAndGraph) {
  std::mt19937_64 rng(2);
  const Matrix w = random_matrix(rng, 3 * 2, 4), b = random_matrix(rng, 1, 4), x0 = random_matrix(rng, 9, 2);
  check("conv1d_x", 9, 2, [&](Tape& t, Var x) { return conv1d(x, t.constant(w), t.constant(b), 3, 2); });
  check("conv1d_w", 6, 4, [&](Tape& t, Var ww) { return conv1d(t.constant(x0), ww, t.constant(b), 3); });
  check("conv1d_b", 1, 4, [&](Tape& t, Var bb) { return conv1d(t.constant(x0), t.constant(w), bb, 3); });
  const Matrix x1 = random_matrix(rng, 10, 2);
  check("conv1d_segments_x", 10, 2,
        [&](Tape& t, Var x) { return conv1d_segments(x, t.constant(w), t.constant(b), 3, 5); });
  check("conv1d_segments_w", 6, 4,
        [&](Tape& t, Var ww) { return conv1d_segments(t.constant(x1), ww, t.constant(b), 3, 5); });
  const int codes[] = {1, 3, 0, 3, 2};
  check("embedding", 4, 3, [&](Tape&, Var table) { return embedding(table, codes); });
  const std::pair<int, int> edges[] = {{0, 1}, {1, 2}, {2, 3}, {1, 3}};
  const Matrix a = normalized_adjacency(4, edges);
  check("aggregate_dense", 4, 3, [&](Tape&, Var x) { return neighbor_aggregate(a, x); });
  const SparseMatrix s = a.sparseView();
  check("aggregate_sparse", 4, 3, [&](Tape&, Var x) { return neighbor_aggregate(s, x); });
}

TEST(Autodiff, ReluExample) {
  Tape t;
  const Var x = t.variable((Matrix(1, 3) << -1.0, 0.0, 2.0).finished());
  const Var y = relu(x);
  EXPECT_EQ(y.value(), (Matrix(1, 3) << 0.0, 0.0, 2.0).finished());
  t.backward(sum(y));
  EXPECT_EQ(x.grad(), (Matrix(1, 3) << 0.0, 0.0, 1.0).finished());
}

TEST(Autodiff, ConcatExample) {
  Tape t;
  const Var a = t.variable((Matrix(2, 1) << 1, 2).finished());
  const Var b = t.variable((Matrix(2, 2) << 3, 4, 5, 6).finished());
  const Var c = concat(a, b);
  EXPECT_EQ(c.value(), (Matrix(2, 3) << 1, 3, 4, 2, 5, 6).finished());
  t.backward(dot(c, t.constant((Matrix(2, 3) << 1, 2, 3, 4, 5, 6).finished())));
  EXPECT_EQ(a.grad(), (Matrix(2, 1) << 1, 4).finished());
  EXPECT_EQ(b.grad(), (Matrix(2, 2) << 2, 3, 5, 6).finished());
  Tape u;
  EXPECT_THROW(concat(u.constant(Matrix::Zero(2, 1)), u.constant(Matrix::Zero(3, 1))), Error);
}

TEST(Autodiff, PathGraphAggregate) {
  const std::pair<int, int> edge[] = {{0, 1}};
  const Matrix a = normalized_adjacency(2, edge);
  Tape t;
  const Var y = neighbor_aggregate(a, t.constant((Matrix(2, 1) << 1, 3).finished()));
  EXPECT_TRUE(y.value().isApprox((Matrix(2, 1) << 2, 2).finished(), 1e-12));
}

TEST(Autodiff, RegularGraphRowsSumToOne) {
  // On a k-regular graph every row of the normalized adjacency is uniform.
  std::vector<std::pair<int, int>> cycle;
  for (int i = 0; i < 7; ++i) cycle.emplace_back(i, (i + 1) % 7);
  const Matrix a = normalized_adjacency(7, cycle);
  for (Index r = 0; r < 7; ++r) EXPECT_NEAR(a.row(r).sum(), 1.0, 1e-12);
  EXPECT_TRUE(a.isApprox(a.transpose()));
  const Matrix isolated = normalized_adjacency(3, {});
  EXPECT_TRUE(isolated.isIdentity());
}

TEST(Autodiff, SquareGradient) {
  Tape t;
  const Var x = t.variable(Matrix::Constant(1, 1, 3.0));
  const Var y = mul(x, x);
  EXPECT_DOUBLE_EQ(y.item(), 9.0);
  t.backward(y);
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 6.0);
}

TEST(Autodiff, ParameterAccumulatesAcrossTapes) {
  Parameter p("w", Matrix::Constant(1, 1, 2.0));
  for (int i = 0; i < 2; ++i) {
    Tape t;
    const Var w = t.parameter(p);
    t.backward(mul(w, w));
  }
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 8.0);
  p.zero_grad();
  EXPECT_DOUBLE_EQ(p.grad(0, 0), 0.0);
}

TEST(Autodiff, NonFiniteValuesAreRejected) {
  Tape t;
  auto kind = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::ConfigError;
  };
  EXPECT_EQ(kind([&] { t.constant(Matrix::Constant(1, 1, std::nan(""))); }), ErrorKind::NonFiniteValue);
  EXPECT_EQ(kind([&] { log(t.constant(Matrix::Zero(1, 1))); }), ErrorKind::NonFiniteValue);
  EXPECT_EQ(kind([&] { matmul(t.constant(Matrix::Zero(2, 3)), t.constant(Matrix::Zero(2, 3))); }),
            ErrorKind::ShapeMismatch);
  EXPECT_EQ(kind([&] { t.backward(t.variable(Matrix::Zero(2, 2))); }), ErrorKind::ShapeMismatch);
}

TEST(Autodiff, BackwardVisitsOnlyAncestors) {
  Tape t;
  const Var x = t.variable(Matrix::Constant(1, 1, 1.0));
  const Var unrelated = exp(t.variable(Matrix::Constant(1, 1, 2.0)));
  (void)unrelated;
  const Var y = scale(x, 2.0);
  t.backward(y);
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 2.0);
  EXPECT_LE(t.visited(), 2u);
}
