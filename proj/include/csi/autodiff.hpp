#pragma once

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Tape records primitive applications in creation order, which is also a
// topological order: every parent has a smaller index than its child. A Var is
// a lightweight handle (tape pointer + node index). Trainable state lives in
// Parameter objects that outlive any single tape; backward() accumulates into
// Parameter::grad.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace csi::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Persistent trainable tensor.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {
    grad = Matrix::Zero(value.rows(), value.cols());
  }

  void zero_grad() { grad = Matrix::Zero(value.rows(), value.cols()); }
};

/// A node's payload. Grad stays empty until something flows into it.
struct Tensor {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;

  std::vector<Index> shape() const { return {value.rows(), value.cols()}; }
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  const Matrix& grad() const;
  bool requires_grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double item() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Leaf whose gradient is kept on the tape (read it with Var::grad()).
  Var variable(Matrix value);
  /// Leaf bound to a Parameter; backward() adds into param.grad.
  Var parameter(Parameter& param);

  /// Seeds d(output)/d(output) = 1 for a 1x1 output and propagates.
  void backward(Var output);

  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn fn) {
    return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(fn));
  }
  Var record(Matrix value, std::span<const Var> parents, BackwardFn fn);

  Tensor& node(int id) { return nodes_[static_cast<std::size_t>(id)].tensor; }
  const Tensor& node(int id) const { return nodes_[static_cast<std::size_t>(id)].tensor; }
  std::size_t size() const { return nodes_.size(); }
  /// Number of backward functions invoked by the last backward() call.
  std::size_t visited() const { return visited_; }

  /// Adds `g` into the gradient of node `id` if it requires grad.
  void accumulate(int id, const Matrix& g);

 private:
  struct Node {
    Tensor tensor;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
  std::size_t visited_ = 0;
};

// ---------------------------------------------------------------------------
// Primitives. Shapes are explicit; the only broadcast is add_bias.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// x (n x m) + bias (1 x m) broadcast over rows.
Var add_bias(Var x, Var bias);
Var mul(Var a, Var b);
Var div(Var a, Var b);
/// Multiplies by a compile-time constant (e.g. a mask or 1/tau).
Var scale(Var a, double factor);
Var mul_constant(Var a, const Matrix& mask);
Var relu(Var a);
/// Column-wise concatenation: [a | b]. Row counts must agree.
Var concat(Var a, Var b);
Var concat(std::span<const Var> parts);
/// Rows of `a` picked by index (repeats allowed); gradients scatter-add back.
Var gather_rows(Var a, std::span<const Index> rows);
/// Row-wise stacking of equally wide tensors.
Var stack_rows(std::span<const Var> rows);
/// Valid-padding 1-D convolution. x: L x c_in, weight: (width*c_in) x c_out,
/// bias: 1 x c_out. Output: ((L - width) / stride + 1) x c_out.
Var conv1d(Var x, Var weight, Var bias, Index width, Index stride = 1);
/// conv1d (stride 1) applied independently to consecutive row segments of
/// equal length; windows never straddle a boundary. x: (n*segment) x c_in,
/// output: (n*(segment - width + 1)) x c_out.
Var conv1d_segments(Var x, Var weight, Var bias, Index width, Index segment);
/// Windowed max over rows, per column.
Var max_pool1d(Var x, Index window, Index stride);
/// Max over all rows, per column: n x m -> 1 x m.
Var global_max_pool(Var x);
/// Per-column max over each row range [offsets[i], offsets[i+1]) -> n x m.
Var segment_max_pool(Var x, std::span<const Index> offsets);
/// Rows of `table` selected by `codes`. Code 0 is padding: it reads as a zero
/// row and row 0 never receives gradient.
Var embedding(Var table, std::span<const int> codes);
/// Â · X with a constant normalized adjacency Â (n x n).
Var neighbor_aggregate(const Matrix& normalized_adjacency, Var x);
Var neighbor_aggregate(const SparseMatrix& normalized_adjacency, Var x);
/// Row-wise softmax.
Var softmax(Var a);
Var log(Var a);
Var exp(Var a);
/// Per-row Euclidean norm: n x m -> n x 1.
Var l2_norm(Var a);
/// Sum of elementwise products of two same-shape tensors -> 1 x 1.
Var dot(Var a, Var b);
Var scalar_divide(Var a, double divisor);
Var scalar_divide(Var a, Var divisor);
Var sum(Var a);
/// n x m -> n x 1.
Var row_sum(Var a);
/// Mean weighted sigmoid cross-entropy over n x 1 logits. Positive-label terms
/// are multiplied by `positive_weight`.
Var weighted_bce_with_logits(Var logits, const Matrix& labels, double positive_weight);

/// D^{-1/2}(A+I)D^{-1/2} for an undirected graph on `n` nodes.
Matrix normalized_adjacency(Index n, std::span<const std::pair<int, int>> edges);
/// Block-diagonal sparse form for several graphs; graph i occupies rows
/// [offsets[i], offsets[i+1]).
SparseMatrix block_normalized_adjacency(std::span<const std::vector<std::pair<int, int>>> edges,
                                        std::span<const Index> offsets);

// ---------------------------------------------------------------------------
// Central-difference gradient checking.

using ScalarFn = std::function<Var(Tape&, Var)>;

/// max_i |analytic_i - numeric_i| / max(1, |numeric_i|) for f at `point`.
double grad_check(const ScalarFn& f, const Matrix& point, double eps = 1e-5);

/// Same check, differentiating w.r.t. parameters that `f` binds itself.
double grad_check(const std::function<Var(Tape&)>& f, std::span<Parameter* const> params,
                  double eps = 1e-5);

}  // namespace csi::ad
