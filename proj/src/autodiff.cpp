#include "csi/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "csi/error.hpp"

namespace csi::ad {

namespace {

std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": " + shape_str(a) + " vs " + shape_str(b));
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(op, a.value(), b.value());
}

Tape& tape_of(Var a) { return *a.tape(); }

double softplus(double x) {
  // log(1 + e^x) without overflow.
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------

const Matrix& Var::value() const { return tape_->node(id_).value; }
const Matrix& Var::grad() const { return tape_->node(id_).grad; }
bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

double Var::item() const {
  const auto& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw Error(ErrorKind::ShapeMismatch, "item() on " + shape_str(v));
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  if (!value.allFinite()) throw Error(ErrorKind::NonFiniteValue, "constant input");
  nodes_.push_back(Node{Tensor{std::move(value), Matrix(), false}, nullptr, nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::variable(Matrix value) {
  if (!value.allFinite()) throw Error(ErrorKind::NonFiniteValue, "variable input");
  nodes_.push_back(Node{Tensor{std::move(value), Matrix(), true}, nullptr, nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::parameter(Parameter& param) {
  if (!param.value.allFinite()) throw Error(ErrorKind::NonFiniteValue, "parameter " + param.name);
  nodes_.push_back(Node{Tensor{param.value, Matrix(), true}, nullptr, &param});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Matrix value, std::span<const Var> parents, BackwardFn fn) {
  if (!value.allFinite()) throw Error(ErrorKind::NonFiniteValue, "primitive produced NaN/Inf");
  bool needs = false;
  for (const Var& p : parents) needs = needs || node(p.id()).requires_grad;
  nodes_.push_back(Node{Tensor{std::move(value), Matrix(), needs}, needs ? std::move(fn) : nullptr, nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::accumulate(int id, const Matrix& g) {
  Tensor& t = node(id);
  if (!t.requires_grad) return;
  if (t.grad.size() == 0) {
    t.grad = g;
  } else {
    t.grad += g;
  }
}

void Tape::backward(Var output) {
  if (output.rows() != 1 || output.cols() != 1) {
    throw Error(ErrorKind::ShapeMismatch, "backward() needs a 1x1 output, got " + shape_str(output.value()));
  }
  for (auto& n : nodes_) n.tensor.grad.resize(0, 0);
  accumulate(output.id(), Matrix::Ones(1, 1));
  visited_ = 0;
  for (int i = output.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.tensor.requires_grad || n.tensor.grad.size() == 0) continue;
    if (!n.tensor.grad.allFinite()) throw Error(ErrorKind::NonFiniteValue, "gradient at node " + std::to_string(i));
    if (n.backward) {
      n.backward(*this, i);
      ++visited_;
    } else if (n.param != nullptr) {
      n.param->grad += n.tensor.grad;
    }
  }
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    if (t.node(ia).requires_grad) t.accumulate(ia, g * t.node(ib).value.transpose());
    if (t.node(ib).requires_grad) t.accumulate(ib, t.node(ia).value.transpose() * g);
  });
}

Var transpose(Var a) {
  const int ia = a.id();
  return tape_of(a).record(a.value().transpose(), {a},
                           [ia](Tape& t, int self) { t.accumulate(ia, t.node(self).grad.transpose()); });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.node(self).grad);
    t.accumulate(ib, t.node(self).grad);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.node(self).grad);
    t.accumulate(ib, -t.node(self).grad);
  });
}

Var add_bias(Var x, Var bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) shape_error("add_bias", x.value(), bias.value());
  const int ix = x.id(), ib = bias.id();
  Matrix out = x.value().rowwise() + bias.value().row(0);
  return tape_of(x).record(std::move(out), {x, bias}, [ix, ib](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    t.accumulate(ix, g);
    if (t.node(ib).requires_grad) t.accumulate(ib, g.colwise().sum());
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    if (t.node(ia).requires_grad) t.accumulate(ia, g.cwiseProduct(t.node(ib).value));
    if (t.node(ib).requires_grad) t.accumulate(ib, g.cwiseProduct(t.node(ia).value));
  });
}

Var div(Var a, Var b) {
  require_same_shape("div", a, b);
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value().cwiseQuotient(b.value()), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    const Matrix& bv = t.node(ib).value;
    if (t.node(ia).requires_grad) t.accumulate(ia, g.cwiseQuotient(bv));
    if (t.node(ib).requires_grad) {
      const Matrix& out = t.node(self).value;
      t.accumulate(ib, -g.cwiseProduct(out).cwiseQuotient(bv));
    }
  });
}

Var scale(Var a, double factor) {
  const int ia = a.id();
  return tape_of(a).record(a.value() * factor, {a},
                           [ia, factor](Tape& t, int self) { t.accumulate(ia, t.node(self).grad * factor); });
}

Var mul_constant(Var a, const Matrix& mask) {
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) shape_error("mul_constant", a.value(), mask);
  const int ia = a.id();
  return tape_of(a).record(a.value().cwiseProduct(mask), {a}, [ia, mask](Tape& t, int self) {
    t.accumulate(ia, t.node(self).grad.cwiseProduct(mask));
  });
}

Var relu(Var a) {
  const int ia = a.id();
  return tape_of(a).record(a.value().cwiseMax(0.0), {a}, [ia](Tape& t, int self) {
    const Matrix& x = t.node(ia).value;
    t.accumulate(ia, t.node(self).grad.cwiseProduct((x.array() > 0.0).cast<double>().matrix()));
  });
}

Var concat(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat(parts);
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw Error(ErrorKind::ShapeMismatch, "concat of nothing");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) shape_error("concat", parts[0].value(), p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Index> widths;
  Index offset = 0;
  for (const Var& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Tape& tape = tape_of(parts[0]);
  return tape.record(std::move(out), parts, [ids, widths](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    Index off = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      t.accumulate(ids[i], g.middleCols(off, widths[i]));
      off += widths[i];
    }
  });
}

Var stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw Error(ErrorKind::ShapeMismatch, "stack_rows of nothing");
  const Index cols = rows[0].cols();
  Index total = 0;
  for (const Var& r : rows) {
    if (r.cols() != cols) shape_error("stack_rows", rows[0].value(), r.value());
    total += r.rows();
  }
  Matrix out(total, cols);
  std::vector<int> ids;
  std::vector<Index> heights;
  Index offset = 0;
  for (const Var& r : rows) {
    out.middleRows(offset, r.rows()) = r.value();
    offset += r.rows();
    ids.push_back(r.id());
    heights.push_back(r.rows());
  }
  Tape& tape = tape_of(rows[0]);
  return tape.record(std::move(out), rows, [ids, heights](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    Index off = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      t.accumulate(ids[i], g.middleRows(off, heights[i]));
      off += heights[i];
    }
  });
}

Var gather_rows(Var a, std::span<const Index> rows) {
  const Matrix& av = a.value();
  Matrix out(static_cast<Index>(rows.size()), av.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= av.rows()) {
      throw Error(ErrorKind::ShapeMismatch, "gather_rows: row " + std::to_string(rows[i]) + " of " +
                                                std::to_string(av.rows()));
    }
    out.row(static_cast<Index>(i)) = av.row(rows[i]);
  }
  const int ia = a.id();
  std::vector<Index> index(rows.begin(), rows.end());
  return tape_of(a).record(std::move(out), {a}, [ia, index = std::move(index)](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    Matrix da = Matrix::Zero(t.node(ia).value.rows(), t.node(ia).value.cols());
    for (std::size_t i = 0; i < index.size(); ++i) da.row(index[i]) += g.row(static_cast<Index>(i));
    t.accumulate(ia, da);
  });
}

Var conv1d(Var x, Var weight, Var bias, Index width, Index stride) {
  const Index length = x.rows();
  const Index channels = x.cols();
  if (width < 1 || stride < 1 || length < width) {
    throw Error(ErrorKind::ShapeMismatch, "conv1d: width " + std::to_string(width) + " stride " +
                                              std::to_string(stride) + " on length " + std::to_string(length));
  }
  if (weight.rows() != width * channels) shape_error("conv1d weight", x.value(), weight.value());
  if (bias.rows() != 1 || bias.cols() != weight.cols()) shape_error("conv1d bias", weight.value(), bias.value());

  const Index out_len = (length - width) / stride + 1;
  // im2col: each output position becomes one row of `width` stacked input rows.
  Matrix patches(out_len, width * channels);
  const Matrix& xv = x.value();
  for (Index p = 0; p < out_len; ++p) {
    for (Index w = 0; w < width; ++w) {
      patches.block(p, w * channels, 1, channels) = xv.row(p * stride + w);
    }
  }
  Matrix out = patches * weight.value();
  out.rowwise() += bias.value().row(0);

  const int ix = x.id(), iw = weight.id(), ib = bias.id();
  return tape_of(x).record(std::move(out), {x, weight, bias},
                           [ix, iw, ib, patches = std::move(patches), width, stride, channels](Tape& t, int self) {
                             const Matrix& g = t.node(self).grad;
                             if (t.node(iw).requires_grad) t.accumulate(iw, patches.transpose() * g);
                             if (t.node(ib).requires_grad) t.accumulate(ib, g.colwise().sum());
                             if (t.node(ix).requires_grad) {
                               const Matrix dpatches = g * t.node(iw).value.transpose();
                               Matrix dx = Matrix::Zero(t.node(ix).value.rows(), channels);
                               for (Index p = 0; p < dpatches.rows(); ++p) {
                                 for (Index w = 0; w < width; ++w) {
                                   dx.row(p * stride + w) += dpatches.block(p, w * channels, 1, channels);
                                 }
                               }
                               t.accumulate(ix, dx);
                             }
                           });
}

Var max_pool1d(Var x, Index window, Index stride) {
  const Index length = x.rows();
  if (window < 1 || stride < 1 || length < window) {
    throw Error(ErrorKind::ShapeMismatch, "max_pool1d: window " + std::to_string(window) + " on length " +
                                              std::to_string(length));
  }
  const Index out_len = (length - window) / stride + 1;
  const Index cols = x.cols();
  const Matrix& xv = x.value();
  Matrix out(out_len, cols);
  std::vector<Index> argmax(static_cast<std::size_t>(out_len * cols));
  for (Index p = 0; p < out_len; ++p) {
    for (Index c = 0; c < cols; ++c) {
      Index best = p * stride;
      for (Index r = p * stride + 1; r < p * stride + window; ++r) {
        if (xv(r, c) > xv(best, c)) best = r;
      }
      out(p, c) = xv(best, c);
      argmax[static_cast<std::size_t>(p * cols + c)] = best;
    }
  }
  const int ix = x.id();
  return tape_of(x).record(std::move(out), {x}, [ix, argmax = std::move(argmax), cols](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    Matrix dx = Matrix::Zero(t.node(ix).value.rows(), cols);
    for (Index p = 0; p < g.rows(); ++p) {
      for (Index c = 0; c < cols; ++c) dx(argmax[static_cast<std::size_t>(p * cols + c)], c) += g(p, c);
    }
    t.accumulate(ix, dx);
  });
}

Var global_max_pool(Var x) { return max_pool1d(x, x.rows(), 1); }

Var conv1d_segments(Var x, Var weight, Var bias, Index width, Index segment) {
  const Index channels = x.cols();
  if (width < 1 || segment < width || x.rows() % segment != 0) {
    throw Error(ErrorKind::ShapeMismatch, "conv1d_segments: width " + std::to_string(width) + " segment " +
                                              std::to_string(segment) + " on " + std::to_string(x.rows()) + " rows");
  }
  if (weight.rows() != width * channels) shape_error("conv1d_segments weight", x.value(), weight.value());
  if (bias.rows() != 1 || bias.cols() != weight.cols()) shape_error("conv1d_segments bias", weight.value(), bias.value());

  const Index n = x.rows() / segment;
  const Index per = segment - width + 1;
  Matrix patches(n * per, width * channels);
  const Matrix& xv = x.value();
  for (Index s = 0; s < n; ++s) {
    for (Index p = 0; p < per; ++p) {
      for (Index w = 0; w < width; ++w) {
        patches.block(s * per + p, w * channels, 1, channels) = xv.row(s * segment + p + w);
      }
    }
  }
  Matrix out = patches * weight.value();
  out.rowwise() += bias.value().row(0);

  const int ix = x.id(), iw = weight.id(), ib = bias.id();
  return tape_of(x).record(
      std::move(out), {x, weight, bias},
      [ix, iw, ib, patches = std::move(patches), width, segment, per, channels, n](Tape& t, int self) {
        const Matrix& g = t.node(self).grad;
        if (t.node(iw).requires_grad) t.accumulate(iw, patches.transpose() * g);
        if (t.node(ib).requires_grad) t.accumulate(ib, g.colwise().sum());
        if (t.node(ix).requires_grad) {
          const Matrix dpatches = g * t.node(iw).value.transpose();
          Matrix dx = Matrix::Zero(t.node(ix).value.rows(), channels);
          for (Index s = 0; s < n; ++s) {
            for (Index p = 0; p < per; ++p) {
              for (Index w = 0; w < width; ++w) {
                dx.row(s * segment + p + w) += dpatches.block(s * per + p, w * channels, 1, channels);
              }
            }
          }
          t.accumulate(ix, dx);
        }
      });
}

Var segment_max_pool(Var x, std::span<const Index> offsets) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != x.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "segment_max_pool: offsets must run from 0 to the row count");
  }
  const Index n = static_cast<Index>(offsets.size()) - 1;
  const Index cols = x.cols();
  const Matrix& xv = x.value();
  Matrix out(n, cols);
  std::vector<Index> argmax(static_cast<std::size_t>(n * cols));
  for (Index s = 0; s < n; ++s) {
    const Index lo = offsets[static_cast<std::size_t>(s)], hi = offsets[static_cast<std::size_t>(s) + 1];
    if (hi <= lo) throw Error(ErrorKind::ShapeMismatch, "segment_max_pool: empty segment");
    for (Index c = 0; c < cols; ++c) {
      Index best = lo;
      for (Index r = lo + 1; r < hi; ++r) {
        if (xv(r, c) > xv(best, c)) best = r;
      }
      out(s, c) = xv(best, c);
      argmax[static_cast<std::size_t>(s * cols + c)] = best;
    }
  }
  const int ix = x.id();
  return tape_of(x).record(std::move(out), {x}, [ix, argmax = std::move(argmax), cols](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    Matrix dx = Matrix::Zero(t.node(ix).value.rows(), cols);
    for (Index s = 0; s < g.rows(); ++s) {
      for (Index c = 0; c < cols; ++c) dx(argmax[static_cast<std::size_t>(s * cols + c)], c) += g(s, c);
    }
    t.accumulate(ix, dx);
  });
}

Var embedding(Var table, std::span<const int> codes) {
  const Matrix& tv = table.value();
  Matrix out(static_cast<Index>(codes.size()), tv.cols());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] < 0 || codes[i] >= tv.rows()) {
      throw Error(ErrorKind::ShapeMismatch, "embedding code " + std::to_string(codes[i]) + " outside table of " +
                                                std::to_string(tv.rows()) + " rows");
    }
    // Padding reads as zeros whatever row 0 holds.
    if (codes[i] == 0) out.row(static_cast<Index>(i)).setZero();
    else out.row(static_cast<Index>(i)) = tv.row(codes[i]);
  }
  const int it = table.id();
  std::vector<int> code_copy(codes.begin(), codes.end());
  return tape_of(table).record(std::move(out), {table}, [it, code_copy = std::move(code_copy)](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    Matrix dt = Matrix::Zero(t.node(it).value.rows(), t.node(it).value.cols());
    for (std::size_t i = 0; i < code_copy.size(); ++i) {
      if (code_copy[i] != 0) dt.row(code_copy[i]) += g.row(static_cast<Index>(i));
    }
    t.accumulate(it, dt);
  });
}

Var neighbor_aggregate(const Matrix& normalized_adjacency, Var x) {
  if (normalized_adjacency.rows() != x.rows() || normalized_adjacency.cols() != x.rows()) {
    shape_error("neighbor_aggregate", normalized_adjacency, x.value());
  }
  const int ix = x.id();
  return tape_of(x).record(normalized_adjacency * x.value(), {x}, [ix, adj = normalized_adjacency](Tape& t, int self) {
    t.accumulate(ix, adj.transpose() * t.node(self).grad);
  });
}

Var neighbor_aggregate(const SparseMatrix& normalized_adjacency, Var x) {
  if (normalized_adjacency.rows() != x.rows() || normalized_adjacency.cols() != x.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "neighbor_aggregate: adjacency does not match " +
                                              std::to_string(x.rows()) + " rows");
  }
  const int ix = x.id();
  Matrix out = normalized_adjacency * x.value();
  return tape_of(x).record(std::move(out), {x}, [ix, adj = normalized_adjacency](Tape& t, int self) {
    t.accumulate(ix, Matrix(adj.transpose() * t.node(self).grad));
  });
}

Var softmax(Var a) {
  Matrix out = a.value();
  for (Index r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  const int ia = a.id();
  return tape_of(a).record(std::move(out), {a}, [ia](Tape& t, int self) {
    const Matrix& y = t.node(self).value;
    const Matrix& g = t.node(self).grad;
    Matrix dx(y.rows(), y.cols());
    for (Index r = 0; r < y.rows(); ++r) {
      const double inner = g.row(r).dot(y.row(r));
      dx.row(r) = y.row(r).cwiseProduct((g.row(r).array() - inner).matrix());
    }
    t.accumulate(ia, dx);
  });
}

Var log(Var a) {
  if ((a.value().array() <= 0.0).any()) throw Error(ErrorKind::NonFiniteValue, "log of a non-positive value");
  const int ia = a.id();
  return tape_of(a).record(a.value().array().log().matrix(), {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, t.node(self).grad.cwiseQuotient(t.node(ia).value));
  });
}

Var exp(Var a) {
  const int ia = a.id();
  return tape_of(a).record(a.value().array().exp().matrix(), {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, t.node(self).grad.cwiseProduct(t.node(self).value));
  });
}

Var l2_norm(Var a) {
  Matrix out = a.value().rowwise().norm();
  const int ia = a.id();
  return tape_of(a).record(std::move(out), {a}, [ia](Tape& t, int self) {
    const Matrix& x = t.node(ia).value;
    const Matrix& n = t.node(self).value;
    const Matrix& g = t.node(self).grad;
    Matrix dx(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
      if (n(r, 0) == 0.0) throw Error(ErrorKind::NonFiniteValue, "gradient of l2_norm at zero");
      dx.row(r) = x.row(r) * (g(r, 0) / n(r, 0));
    }
    t.accumulate(ia, dx);
  });
}

Var dot(Var a, Var b) {
  require_same_shape("dot", a, b);
  Matrix out(1, 1);
  out(0, 0) = a.value().cwiseProduct(b.value()).sum();
  const int ia = a.id(), ib = b.id();
  return tape_of(a).record(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const double g = t.node(self).grad(0, 0);
    if (t.node(ia).requires_grad) t.accumulate(ia, t.node(ib).value * g);
    if (t.node(ib).requires_grad) t.accumulate(ib, t.node(ia).value * g);
  });
}

Var scalar_divide(Var a, double divisor) {
  if (divisor == 0.0) throw Error(ErrorKind::NonFiniteValue, "division by zero");
  return scale(a, 1.0 / divisor);
}

Var scalar_divide(Var a, Var divisor) {
  const double d = divisor.item();
  if (d == 0.0) throw Error(ErrorKind::NonFiniteValue, "division by zero");
  const int ia = a.id(), id = divisor.id();
  return tape_of(a).record(a.value() / d, {a, divisor}, [ia, id](Tape& t, int self) {
    const Matrix& g = t.node(self).grad;
    const double dv = t.node(id).value(0, 0);
    if (t.node(ia).requires_grad) t.accumulate(ia, g / dv);
    if (t.node(id).requires_grad) {
      Matrix dd(1, 1);
      dd(0, 0) = -g.cwiseProduct(t.node(self).value).sum() / dv;
      t.accumulate(id, dd);
    }
  });
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const int ia = a.id();
  return tape_of(a).record(std::move(out), {a}, [ia](Tape& t, int self) {
    const auto& v = t.node(ia).value;
    t.accumulate(ia, Matrix::Constant(v.rows(), v.cols(), t.node(self).grad(0, 0)));
  });
}

Var row_sum(Var a) {
  const int ia = a.id();
  return tape_of(a).record(a.value().rowwise().sum(), {a}, [ia](Tape& t, int self) {
    const auto cols = t.node(ia).value.cols();
    t.accumulate(ia, t.node(self).grad.replicate(1, cols));
  });
}

Var weighted_bce_with_logits(Var logits, const Matrix& labels, double positive_weight) {
  if (logits.cols() != 1 || labels.rows() != logits.rows() || labels.cols() != 1) {
    shape_error("weighted_bce_with_logits", logits.value(), labels);
  }
  const Index n = logits.rows();
  if (n == 0) throw Error(ErrorKind::ShapeMismatch, "weighted_bce_with_logits on empty batch");
  const Matrix& x = logits.value();
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double y = labels(i, 0);
    total += positive_weight * y * softplus(-x(i, 0)) + (1.0 - y) * softplus(x(i, 0));
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(n);
  const int il = logits.id();
  return tape_of(logits).record(std::move(out), {logits}, [il, labels, positive_weight, n](Tape& t, int self) {
    const Matrix& xv = t.node(il).value;
    const double g = t.node(self).grad(0, 0) / static_cast<double>(n);
    Matrix dx(n, 1);
    for (Index i = 0; i < n; ++i) {
      const double y = labels(i, 0);
      const double s = sigmoid(xv(i, 0));
      dx(i, 0) = g * (-positive_weight * y * (1.0 - s) + (1.0 - y) * s);
    }
    t.accumulate(il, dx);
  });
}

Matrix normalized_adjacency(Index n, std::span<const std::pair<int, int>> edges) {
  Matrix a = Matrix::Identity(n, n);
  for (const auto& [u, v] : edges) {
    if (u < 0 || v < 0 || u >= n || v >= n) throw Error(ErrorKind::ShapeMismatch, "edge endpoint out of range");
    a(u, v) = 1.0;
    a(v, u) = 1.0;
  }
  const Eigen::VectorXd inv_sqrt_deg = a.rowwise().sum().array().rsqrt();
  return inv_sqrt_deg.asDiagonal() * a * inv_sqrt_deg.asDiagonal();
}

SparseMatrix block_normalized_adjacency(std::span<const std::vector<std::pair<int, int>>> edges,
                                        std::span<const Index> offsets) {
  if (offsets.size() != edges.size() + 1) {
    throw Error(ErrorKind::ShapeMismatch, "block_normalized_adjacency: offsets/graphs count mismatch");
  }
  const Index total = offsets.back();
  std::vector<Eigen::Triplet<double>> entries;
  for (std::size_t g = 0; g < edges.size(); ++g) {
    const Index base = offsets[g];
    const Index n = offsets[g + 1] - base;
    std::vector<double> degree(static_cast<std::size_t>(n), 1.0);
    for (const auto& [u, v] : edges[g]) {
      if (u < 0 || v < 0 || u >= n || v >= n) throw Error(ErrorKind::ShapeMismatch, "edge endpoint out of range");
      degree[static_cast<std::size_t>(u)] += 1.0;
      degree[static_cast<std::size_t>(v)] += 1.0;
    }
    for (Index i = 0; i < n; ++i) entries.emplace_back(base + i, base + i, 1.0 / degree[static_cast<std::size_t>(i)]);
    for (const auto& [u, v] : edges[g]) {
      const double w = 1.0 / std::sqrt(degree[static_cast<std::size_t>(u)] * degree[static_cast<std::size_t>(v)]);
      entries.emplace_back(base + u, base + v, w);
      entries.emplace_back(base + v, base + u, w);
    }
  }
  SparseMatrix a(total, total);
  a.setFromTriplets(entries.begin(), entries.end());
  return a;
}

// ---------------------------------------------------------------------------

double grad_check(const ScalarFn& f, const Matrix& point, double eps) {
  Matrix analytic;
  {
    Tape tape;
    Var x = tape.variable(point);
    Var y = f(tape, x);
    tape.backward(y);
    analytic = x.grad().size() == 0 ? Matrix::Zero(point.rows(), point.cols()) : x.grad();
  }
  auto eval = [&f](const Matrix& at) {
    Tape tape;
    Var x = tape.variable(at);
    return f(tape, x).item();
  };
  double worst = 0.0;
  Matrix probe = point;
  for (Index i = 0; i < point.size(); ++i) {
    const double orig = probe(i);
    probe(i) = orig + eps;
    const double up = eval(probe);
    probe(i) = orig - eps;
    const double down = eval(probe);
    probe(i) = orig;
    const double numeric = (up - down) / (2.0 * eps);
    if (!std::isfinite(numeric)) throw Error(ErrorKind::NonFiniteValue, "central difference");
    worst = std::max(worst, std::abs(analytic(i) - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

double grad_check(const std::function<Var(Tape&)>& f, std::span<Parameter* const> params, double eps) {
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var y = f(tape);
    tape.backward(y);
  }
  double worst = 0.0;
  for (Parameter* p : params) {
    const Matrix analytic = p->grad;
    for (Index i = 0; i < p->value.size(); ++i) {
      const double orig = p->value(i);
      p->value(i) = orig + eps;
      double up = 0.0, down = 0.0;
      {
        Tape tape;
        up = f(tape).item();
      }
      p->value(i) = orig - eps;
      {
        Tape tape;
        down = f(tape).item();
      }
      p->value(i) = orig;
      const double numeric = (up - down) / (2.0 * eps);
      if (!std::isfinite(numeric)) throw Error(ErrorKind::NonFiniteValue, "central difference");
      worst = std::max(worst, std::abs(analytic(i) - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return worst;
}

}  // namespace csi::ad
