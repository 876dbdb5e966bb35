#pragma once

// GCN compound encoder, CNN sequence encoder, Siamese pairings, and the MLP
// interaction predictor. Encoders work on batches: n objects in, n x out
// embedding rows back.

#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "csi/autodiff.hpp"
#include "csi/chemio.hpp"
#include "csi/error.hpp"
#include "csi/random.hpp"

namespace csi::enc {

using ad::Matrix;
using ad::Var;

/// Named set of parameters that is trained, frozen and checkpointed together.
struct ParameterGroup {
  std::string name;
  bool frozen = false;
  std::vector<ad::Parameter> params;

  ad::Parameter& at(std::string_view param_name);
  const ad::Parameter& at(std::string_view param_name) const;
  std::vector<ad::Parameter*> pointers();
  std::size_t scalar_count() const;
};

/// Glorot-uniform weight, zero bias.
ad::Parameter glorot(std::string name, ad::Index fan_in, ad::Index fan_out, Rng& rng);

/// Parameters placed on one tape. With `trainable == false` they are recorded
/// as constants, so no gradient reaches the group.
struct Bound {
  std::vector<Var> vars;
  const Var& operator[](std::size_t i) const { return vars[i]; }
};
Bound bind(ad::Tape& tape, ParameterGroup& group, bool trainable = true);

// ---------------------------------------------------------------------------

struct GraphInput {
  Matrix features;  // atoms x kAtomFeatureWidth
  std::vector<std::pair<int, int>> edges;
};
GraphInput graph_input(const chemio::MolecularGraph& graph);

struct GcnShape {
  int input = chemio::kAtomFeatureWidth;
  int hidden = 32;
  int layers = 3;
  int fc_hidden = 32;
  int output = 16;
};

struct GcnEncoder {
  GcnShape shape;
  ParameterGroup group;
};

GcnEncoder make_gcn(std::string name, const GcnShape& shape, Rng& rng);

/// `layers` rounds of relu(A_hat H W + b), max-pool over atoms, relu dense,
/// linear dense. Returns graphs.size() x output.
Var gcn_encode(const GcnEncoder& encoder, const Bound& bound, std::span<const GraphInput* const> graphs);

struct CnnShape {
  int alphabet = chemio::kAlphabetSize;
  int embedding = 32;
  int filters = 32;
  int width = 8;
  int length = 128;
  int output = 16;
};

struct CnnEncoder {
  CnnShape shape;
  ParameterGroup group;
};

CnnEncoder make_cnn(std::string name, const CnnShape& shape, Rng& rng);

/// Residue embedding (row 0 is padding and stays zero), conv1d, relu, max-pool
/// over positions, dense. Every code vector must have `shape.length` entries.
Var cnn_encode(const CnnEncoder& encoder, const Bound& bound, std::span<const std::vector<int>* const> sequences);

/// Shared-weight pair encoding: rows [enc(first_i) | enc(second_i)].
template <typename Encoder, typename Input>
Var siamese_pair(const Encoder& encoder, const Bound& bound, std::span<const Input* const> first,
                 std::span<const Input* const> second) {
  if (first.size() != second.size()) {
    throw Error(ErrorKind::ShapeMismatch, "siamese pair: " + std::to_string(first.size()) + " vs " +
                                              std::to_string(second.size()) + " inputs");
  }
  std::vector<const Input*> all(first.begin(), first.end());
  all.insert(all.end(), second.begin(), second.end());
  Var both;
  if constexpr (std::is_same_v<Encoder, GcnEncoder>) {
    both = gcn_encode(encoder, bound, all);
  } else {
    both = cnn_encode(encoder, bound, all);
  }
  const auto n = static_cast<ad::Index>(first.size());
  std::vector<ad::Index> top(static_cast<std::size_t>(n)), bottom(static_cast<std::size_t>(n));
  std::iota(top.begin(), top.end(), 0);
  std::iota(bottom.begin(), bottom.end(), n);
  return ad::concat(ad::gather_rows(both, top), ad::gather_rows(both, bottom));
}

// ---------------------------------------------------------------------------

/// Dense stack input -> input/2 -> input/4 -> 1 with relu between layers.
struct Predictor {
  std::vector<int> widths;
  ParameterGroup group;
};

Predictor make_predictor(std::string name, int input, Rng& rng);
/// Hand-specified layer widths (first is the input, last must be 1).
Predictor make_predictor(std::string name, std::vector<int> widths, Rng& rng);

/// n x input -> n x 1 raw logits.
Var predict(const Predictor& predictor, const Bound& bound, Var features);

/// End-to-end baseline: predictor([gcn(c) | cnn(s)]) per (c, s) row.
Var baseline_forward(const GcnEncoder& gcn, const Bound& gcn_bound, const CnnEncoder& cnn, const Bound& cnn_bound,
                     const Predictor& predictor, const Bound& predictor_bound,
                     std::span<const GraphInput* const> compounds, std::span<const std::vector<int>* const> sequences);

}  // namespace csi::enc
