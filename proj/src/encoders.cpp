#include "csi/encoders.hpp"

#include <cmath>

namespace csi::enc {

namespace {

ad::Parameter zeros(std::string name, ad::Index rows, ad::Index cols) {
  return ad::Parameter(std::move(name), Matrix::Zero(rows, cols));
}

Var dense(const Bound& bound, std::size_t first, Var x) { return ad::add_bias(ad::matmul(x, bound[first]), bound[first + 1]); }

void check_bound(const ParameterGroup& group, const Bound& bound) {
  if (bound.vars.size() != group.params.size()) {
    throw Error(ErrorKind::ShapeMismatch, "group '" + group.name + "' bound with " + std::to_string(bound.vars.size()) +
                                              " of " + std::to_string(group.params.size()) + " parameters");
  }
}

}  // namespace

ad::Parameter& ParameterGroup::at(std::string_view param_name) {
  for (auto& p : params) {
    if (p.name == param_name) return p;
  }
  throw Error(ErrorKind::SchemaError, "group '" + name + "' has no parameter '" + std::string(param_name) + "'");
}

const ad::Parameter& ParameterGroup::at(std::string_view param_name) const {
  return const_cast<ParameterGroup*>(this)->at(param_name);
}

std::vector<ad::Parameter*> ParameterGroup::pointers() {
  std::vector<ad::Parameter*> out;
  for (auto& p : params) out.push_back(&p);
  return out;
}

std::size_t ParameterGroup::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += static_cast<std::size_t>(p.value.size());
  return n;
}

ad::Parameter glorot(std::string name, ad::Index fan_in, ad::Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix w(fan_in, fan_out);
  for (ad::Index c = 0; c < w.cols(); ++c) {
    for (ad::Index r = 0; r < w.rows(); ++r) w(r, c) = dist(rng);
  }
  return ad::Parameter(std::move(name), std::move(w));
}

Bound bind(ad::Tape& tape, ParameterGroup& group, bool trainable) {
  Bound out;
  out.vars.reserve(group.params.size());
  for (auto& p : group.params) out.vars.push_back(trainable ? tape.parameter(p) : tape.constant(p.value));
  return out;
}

// ---------------------------------------------------------------------------

GraphInput graph_input(const chemio::MolecularGraph& graph) {
  return {chemio::atom_feature_matrix(graph), graph.edges()};
}

GcnEncoder make_gcn(std::string name, const GcnShape& shape, Rng& rng) {
  if (shape.layers < 1 || shape.hidden < 1 || shape.output < 1 || shape.fc_hidden < 1) {
    throw Error(ErrorKind::ConfigError, "gcn shape must be positive");
  }
  GcnEncoder enc;
  enc.shape = shape;
  enc.group.name = std::move(name);
  int in = shape.input;
  for (int l = 0; l < shape.layers; ++l) {
    enc.group.params.push_back(glorot("conv" + std::to_string(l) + ".weight", in, shape.hidden, rng));
    enc.group.params.push_back(zeros("conv" + std::to_string(l) + ".bias", 1, shape.hidden));
    in = shape.hidden;
  }
  enc.group.params.push_back(glorot("fc0.weight", shape.hidden, shape.fc_hidden, rng));
  enc.group.params.push_back(zeros("fc0.bias", 1, shape.fc_hidden));
  enc.group.params.push_back(glorot("fc1.weight", shape.fc_hidden, shape.output, rng));
  enc.group.params.push_back(zeros("fc1.bias", 1, shape.output));
  return enc;
}

Var gcn_encode(const GcnEncoder& encoder, const Bound& bound, std::span<const GraphInput* const> graphs) {
  check_bound(encoder.group, bound);
  if (graphs.empty()) throw Error(ErrorKind::ShapeMismatch, "gcn_encode on an empty batch");
  std::vector<ad::Index> offsets{0};
  std::vector<std::vector<std::pair<int, int>>> edges;
  for (const GraphInput* g : graphs) {
    if (g->features.cols() != encoder.shape.input || g->features.rows() == 0) {
      throw Error(ErrorKind::ShapeMismatch, "gcn_encode: graph features are " + std::to_string(g->features.rows()) +
                                                "x" + std::to_string(g->features.cols()) + ", expected width " +
                                                std::to_string(encoder.shape.input));
    }
    offsets.push_back(offsets.back() + g->features.rows());
    edges.push_back(g->edges);
  }
  Matrix x(offsets.back(), encoder.shape.input);
  for (std::size_t i = 0; i < graphs.size(); ++i) x.middleRows(offsets[i], graphs[i]->features.rows()) = graphs[i]->features;
  const ad::SparseMatrix adj = ad::block_normalized_adjacency(edges, offsets);

  ad::Tape& tape = *bound[0].tape();
  Var h = tape.constant(std::move(x));
  const auto layers = static_cast<std::size_t>(encoder.shape.layers);
  for (std::size_t l = 0; l < layers; ++l) h = ad::relu(dense(bound, 2 * l, ad::neighbor_aggregate(adj, h)));
  Var pooled = ad::segment_max_pool(h, offsets);
  Var hidden = ad::relu(dense(bound, 2 * layers, pooled));
  return dense(bound, 2 * layers + 2, hidden);
}

CnnEncoder make_cnn(std::string name, const CnnShape& shape, Rng& rng) {
  if (shape.embedding < 1 || shape.filters < 1 || shape.width < 1 || shape.output < 1 || shape.length < shape.width) {
    throw Error(ErrorKind::ConfigError, "cnn shape must be positive with length >= width");
  }
  CnnEncoder enc;
  enc.shape = shape;
  enc.group.name = std::move(name);
  ad::Parameter table = glorot("embedding", shape.alphabet + 1, shape.embedding, rng);
  table.value.row(0).setZero();
  enc.group.params.push_back(std::move(table));
  enc.group.params.push_back(glorot("conv.weight", shape.width * shape.embedding, shape.filters, rng));
  enc.group.params.push_back(zeros("conv.bias", 1, shape.filters));
  enc.group.params.push_back(glorot("fc.weight", shape.filters, shape.output, rng));
  enc.group.params.push_back(zeros("fc.bias", 1, shape.output));
  return enc;
}

Var cnn_encode(const CnnEncoder& encoder, const Bound& bound, std::span<const std::vector<int>* const> sequences) {
  check_bound(encoder.group, bound);
  if (sequences.empty()) throw Error(ErrorKind::ShapeMismatch, "cnn_encode on an empty batch");
  const auto length = static_cast<std::size_t>(encoder.shape.length);
  std::vector<int> codes;
  codes.reserve(sequences.size() * length);
  for (const auto* s : sequences) {
    if (s->size() != length) {
      throw Error(ErrorKind::ShapeMismatch, "cnn_encode: sequence of length " + std::to_string(s->size()) +
                                                ", expected " + std::to_string(length));
    }
    codes.insert(codes.end(), s->begin(), s->end());
  }
  Var x = ad::embedding(bound[0], codes);
  Var conv = ad::relu(ad::conv1d_segments(x, bound[1], bound[2], encoder.shape.width, encoder.shape.length));
  const ad::Index per = encoder.shape.length - encoder.shape.width + 1;
  std::vector<ad::Index> offsets(sequences.size() + 1);
  for (std::size_t i = 0; i < offsets.size(); ++i) offsets[i] = static_cast<ad::Index>(i) * per;
  return dense(bound, 3, ad::segment_max_pool(conv, offsets));
}

// ---------------------------------------------------------------------------

Predictor make_predictor(std::string name, int input, Rng& rng) {
  if (input < 4) throw Error(ErrorKind::ConfigError, "predictor input width must be at least 4");
  return make_predictor(std::move(name), {input, input / 2, input / 4, 1}, rng);
}

Predictor make_predictor(std::string name, std::vector<int> widths, Rng& rng) {
  if (widths.size() < 2 || widths.back() != 1) throw Error(ErrorKind::ConfigError, "predictor widths must end in 1");
  Predictor p;
  p.widths = std::move(widths);
  p.group.name = std::move(name);
  for (std::size_t l = 0; l + 1 < p.widths.size(); ++l) {
    p.group.params.push_back(glorot("dense" + std::to_string(l) + ".weight", p.widths[l], p.widths[l + 1], rng));
    p.group.params.push_back(zeros("dense" + std::to_string(l) + ".bias", 1, p.widths[l + 1]));
  }
  return p;
}

Var predict(const Predictor& predictor, const Bound& bound, Var features) {
  check_bound(predictor.group, bound);
  if (features.cols() != predictor.widths.front()) {
    throw Error(ErrorKind::ShapeMismatch, "predictor expects width " + std::to_string(predictor.widths.front()) +
                                              ", got " + std::to_string(features.cols()));
  }
  const std::size_t layers = predictor.widths.size() - 1;
  Var h = features;
  for (std::size_t l = 0; l < layers; ++l) {
    h = dense(bound, 2 * l, h);
    if (l + 1 < layers) h = ad::relu(h);
  }
  return h;
}

Var baseline_forward(const GcnEncoder& gcn, const Bound& gcn_bound, const CnnEncoder& cnn, const Bound& cnn_bound,
                     const Predictor& predictor, const Bound& predictor_bound,
                     std::span<const GraphInput* const> compounds, std::span<const std::vector<int>* const> sequences) {
  if (compounds.size() != sequences.size()) {
    throw Error(ErrorKind::ShapeMismatch, "baseline: " + std::to_string(compounds.size()) + " compounds vs " +
                                              std::to_string(sequences.size()) + " sequences");
  }
  return predict(predictor, predictor_bound,
                 ad::concat(gcn_encode(gcn, gcn_bound, compounds), cnn_encode(cnn, cnn_bound, sequences)));
}

}  // namespace csi::enc
