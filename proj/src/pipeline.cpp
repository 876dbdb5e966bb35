#include "csi/pipeline.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "csi/error.hpp"
#include "csi/random.hpp"

namespace csi::pipe {

using ad::Index;
using ad::Var;
using nlohmann::json;

namespace {

constexpr const char* kGroupOrder[] = {"gcn-1A",   "cnn-1A",   "gcn-1B",       "cnn-1B",       "cc-gcn",
                                       "cs-gcn",   "cs-cnn",   "ss-cnn",       "baseline-gcn", "baseline-cnn"};

// Seed salts for the independent random streams of one run.
enum Salt : std::uint64_t {
  kInit = 11,
  kPhase1A = 21,
  kPhase1B = 22,
  kPhase1Multi = 23,
  kPhase2 = 31,
  kBaseline = 32,
  kTrainNeg = 41,
  kValNeg = 42,
  kTestNeg = 43,
  kUnseenNeg = 44,
};

std::uint32_t crc(std::uint32_t state, const void* data, std::size_t size) {
  return static_cast<std::uint32_t>(
      crc32(state, static_cast<const Bytef*>(data), static_cast<uInt>(size)));
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::vector<ad::Parameter*> params_of(std::span<enc::ParameterGroup* const> groups) {
  std::vector<ad::Parameter*> out;
  for (auto* g : groups) {
    for (auto& p : g->params) out.push_back(&p);
  }
  return out;
}

void zero_grads(std::span<ad::Parameter* const> params) {
  for (auto* p : params) p->zero_grad();
}

AdamConfig adam_config(const TrainConfig& c) { return {c.learning_rate, c.beta1, c.beta2, c.epsilon}; }

[[noreturn]] void rethrow_with_context(const Error& e, const std::string& where) {
  std::string what = e.what();
  const std::string prefix = std::string(to_string(e.kind())) + ": ";
  if (what.rfind(prefix, 0) == 0) what = what.substr(prefix.size());
  throw Error(e.kind(), where + ": " + what);
}

// -- encoding with per-batch deduplication ---------------------------------

const enc::GraphInput* input_of(const enc::GcnEncoder&, const ObjectStore& store, const data::Id& id) {
  return &store.graph(id);
}
const std::vector<int>* input_of(const enc::CnnEncoder&, const ObjectStore& store, const data::Id& id) {
  return &store.sequence(id);
}
Var run_encoder(const enc::GcnEncoder& e, const enc::Bound& b, std::span<const enc::GraphInput* const> in) {
  return enc::gcn_encode(e, b, in);
}
Var run_encoder(const enc::CnnEncoder& e, const enc::Bound& b, std::span<const std::vector<int>* const> in) {
  return enc::cnn_encode(e, b, in);
}

/// Encodes every distinct id once and returns the rows for `ids` in order.
/// With a second id list the result is the Siamese row [enc(a_i) | enc(b_i)].
template <typename Encoder>
Var encode_ids(const Encoder& encoder, const enc::Bound& bound, const ObjectStore& store,
               const std::vector<data::Id>& ids, const std::vector<data::Id>* second = nullptr) {
  using Input = std::remove_cvref_t<decltype(*input_of(encoder, store, ids.front()))>;
  std::map<data::Id, Index> row;
  std::vector<const Input*> inputs;
  auto index_of = [&](const data::Id& id) {
    auto [it, inserted] = row.emplace(id, static_cast<Index>(inputs.size()));
    if (inserted) inputs.push_back(input_of(encoder, store, id));
    return it->second;
  };
  std::vector<Index> first_rows, second_rows;
  for (const auto& id : ids) first_rows.push_back(index_of(id));
  if (second) {
    for (const auto& id : *second) second_rows.push_back(index_of(id));
  }
  Var unique = run_encoder(encoder, bound, inputs);
  Var a = ad::gather_rows(unique, first_rows);
  return second ? ad::concat(a, ad::gather_rows(unique, second_rows)) : a;
}

void check_finite(Var loss) {
  if (!std::isfinite(loss.item())) throw Error(ErrorKind::NonFiniteValue, "loss is not finite");
}

// -- predictor-style training loop shared by Phase 2 and the baseline --------

struct LabeledRows {
  std::vector<data::LabeledPair> pairs;
  Matrix labels;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

LabeledRows labeled_rows(std::span<const data::LabeledPair> pairs, const char* what) {
  LabeledRows out;
  out.pairs.assign(pairs.begin(), pairs.end());
  out.labels.resize(static_cast<Index>(pairs.size()), 1);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out.labels(static_cast<Index>(i), 0) = pairs[i].label;
    (pairs[i].label != 0 ? out.positives : out.negatives) += 1;
  }
  if (out.positives == 0 || out.negatives == 0) {
    throw Error(ErrorKind::TooFewExamples, std::string(what) + " set needs both classes (" +
                                               std::to_string(out.positives) + " positives, " +
                                               std::to_string(out.negatives) + " negatives)");
  }
  return out;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(static_cast<Index>(rows[i]));
  return out;
}

using BatchLogits = std::function<Var(ad::Tape&, std::span<const std::size_t> rows, bool train)>;

PredictorResult fit_with_early_stopping(const std::string& phase, std::vector<enc::ParameterGroup*> groups,
                                        const LabeledRows& train, const LabeledRows& val, const BatchLogits& train_logits,
                                        const BatchLogits& val_logits, std::uint64_t salt, const TrainConfig& config,
                                        TrainingLog& log, Model& model, const EpochHook& hook) {
  PredictorResult result;
  result.positive_weight = static_cast<double>(train.negatives) / static_cast<double>(train.positives);
  const auto params = params_of(groups);
  AdamState state;
  std::vector<Matrix> best;
  for (auto* p : params) best.push_back(p->value);
  result.best_val_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;

  const std::size_t n = train.pairs.size();
  const auto batch = static_cast<std::size_t>(config.predictor_batch);
  std::vector<std::size_t> all_val(val.pairs.size());
  std::iota(all_val.begin(), all_val.end(), 0);

  for (int epoch = 0; epoch < config.phase2_epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(config.seed, {salt, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    try {
      for (std::size_t start = 0; start < n; start += batch) {
        const std::span<const std::size_t> rows(order.data() + start, std::min(batch, n - start));
        ad::Tape tape;
        Var logits = train_logits(tape, rows, true);
        Matrix labels(static_cast<Index>(rows.size()), 1);
        for (std::size_t i = 0; i < rows.size(); ++i) labels(static_cast<Index>(i), 0) = train.labels(static_cast<Index>(rows[i]), 0);
        Var loss = ad::weighted_bce_with_logits(logits, labels, result.positive_weight);
        check_finite(loss);
        zero_grads(params);
        tape.backward(loss);
        adam_step(params, state, adam_config(config));
        total += loss.item() * static_cast<double>(rows.size());
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonFiniteValue) throw;
      rethrow_with_context(e, "phase " + phase + " epoch " + std::to_string(epoch));
    }
    double val_loss = 0.0;
    {
      ad::Tape tape;
      val_loss = ad::weighted_bce_with_logits(val_logits(tape, all_val, false), val.labels, result.positive_weight).item();
    }
    log.records.push_back({phase, epoch, total / static_cast<double>(n), val_loss});
    result.epochs_run = epoch + 1;
    if (hook) hook(epoch, model);
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      for (std::size_t i = 0; i < params.size(); ++i) best[i] = params[i]->value;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value = best[i];
    params[i]->zero_grad();
  }
  return result;
}

// -- binary helpers ------------------------------------------------------------

struct Writer {
  std::string out;
  void u8(std::uint8_t v) { out.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str32(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out.append(s);
  }
  void str64(std::string_view s) {
    u64(s.size());
    out.append(s);
  }
};

struct Reader {
  std::string_view in;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (in.size() - pos < n) throw Error(ErrorKind::SchemaError, "checkpoint is truncated at byte " + std::to_string(pos));
  }
  std::uint64_t le(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos++])) << (8 * i);
    return v;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::uint64_t n) {
    need(n);
    std::string s(in.substr(pos, n));
    pos += n;
    return s;
  }
  std::string str32() { return bytes(u32()); }
  std::string str64() { return bytes(u64()); }
};

void write_group(Writer& w, const enc::ParameterGroup& g) {
  w.str32(g.name);
  w.u8(g.frozen ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(g.params.size()));
  for (const auto& p : g.params) {
    w.str32(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rows()));
    w.u32(static_cast<std::uint32_t>(p.value.cols()));
    for (Index i = 0; i < p.value.size(); ++i) w.f64(p.value.data()[i]);
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(Stratification s) {
  switch (s) {
    case Stratification::None: return "none";
    case Stratification::Compound: return "compound";
    case Stratification::Sequence: return "sequence";
    case Stratification::CompoundSequence: return "compound+sequence";
    case Stratification::Reaction: return "reaction";
    case Stratification::RClass: return "rclass";
    case Stratification::EC: return "ec";
  }
  return "unknown";
}

Stratification parse_stratification(std::string_view name) {
  for (auto s : {Stratification::None, Stratification::Compound, Stratification::Sequence,
                 Stratification::CompoundSequence, Stratification::Reaction, Stratification::RClass,
                 Stratification::EC}) {
    if (to_string(s) == name) return s;
  }
  throw Error(ErrorKind::ConfigError, "unknown stratification '" + std::string(name) +
                                          "' (valid: none, compound, sequence, compound+sequence, reaction, rclass, ec)");
}

bool is_reaction_keyed(Stratification s) {
  return s == Stratification::Reaction || s == Stratification::RClass || s == Stratification::EC;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw Error(ErrorKind::ConfigError, field + ": " + why);
  };
  if (!(tau > 0.0) || !std::isfinite(tau)) fail("tau", "must be positive");
  if (phase1_epochs < 1) fail("phase1_epochs", "must be at least 1");
  if (phase2_epochs < 1) fail("phase2_epochs", "must be at least 1");
  if (batch_size < 2) fail("batch_size", "must be at least 2");
  if (predictor_batch < 1) fail("predictor_batch", "must be at least 1");
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2", "must lie in [0, 1)");
  if (!(epsilon > 0.0)) fail("epsilon", "must be positive");
  if (patience < 1) fail("patience", "must be at least 1");
  if (negative_ratio < 1) fail("negative_ratio", "must be at least 1");
  if (unseen_ratio < 1) fail("unseen_ratio", "must be at least 1");
  if (test_ratios.empty()) fail("test_ratios", "must not be empty");
  for (int r : test_ratios) {
    if (r < 1) fail("test_ratios", "entries must be at least 1");
  }
  if (shape.d < 4 || shape.d % 4 != 0) fail("shape.d", "must be a positive multiple of 4");
  if (shape.gcn_hidden < 1 || shape.gcn_layers < 1) fail("shape.gcn", "hidden width and layers must be positive");
  if (shape.cnn_embedding < 1 || shape.cnn_filters < 1 || shape.cnn_width < 1) fail("shape.cnn", "must be positive");
  if (shape.sequence_length < shape.cnn_width) fail("shape.sequence_length", "must be at least the filter width");
  for (int v : drop_views) {
    if (v < 1 || v > 3) fail("drop_views", "entries must be 1, 2 or 3");
  }
  if (!drop_views.empty() && !is_reaction_keyed(stratification)) fail("drop_views", "needs a reaction-feature keying");
  if (drop_views.size() > 1) fail("drop_views", "at least two views must remain");
  if ((drop_compound_strat || drop_sequence_strat) && stratification != Stratification::CompoundSequence) {
    fail("drop_compound_strat/drop_sequence_strat", "need compound+sequence stratification");
  }
  if (drop_compound_strat && drop_sequence_strat) fail("drop_compound_strat/drop_sequence_strat", "cannot drop both");
}

std::string to_json(const TrainConfig& c) {
  json j;
  j["tau"] = c.tau;
  j["phase1_epochs"] = c.phase1_epochs;
  j["phase2_epochs"] = c.phase2_epochs;
  j["batch_size"] = c.batch_size;
  j["predictor_batch"] = c.predictor_batch;
  j["learning_rate"] = c.learning_rate;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["epsilon"] = c.epsilon;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["negative_ratio"] = c.negative_ratio;
  j["denominator"] = std::string(con::to_string(c.denominator));
  j["stratification"] = std::string(to_string(c.stratification));
  j["drop_views"] = std::vector<int>(c.drop_views.begin(), c.drop_views.end());
  j["drop_compound_strat"] = c.drop_compound_strat;
  j["drop_sequence_strat"] = c.drop_sequence_strat;
  j["test_ratios"] = c.test_ratios;
  j["unseen_ratio"] = c.unseen_ratio;
  j["shape"] = {{"d", c.shape.d},
                {"gcn_hidden", c.shape.gcn_hidden},
                {"gcn_layers", c.shape.gcn_layers},
                {"cnn_embedding", c.shape.cnn_embedding},
                {"cnn_filters", c.shape.cnn_filters},
                {"cnn_width", c.shape.cnn_width},
                {"sequence_length", c.shape.sequence_length}};
  return j.dump();
}

TrainConfig config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::ConfigError, "config must be an object");
  TrainConfig c;
  auto get = [](const json& node, const std::string& key, auto& dst) {
    using T = std::remove_cvref_t<decltype(dst)>;
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!node.is_number()) throw Error(ErrorKind::ConfigError, key + " must be a number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!node.is_boolean()) throw Error(ErrorKind::ConfigError, key + " must be a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!node.is_number_integer()) throw Error(ErrorKind::ConfigError, key + " must be an integer");
        if (std::is_unsigned_v<T> && node.is_number_integer() && !node.is_number_unsigned()) {
          throw Error(ErrorKind::ConfigError, key + " must be non-negative");
        }
      }
      dst = node.get<T>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::ConfigError, key + ": " + e.what());
    }
  };
  for (const auto& [key, value] : j.items()) {
    if (key == "tau") get(value, key, c.tau);
    else if (key == "phase1_epochs") get(value, key, c.phase1_epochs);
    else if (key == "phase2_epochs") get(value, key, c.phase2_epochs);
    else if (key == "batch_size") get(value, key, c.batch_size);
    else if (key == "predictor_batch") get(value, key, c.predictor_batch);
    else if (key == "learning_rate") get(value, key, c.learning_rate);
    else if (key == "beta1") get(value, key, c.beta1);
    else if (key == "beta2") get(value, key, c.beta2);
    else if (key == "epsilon") get(value, key, c.epsilon);
    else if (key == "patience") get(value, key, c.patience);
    else if (key == "seed") get(value, key, c.seed);
    else if (key == "negative_ratio") get(value, key, c.negative_ratio);
    else if (key == "unseen_ratio") get(value, key, c.unseen_ratio);
    else if (key == "drop_compound_strat") get(value, key, c.drop_compound_strat);
    else if (key == "drop_sequence_strat") get(value, key, c.drop_sequence_strat);
    else if (key == "denominator" || key == "stratification") {
      if (!value.is_string()) throw Error(ErrorKind::ConfigError, key + " must be a string");
      if (key == "denominator") c.denominator = con::parse_denominator(value.get<std::string>());
      else c.stratification = parse_stratification(value.get<std::string>());
    } else if (key == "drop_views" || key == "test_ratios") {
      if (!value.is_array()) throw Error(ErrorKind::ConfigError, key + " must be an array of integers");
      std::vector<int> list;
      for (const auto& v : value) {
        int x = 0;
        get(v, key, x);
        list.push_back(x);
      }
      if (key == "drop_views") c.drop_views = std::set<int>(list.begin(), list.end());
      else c.test_ratios = list;
    } else if (key == "shape") {
      if (!value.is_object()) throw Error(ErrorKind::ConfigError, "shape must be an object");
      for (const auto& [k, v] : value.items()) {
        const std::string name = "shape." + k;
        if (k == "d") get(v, name, c.shape.d);
        else if (k == "gcn_hidden") get(v, name, c.shape.gcn_hidden);
        else if (k == "gcn_layers") get(v, name, c.shape.gcn_layers);
        else if (k == "cnn_embedding") get(v, name, c.shape.cnn_embedding);
        else if (k == "cnn_filters") get(v, name, c.shape.cnn_filters);
        else if (k == "cnn_width") get(v, name, c.shape.cnn_width);
        else if (k == "sequence_length") get(v, name, c.shape.sequence_length);
        else throw Error(ErrorKind::ConfigError, "unknown config key '" + name + "'");
      }
    } else {
      throw Error(ErrorKind::ConfigError, "unknown config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

void adam_step(std::span<ad::Parameter* const> params, AdamState& state, const AdamConfig& config) {
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.m.size() != params.size()) {
    throw Error(ErrorKind::ShapeMismatch, "adam state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                                              std::to_string(params.size()));
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Parameter& p = *params[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols() || state.m[i].rows() != p.value.rows() ||
        state.m[i].cols() != p.value.cols()) {
      throw Error(ErrorKind::ShapeMismatch, "adam: parameter '" + p.name + "' does not match its gradient or state");
    }
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * p.grad;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * p.grad.cwiseAbs2();
    const auto m_hat = state.m[i].array() / c1;
    const auto v_hat = state.v[i].array() / c2;
    p.value.array() -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
  }
}

// ---------------------------------------------------------------------------

std::vector<enc::ParameterGroup*> Model::groups() {
  std::vector<enc::ParameterGroup*> out;
  for (const char* name : kGroupOrder) {
    if (auto it = gcn.find(name); it != gcn.end()) out.push_back(&it->second.group);
    if (auto it = cnn.find(name); it != cnn.end()) out.push_back(&it->second.group);
  }
  out.push_back(&predictor.group);
  return out;
}

std::vector<const enc::ParameterGroup*> Model::groups() const {
  auto mutable_groups = const_cast<Model*>(this)->groups();
  return {mutable_groups.begin(), mutable_groups.end()};
}

std::vector<enc::ParameterGroup*> Model::encoder_groups() {
  auto out = groups();
  out.pop_back();
  return out;
}

int Model::feature_width() const { return predictor.widths.front(); }

Model build_model(const TrainConfig& config) {
  config.validate();
  const ModelShape& s = config.shape;
  Rng rng(mix_seed(config.seed, {kInit}));
  auto gcn_shape = [&](int out) {
    enc::GcnShape g;
    g.hidden = s.gcn_hidden;
    g.layers = s.gcn_layers;
    g.fc_hidden = 2 * s.d;
    g.output = out;
    return g;
  };
  auto cnn_shape = [&](int out) {
    enc::CnnShape c;
    c.embedding = s.cnn_embedding;
    c.filters = s.cnn_filters;
    c.width = s.cnn_width;
    c.length = s.sequence_length;
    c.output = out;
    return c;
  };
  Model m;
  const int d = s.d;
  const int half = d / 2;
  auto add_gcn = [&](const char* name, int out) { m.gcn.emplace(name, enc::make_gcn(name, gcn_shape(out), rng)); };
  auto add_cnn = [&](const char* name, int out) { m.cnn.emplace(name, enc::make_cnn(name, cnn_shape(out), rng)); };
  int width = 0;
  switch (config.stratification) {
    case Stratification::None:
      m.kind = ModelKind::Baseline;
      add_gcn("baseline-gcn", d);
      add_cnn("baseline-cnn", d);
      width = 2 * d;
      break;
    case Stratification::Compound:
    case Stratification::Sequence:
    case Stratification::CompoundSequence: {
      m.kind = ModelKind::Pairwise;
      const bool phase_a = config.stratification != Stratification::Sequence && !config.drop_compound_strat;
      const bool phase_b = config.stratification != Stratification::Compound && !config.drop_sequence_strat;
      if (phase_a) {
        add_gcn("gcn-1A", d);
        add_cnn("cnn-1A", half);
        width += 2 * d;
      }
      if (phase_b) {
        add_gcn("gcn-1B", half);
        add_cnn("cnn-1B", d);
        width += 2 * d;
      }
      break;
    }
    case Stratification::Reaction:
    case Stratification::RClass:
    case Stratification::EC:
      m.kind = ModelKind::ThreeView;
      if (!config.drop_views.contains(1)) {
        add_gcn("cc-gcn", half);
        width += d;
      }
      if (!config.drop_views.contains(2)) {
        add_gcn("cs-gcn", half);
        add_cnn("cs-cnn", half);
        width += d;
      }
      if (!config.drop_views.contains(3)) {
        add_cnn("ss-cnn", half);
        width += d;
      }
      break;
  }
  m.predictor = enc::make_predictor("predictor", width, rng);
  return m;
}

const enc::GraphInput& ObjectStore::graph(const data::Id& id) const {
  auto it = graphs.find(id);
  if (it == graphs.end()) throw Error(ErrorKind::DanglingReference, "no graph for compound '" + id + "'");
  return it->second;
}

const std::vector<int>& ObjectStore::sequence(const data::Id& id) const {
  auto it = sequences.find(id);
  if (it == sequences.end()) throw Error(ErrorKind::DanglingReference, "no encoding for sequence '" + id + "'");
  return it->second;
}

ObjectStore build_store(const std::map<data::Id, std::string>& compounds,
                        const std::map<data::Id, std::string>& sequences, int sequence_length) {
  ObjectStore store;
  for (const auto& [id, smiles] : compounds) {
    try {
      store.graphs.emplace(id, enc::graph_input(chemio::parse_smiles(smiles)));
    } catch (const Error& e) {
      rethrow_with_context(e, "compound '" + id + "'");
    }
  }
  for (const auto& [id, residues] : sequences) {
    try {
      store.sequences.emplace(id, chemio::encode_fasta(residues, static_cast<std::size_t>(sequence_length)).codes);
    } catch (const Error& e) {
      rethrow_with_context(e, "sequence '" + id + "'");
    }
  }
  return store;
}

// ---------------------------------------------------------------------------

std::string TrainingLog::jsonl() const {
  std::string out;
  for (const auto& r : records) {
    json j;
    j["phase"] = r.phase;
    j["epoch"] = r.epoch;
    j["loss"] = r.loss;
    j["val_loss"] = r.val_loss ? json(*r.val_loss) : json(nullptr);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string TrainingLog::digest() const {
  const std::string text = jsonl();
  return hex32(crc(crc32(0L, Z_NULL, 0), text.data(), text.size()));
}

std::uint32_t group_checksum(const enc::ParameterGroup& group) {
  std::uint32_t state = static_cast<std::uint32_t>(crc32(0L, Z_NULL, 0));
  for (const auto& p : group.params) {
    state = crc(state, p.name.data(), p.name.size());
    const std::int64_t shape[2] = {p.value.rows(), p.value.cols()};
    state = crc(state, shape, sizeof shape);
    state = crc(state, p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(double));
  }
  return state;
}

// -- Phase 1 -------------------------------------------------------------------

namespace {

using BatchLoss = std::function<Var(ad::Tape&, const strat::ContrastiveBatch&)>;

void run_phase1(const std::string& phase, const strat::CongruentViewSet& views,
                std::vector<enc::ParameterGroup*> groups, const BatchLoss& batch_loss, std::uint64_t salt,
                const TrainConfig& config, TrainingLog& log) {
  const auto params = params_of(groups);
  const auto k = static_cast<std::size_t>(config.batch_size);
  const std::size_t batches = (views.eligible_keys() + k - 1) / k;
  AdamState state;
  for (int epoch = 0; epoch < config.phase1_epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      try {
        const auto batch = strat::sample_batch(views, k, mix_seed(config.seed, {salt, static_cast<std::uint64_t>(epoch), b}));
        ad::Tape tape;
        Var loss = batch_loss(tape, batch);
        check_finite(loss);
        zero_grads(params);
        tape.backward(loss);
        adam_step(params, state, adam_config(config));
        total += loss.item();
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NonFiniteValue && e.kind() != ErrorKind::ZeroNormEmbedding) throw;
        rethrow_with_context(e, "phase " + phase + " epoch " + std::to_string(epoch) + " batch " + std::to_string(b));
      }
    }
    log.records.push_back({phase, epoch, total / static_cast<double>(batches), std::nullopt});
  }
}

std::vector<data::Id> field(const strat::ContrastiveBatch& batch, std::size_t view, bool second) {
  std::vector<data::Id> out;
  out.reserve(batch.size());
  for (const auto& e : batch.entries) out.push_back(second ? e.views[view].second : e.views[view].first);
  return out;
}

void require_keys(const std::optional<strat::CongruentViewSet>& views, const char* what, const TrainConfig& config) {
  if (!views) throw Error(ErrorKind::ConfigError, std::string(what) + " view set is required for this stratification");
  if (views->eligible_keys() < static_cast<std::size_t>(config.batch_size)) {
    throw Error(ErrorKind::BatchTooLarge, std::string(what) + " views: batch size " + std::to_string(config.batch_size) +
                                              " exceeds " + std::to_string(views->eligible_keys()) + " eligible keys");
  }
}

}  // namespace

void train_contrastive(Model& model, const Phase1Views& views, const ObjectStore& store, const TrainConfig& config,
                       TrainingLog& log) {
  config.validate();
  const con::Temperature tau(config.tau);
  const auto den = config.denominator;
  if (model.kind == ModelKind::Baseline) throw Error(ErrorKind::ConfigError, "the baseline has no contrastive phase");

  if (model.kind == ModelKind::Pairwise) {
    const bool phase_a = model.gcn.contains("gcn-1A");
    const bool phase_b = model.gcn.contains("gcn-1B");
    if (phase_a) require_keys(views.compound, "compound-keyed", config);
    if (phase_b) require_keys(views.sequence, "sequence-keyed", config);
    if (phase_a) {
      auto& g = model.gcn.at("gcn-1A");
      auto& c = model.cnn.at("cnn-1A");
      run_phase1("1A", *views.compound, {&g.group, &c.group},
                 [&](ad::Tape& tape, const strat::ContrastiveBatch& batch) {
                   const auto gb = enc::bind(tape, g.group);
                   const auto cb = enc::bind(tape, c.group);
                   const auto s1 = field(batch, 1, false), s2 = field(batch, 1, true);
                   Var z1 = encode_ids(g, gb, store, field(batch, 0, false));
                   Var z2 = encode_ids(c, cb, store, s1, &s2);
                   return con::total_loss(z1, z2, tau, den);
                 },
                 kPhase1A, config, log);
    }
    if (phase_b) {
      auto& g = model.gcn.at("gcn-1B");
      auto& c = model.cnn.at("cnn-1B");
      run_phase1("1B", *views.sequence, {&g.group, &c.group},
                 [&](ad::Tape& tape, const strat::ContrastiveBatch& batch) {
                   const auto gb = enc::bind(tape, g.group);
                   const auto cb = enc::bind(tape, c.group);
                   const auto c1 = field(batch, 0, false), c2 = field(batch, 0, true);
                   Var z1 = encode_ids(g, gb, store, c1, &c2);
                   Var z2 = encode_ids(c, cb, store, field(batch, 1, false));
                   return con::total_loss(z1, z2, tau, den);
                 },
                 kPhase1B, config, log);
    }
  } else {
    require_keys(views.reaction, "reaction-keyed", config);
    run_phase1("1", *views.reaction, model.encoder_groups(),
               [&](ad::Tape& tape, const strat::ContrastiveBatch& batch) {
                 std::vector<Var> z;
                 if (auto it = model.gcn.find("cc-gcn"); it != model.gcn.end()) {
                   const auto b = enc::bind(tape, it->second.group);
                   const auto second = field(batch, 0, true);
                   z.push_back(encode_ids(it->second, b, store, field(batch, 0, false), &second));
                 }
                 if (auto it = model.gcn.find("cs-gcn"); it != model.gcn.end()) {
                   auto& cnn = model.cnn.at("cs-cnn");
                   const auto gb = enc::bind(tape, it->second.group);
                   const auto cb = enc::bind(tape, cnn.group);
                   z.push_back(ad::concat(encode_ids(it->second, gb, store, field(batch, 1, false)),
                                          encode_ids(cnn, cb, store, field(batch, 1, true))));
                 }
                 if (auto it = model.cnn.find("ss-cnn"); it != model.cnn.end()) {
                   const auto b = enc::bind(tape, it->second.group);
                   const auto second = field(batch, 2, true);
                   z.push_back(encode_ids(it->second, b, store, field(batch, 2, false), &second));
                 }
                 return con::multiview_loss(z, tau, den);
               },
               kPhase1Multi, config, log);
  }
  for (auto* g : model.encoder_groups()) g->frozen = true;
}

// -- Phase 2 -------------------------------------------------------------------

Matrix pair_features(Model& model, const ObjectStore& store, std::span<const data::LabeledPair> pairs) {
  if (model.kind == ModelKind::Baseline) throw Error(ErrorKind::ConfigError, "the baseline has no frozen features");
  ad::Tape tape;
  std::vector<data::Id> cs, ss;
  for (const auto& p : pairs) {
    cs.push_back(p.compound);
    ss.push_back(p.sequence);
  }
  std::vector<Var> blocks;
  auto gcn = [&](const char* name) {
    auto& e = model.gcn.at(name);
    return encode_ids(e, enc::bind(tape, e.group, false), store, cs);
  };
  auto cnn = [&](const char* name) {
    auto& e = model.cnn.at(name);
    return encode_ids(e, enc::bind(tape, e.group, false), store, ss);
  };
  // Single-object views fill both halves of a Siamese slot.
  if (model.gcn.contains("gcn-1A")) {
    Var a = cnn("cnn-1A");
    blocks.push_back(gcn("gcn-1A"));
    blocks.push_back(a);
    blocks.push_back(a);
  }
  if (model.gcn.contains("gcn-1B")) {
    Var b = gcn("gcn-1B");
    blocks.push_back(b);
    blocks.push_back(b);
    blocks.push_back(cnn("cnn-1B"));
  }
  if (model.gcn.contains("cc-gcn")) {
    Var v = gcn("cc-gcn");
    blocks.push_back(v);
    blocks.push_back(v);
  }
  if (model.gcn.contains("cs-gcn")) {
    blocks.push_back(gcn("cs-gcn"));
    blocks.push_back(cnn("cs-cnn"));
  }
  if (model.cnn.contains("ss-cnn")) {
    Var v = cnn("ss-cnn");
    blocks.push_back(v);
    blocks.push_back(v);
  }
  return ad::concat(blocks).value();
}

PredictorResult train_predictor(Model& model, const ObjectStore& store, std::span<const data::LabeledPair> train,
                                std::span<const data::LabeledPair> validation, const TrainConfig& config,
                                TrainingLog& log, const EpochHook& hook) {
  config.validate();
  std::map<std::string, std::uint32_t> before;
  for (auto* g : model.encoder_groups()) {
    if (!g->frozen) throw Error(ErrorKind::FrozenViolation, "encoder group '" + g->name + "' is not frozen");
    before[g->name] = group_checksum(*g);
  }
  const LabeledRows tr = labeled_rows(train, "training");
  const LabeledRows va = labeled_rows(validation, "validation");
  const Matrix x_train = pair_features(model, store, tr.pairs);
  const Matrix x_val = pair_features(model, store, va.pairs);

  auto logits_from = [&model](const Matrix& x) {
    const Matrix* features = &x;
    return [&model, features](ad::Tape& tape, std::span<const std::size_t> rows, bool train_mode) {
      const auto bound = enc::bind(tape, model.predictor.group, train_mode);
      return enc::predict(model.predictor, bound, tape.constant(select_rows(*features, rows)));
    };
  };
  const auto result = fit_with_early_stopping("2", {&model.predictor.group}, tr, va, logits_from(x_train),
                                              logits_from(x_val), kPhase2, config, log, model, hook);
  for (auto* g : model.encoder_groups()) {
    if (group_checksum(*g) != before.at(g->name)) {
      throw Error(ErrorKind::FrozenViolation, "encoder group '" + g->name + "' changed during predictor training");
    }
  }
  return result;
}

PredictorResult train_baseline(Model& model, const ObjectStore& store, std::span<const data::LabeledPair> train,
                               std::span<const data::LabeledPair> validation, const TrainConfig& config,
                               TrainingLog& log) {
  config.validate();
  if (model.kind != ModelKind::Baseline) throw Error(ErrorKind::ConfigError, "train_baseline needs a baseline model");
  const LabeledRows tr = labeled_rows(train, "training");
  const LabeledRows va = labeled_rows(validation, "validation");
  auto& gcn = model.gcn.at("baseline-gcn");
  auto& cnn = model.cnn.at("baseline-cnn");
  auto logits_for = [&](const LabeledRows& set) {
    const LabeledRows* rows_of = &set;
    return [&, rows_of](ad::Tape& tape, std::span<const std::size_t> rows, bool train_mode) {
      std::vector<data::Id> cs, ss;
      for (auto r : rows) {
        cs.push_back(rows_of->pairs[r].compound);
        ss.push_back(rows_of->pairs[r].sequence);
      }
      const auto gb = enc::bind(tape, gcn.group, train_mode);
      const auto cb = enc::bind(tape, cnn.group, train_mode);
      const auto pb = enc::bind(tape, model.predictor.group, train_mode);
      return enc::predict(model.predictor, pb,
                          ad::concat(encode_ids(gcn, gb, store, cs), encode_ids(cnn, cb, store, ss)));
    };
  };
  return fit_with_early_stopping("baseline", model.groups(), tr, va, logits_for(tr), logits_for(va), kBaseline,
                                 config, log, model, {});
}

std::vector<double> score(Model& model, const ObjectStore& store, std::span<const data::LabeledPair> pairs) {
  if (pairs.empty()) return {};
  ad::Tape tape;
  const auto pb = enc::bind(tape, model.predictor.group, false);
  Var logits;
  if (model.kind == ModelKind::Baseline) {
    std::vector<data::Id> cs, ss;
    for (const auto& p : pairs) {
      cs.push_back(p.compound);
      ss.push_back(p.sequence);
    }
    auto& gcn = model.gcn.at("baseline-gcn");
    auto& cnn = model.cnn.at("baseline-cnn");
    logits = enc::predict(model.predictor, pb,
                          ad::concat(encode_ids(gcn, enc::bind(tape, gcn.group, false), store, cs),
                                     encode_ids(cnn, enc::bind(tape, cnn.group, false), store, ss)));
  } else {
    logits = enc::predict(model.predictor, pb, tape.constant(pair_features(model, store, pairs)));
  }
  const Matrix& v = logits.value();
  return std::vector<double>(v.data(), v.data() + v.size());
}

// -- checkpoints -----------------------------------------------------------------

Checkpoint make_checkpoint(const Model& model, const TrainConfig& config, const TrainingLog& log) {
  Checkpoint c;
  c.config_json = to_json(config);
  c.log_digest = log.digest();
  for (const auto* g : model.groups()) c.groups.push_back(*g);
  return c;
}

Model restore_model(const Checkpoint& checkpoint) {
  Model model = build_model(config_from_json(checkpoint.config_json));
  auto groups = model.groups();
  if (groups.size() != checkpoint.groups.size()) {
    throw Error(ErrorKind::SchemaError, "checkpoint has " + std::to_string(checkpoint.groups.size()) +
                                            " groups, the configured model has " + std::to_string(groups.size()));
  }
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& src = checkpoint.groups[i];
    auto& dst = *groups[i];
    if (src.name != dst.name || src.params.size() != dst.params.size()) {
      throw Error(ErrorKind::SchemaError, "checkpoint group '" + src.name + "' does not match model group '" + dst.name + "'");
    }
    for (std::size_t j = 0; j < src.params.size(); ++j) {
      auto& p = dst.params[j];
      const auto& q = src.params[j];
      if (p.name != q.name || p.value.rows() != q.value.rows() || p.value.cols() != q.value.cols()) {
        throw Error(ErrorKind::SchemaError, "tensor '" + q.name + "' in group '" + src.name + "' has the wrong name or shape");
      }
      p.value = q.value;
      p.zero_grad();
    }
    dst.frozen = src.frozen;
  }
  return model;
}

std::string serialize(const Checkpoint& checkpoint) {
  Writer w;
  w.out.append("CSI1");
  w.u32(checkpoint.version);
  w.str64(checkpoint.config_json);
  w.str64(checkpoint.log_digest);
  w.u32(static_cast<std::uint32_t>(checkpoint.groups.size()));
  std::vector<std::uint32_t> sums;
  for (const auto& g : checkpoint.groups) {
    const std::size_t start = w.out.size();
    write_group(w, g);
    sums.push_back(crc(static_cast<std::uint32_t>(crc32(0L, Z_NULL, 0)), w.out.data() + start, w.out.size() - start));
  }
  for (auto s : sums) w.u32(s);
  return w.out;
}

Checkpoint deserialize(std::string_view bytes) {
  Reader r{bytes};
  if (r.bytes(4) != "CSI1") throw Error(ErrorKind::SchemaError, "not a checkpoint (bad magic)");
  Checkpoint c;
  c.version = r.u32();
  if (c.version != kCheckpointVersion) {
    throw Error(ErrorKind::VersionMismatch, "checkpoint format version " + std::to_string(c.version) +
                                                ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  c.config_json = r.str64();
  c.log_digest = r.str64();
  const std::uint32_t count = r.u32();
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t start = r.pos;
    enc::ParameterGroup g;
    g.name = r.str32();
    g.frozen = r.u8() != 0;
    const std::uint32_t tensors = r.u32();
    for (std::uint32_t t = 0; t < tensors; ++t) {
      std::string name = r.str32();
      const std::uint32_t rows = r.u32();
      const std::uint32_t cols = r.u32();
      r.need(static_cast<std::size_t>(rows) * cols * 8);
      Matrix m(rows, cols);
      for (Index k = 0; k < m.size(); ++k) m.data()[k] = r.f64();
      g.params.emplace_back(std::move(name), std::move(m));
    }
    spans.emplace_back(start, r.pos - start);
    c.groups.push_back(std::move(g));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t stored = r.u32();
    const auto [start, size] = spans[i];
    const std::uint32_t actual = crc(static_cast<std::uint32_t>(crc32(0L, Z_NULL, 0)), bytes.data() + start, size);
    if (stored != actual) {
      throw Error(ErrorKind::ChecksumMismatch, "group '" + c.groups[i].name + "' checksum " + hex32(actual) +
                                                   " does not match stored " + hex32(stored));
    }
  }
  if (r.pos != bytes.size()) throw Error(ErrorKind::SchemaError, "trailing bytes after checkpoint");
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  const std::string bytes = serialize(checkpoint);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoError, "short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

// -- experiment --------------------------------------------------------------------

const metrics::Report& ExperimentResult::report(std::string_view name) const {
  for (const auto& e : evaluations) {
    if (e.name == name) return e.report;
  }
  throw Error(ErrorKind::SchemaError, "no evaluation named '" + std::string(name) + "'");
}

ExperimentSplit prepare_experiment(const data::InteractionSet& all, const TrainConfig& config) {
  config.validate();
  data::SplitSpec spec;
  spec.seed = config.seed;
  ExperimentSplit out;
  out.unseen = data::build_unseen_test(all, spec);
  out.parts = data::split(out.unseen.reduced, spec);
  const std::set<data::Pair>& known = all.positives;
  out.train = data::sample_negatives(out.parts.train, config.negative_ratio, mix_seed(config.seed, {kTrainNeg}), known);
  out.validation =
      data::sample_negatives(out.parts.validation, config.negative_ratio, mix_seed(config.seed, {kValNeg}), known);
  for (int r : config.test_ratios) {
    out.evaluations.push_back(
        {"test@" + std::to_string(r),
         data::sample_negatives(out.parts.test, r, mix_seed(config.seed, {kTestNeg, static_cast<std::uint64_t>(r)}), known)});
  }
  out.evaluations.push_back({"unseen@" + std::to_string(config.unseen_ratio),
                             data::sample_negatives(out.unseen.unseen, config.unseen_ratio,
                                                    mix_seed(config.seed, {kUnseenNeg}), known)});
  return out;
}

std::vector<Evaluation> evaluate_model(Model& model, const ObjectStore& store, std::span<const EvaluationSet> sets) {
  std::vector<Evaluation> out;
  for (const auto& set : sets) {
    const auto logits = score(model, store, set.pairs);
    std::vector<metrics::LabeledScore> rows;
    rows.reserve(set.pairs.size());
    for (std::size_t i = 0; i < set.pairs.size(); ++i) {
      rows.push_back({set.pairs[i].compound, set.pairs[i].sequence, logits[i], set.pairs[i].label});
    }
    out.push_back({set.name, metrics::evaluate(rows)});
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentData& input, const TrainConfig& config, const EpochHook& hook) {
  config.validate();
  if (is_reaction_keyed(config.stratification) && !input.reactions) {
    throw Error(ErrorKind::ConfigError, "stratification '" + std::string(to_string(config.stratification)) +
                                            "' needs a reaction dataset");
  }
  const data::InteractionSet& all = input.interactions;
  const ExperimentSplit prepared = prepare_experiment(all, config);
  const auto& unseen = prepared.unseen;
  const auto& parts = prepared.parts;

  ExperimentResult result;
  const ObjectStore store = build_store(all.compounds, all.sequences, config.shape.sequence_length);
  result.model = build_model(config);
  result.counts["train_positives"] = parts.train.positives.size();
  result.counts["validation_positives"] = parts.validation.positives.size();
  result.counts["test_positives"] = parts.test.positives.size();
  result.counts["unseen_positives"] = unseen.unseen.positives.size();
  result.counts["held_out_compounds"] = unseen.held_out_compounds.size();
  result.counts["held_out_sequences"] = unseen.held_out_sequences.size();

  if (config.stratification == Stratification::None) {
    result.predictor = train_baseline(result.model, store, prepared.train, prepared.validation, config, result.log);
  } else {
    Phase1Views views;
    if (is_reaction_keyed(config.stratification)) {
      // Keep held-out objects and non-training interactions out of pre-training.
      data::ReactionSet reduced = *input.reactions;
      for (auto& r : reduced.reactions) {
        for (auto* side : {&r.reactants, &r.products}) {
          std::erase_if(*side, [&](const data::Id& id) { return unseen.held_out_compounds.contains(id); });
        }
        std::erase_if(r.enzymes, [&](const data::Id& id) { return unseen.held_out_sequences.contains(id); });
      }
      strat::ReactionViewOptions options;
      options.allowed_pairs = &parts.train.positives;
      const auto keying = config.stratification == Stratification::Reaction ? strat::Keying::Reaction
                          : config.stratification == Stratification::RClass ? strat::Keying::RClass
                                                                             : strat::Keying::EC;
      views.reaction = strat::stratify_by_reaction_feature(reduced, keying, options);
      result.counts["strata_reaction"] = views.reaction->eligible_keys();
    } else {
      if (result.model.gcn.contains("gcn-1A")) {
        views.compound = strat::stratify_by_compound(parts.train);
        result.counts["strata_compound"] = views.compound->eligible_keys();
      }
      if (result.model.gcn.contains("gcn-1B")) {
        views.sequence = strat::stratify_by_sequence(parts.train);
        result.counts["strata_sequence"] = views.sequence->eligible_keys();
      }
    }
    train_contrastive(result.model, views, store, config, result.log);
    result.predictor =
        train_predictor(result.model, store, prepared.train, prepared.validation, config, result.log, hook);
  }

  result.evaluations = evaluate_model(result.model, store, prepared.evaluations);
  for (const auto& set : prepared.evaluations) result.counts["examples_" + set.name] = set.pairs.size();
  return result;
}

}  // namespace csi::pipe
