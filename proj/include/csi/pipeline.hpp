#pragma once

// Two-phase training: contrastive encoder pre-training, freezing, predictor
// training with weighted cross-entropy. Also the end-to-end baseline, Adam,
// checkpoints and the training log.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "csi/contrastive.hpp"
#include "csi/datamodel.hpp"
#include "csi/encoders.hpp"
#include "csi/metrics.hpp"
#include "csi/stratify.hpp"

namespace csi::pipe {

using ad::Matrix;

enum class Stratification { None, Compound, Sequence, CompoundSequence, Reaction, RClass, EC };

std::string_view to_string(Stratification s);
/// Accepts none, compound, sequence, compound+sequence, reaction, rclass, ec.
Stratification parse_stratification(std::string_view name);
bool is_reaction_keyed(Stratification s);

struct ModelShape {
  int d = 16;
  int gcn_hidden = 32;
  int gcn_layers = 3;
  int cnn_embedding = 32;
  int cnn_filters = 32;
  int cnn_width = 8;
  int sequence_length = 128;
};

struct TrainConfig {
  double tau = 0.07;
  int phase1_epochs = 700;
  int phase2_epochs = 200;
  int batch_size = 32;
  int predictor_batch = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int patience = 10;
  std::uint64_t seed = 0;
  int negative_ratio = 5;
  con::Denominator denominator = con::Denominator::Exclusive;
  ModelShape shape;

  Stratification stratification = Stratification::CompoundSequence;
  /// Reaction-keyed views to leave out, 1-based (V1, V2, V3).
  std::set<int> drop_views;
  bool drop_compound_strat = false;
  bool drop_sequence_strat = false;

  std::vector<int> test_ratios{1, 5, 10, 25};
  int unseen_ratio = 1;

  /// Throws Error{ConfigError} naming the offending field.
  void validate() const;
};

/// Canonical JSON (sorted keys, fixed number formatting).
std::string to_json(const TrainConfig& config);
/// Unknown keys and wrong types are ConfigErrors. Missing keys keep defaults.
TrainConfig config_from_json(std::string_view json);

// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;
};

/// One bias-corrected Adam update from each parameter's accumulated grad.
void adam_step(std::span<ad::Parameter* const> params, AdamState& state, const AdamConfig& config);

// ---------------------------------------------------------------------------

enum class ModelKind { Pairwise, ThreeView, Baseline };

/// Encoders keyed by group name plus the predictor. Which groups exist
/// depends on the kind and the ablation masks.
struct Model {
  ModelKind kind = ModelKind::Pairwise;
  std::map<std::string, enc::GcnEncoder> gcn;
  std::map<std::string, enc::CnnEncoder> cnn;
  enc::Predictor predictor;

  /// Groups in canonical (checkpoint) order; the predictor is last.
  std::vector<enc::ParameterGroup*> groups();
  std::vector<const enc::ParameterGroup*> groups() const;
  std::vector<enc::ParameterGroup*> encoder_groups();
  int feature_width() const;
};

Model build_model(const TrainConfig& config);

/// Parsed graphs and encoded sequences for every object in a dataset.
struct ObjectStore {
  std::map<data::Id, enc::GraphInput> graphs;
  std::map<data::Id, std::vector<int>> sequences;

  const enc::GraphInput& graph(const data::Id& id) const;
  const std::vector<int>& sequence(const data::Id& id) const;
};

ObjectStore build_store(const std::map<data::Id, std::string>& compounds,
                        const std::map<data::Id, std::string>& sequences, int sequence_length);

// ---------------------------------------------------------------------------

struct LogRecord {
  std::string phase;
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> val_loss;
};

struct TrainingLog {
  std::vector<LogRecord> records;

  /// One JSON object per line.
  std::string jsonl() const;
  /// crc32 of jsonl(), as 8 lower-case hex digits.
  std::string digest() const;
};

struct Phase1Views {
  std::optional<strat::CongruentViewSet> compound;
  std::optional<strat::CongruentViewSet> sequence;
  std::optional<strat::CongruentViewSet> reaction;
};

/// Runs Phase 1A/1B (pairwise) or the multiview phase (three-view) and marks
/// the encoder groups frozen. Throws BatchTooLarge before any update when a
/// view set has fewer eligible keys than the batch size.
void train_contrastive(Model& model, const Phase1Views& views, const ObjectStore& store, const TrainConfig& config,
                       TrainingLog& log);

/// Frozen-encoder feature rows for (compound, sequence) pairs.
Matrix pair_features(Model& model, const ObjectStore& store, std::span<const data::LabeledPair> pairs);

/// Called after every predictor epoch; tests use it to tamper with weights.
using EpochHook = std::function<void(int epoch, Model& model)>;

struct PredictorResult {
  int epochs_run = 0;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  double positive_weight = 0.0;
};

/// Trains only the predictor (encoders must be frozen) with positive terms
/// weighted by negatives/positives, early stopping on validation loss and
/// restoring the best epoch. Throws FrozenViolation if any encoder parameter
/// changed, TooFewExamples if a set lacks a class.
PredictorResult train_predictor(Model& model, const ObjectStore& store, std::span<const data::LabeledPair> train,
                                std::span<const data::LabeledPair> validation, const TrainConfig& config,
                                TrainingLog& log, const EpochHook& hook = {});

/// End-to-end baseline training with the same early stopping rule.
PredictorResult train_baseline(Model& model, const ObjectStore& store, std::span<const data::LabeledPair> train,
                               std::span<const data::LabeledPair> validation, const TrainConfig& config,
                               TrainingLog& log);

/// Raw logits, one per pair.
std::vector<double> score(Model& model, const ObjectStore& store, std::span<const data::LabeledPair> pairs);

/// crc32 over every tensor's name, shape and bytes.
std::uint32_t group_checksum(const enc::ParameterGroup& group);

// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_json;
  std::string log_digest;
  std::vector<enc::ParameterGroup> groups;
};

Checkpoint make_checkpoint(const Model& model, const TrainConfig& config, const TrainingLog& log);
/// Rebuilds the model from the stored config and copies every tensor in.
Model restore_model(const Checkpoint& checkpoint);

std::string serialize(const Checkpoint& checkpoint);
/// Throws VersionMismatch, ChecksumMismatch or SchemaError.
Checkpoint deserialize(std::string_view bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

struct EvaluationSet {
  std::string name;  // e.g. "test@5" or "unseen@1"
  std::vector<data::LabeledPair> pairs;
};

struct Evaluation {
  std::string name;
  metrics::Report report;
};

struct ExperimentData {
  data::InteractionSet interactions;
  std::optional<data::ReactionSet> reactions;
};

struct ExperimentResult {
  Model model;
  TrainingLog log;
  std::vector<Evaluation> evaluations;
  std::optional<PredictorResult> predictor;
  std::map<std::string, std::size_t> counts;

  const metrics::Report& report(std::string_view name) const;
};

/// Everything a run evaluates on, derived only from the data and the seed.
struct ExperimentSplit {
  data::UnseenSplit unseen;
  data::Split parts;
  std::vector<data::LabeledPair> train;
  std::vector<data::LabeledPair> validation;
  std::vector<EvaluationSet> evaluations;
};

/// Unseen hold-out, 8:1:1 split and negatives for every set. Negatives never
/// include a known positive of the full dataset.
ExperimentSplit prepare_experiment(const data::InteractionSet& data, const TrainConfig& config);

std::vector<Evaluation> evaluate_model(Model& model, const ObjectStore& store, std::span<const EvaluationSet> sets);

/// Unseen hold-out, 8:1:1 split, negatives, stratification of the training
/// positives, training and evaluation. Baseline and CSI runs with one seed
/// see identical splits and negatives.
ExperimentResult run_experiment(const ExperimentData& data, const TrainConfig& config, const EpochHook& hook = {});

}  // namespace csi::pipe
