#pragma once

// Planted-structure benchmark data: compounds and sequences fall into blocks
// that share a structural motif, and interactions mostly stay inside a block.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>

#include "csi/datamodel.hpp"

namespace csi::synth {

struct SynthSpec {
  int blocks = 4;
  int compounds_per_block = 15;
  int sequences_per_block = 15;
  /// Each block splits into this many sub-groups with their own secondary
  /// motif; partners come from the compound's sub-group first.
  int subgroups = 3;
  /// Probability that an interaction partner is drawn from all sequences
  /// instead of the compound's own sub-group.
  double noise = 0.05;
  std::uint64_t seed = 0;
  /// Distinct sequence partners per compound (interaction mode).
  int partners_per_compound = 5;
  int min_length = 40;
  int max_length = 60;
  /// Emit a reaction bundle instead of drawing pairs directly.
  bool reactions = false;
  int reactions_per_block = 20;

  /// Throws Error{ConfigError}.
  void validate() const;
};

struct SynthBundle {
  data::InteractionSet interactions;
  std::optional<data::ReactionSet> reactions;
  std::map<data::Id, int> compound_block;
  std::map<data::Id, int> sequence_block;
  std::map<data::Id, int> compound_subgroup;
  std::map<data::Id, int> sequence_subgroup;
};

SynthBundle synthesize(const SynthSpec& spec);

/// interactions.tsv, blocks.tsv and, in reaction mode, reactions.jsonl with
/// its compounds.tsv / sequences.tsv.
void write_bundle(const SynthBundle& bundle, const std::filesystem::path& directory);

}  // namespace csi::synth
