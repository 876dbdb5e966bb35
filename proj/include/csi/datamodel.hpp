#pragma once

// Interaction and reaction datasets, splits, negative sampling, strata
// statistics.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace csi::data {

using Id = std::string;
/// (compound id, sequence id)
using Pair = std::pair<Id, Id>;

struct InteractionSet {
  std::map<Id, std::string> compounds;  // id -> SMILES
  std::map<Id, std::string> sequences;  // id -> residues
  std::set<Pair> positives;
  std::set<Pair> labeled_negatives;

  /// Throws DanglingReference / SchemaError when an invariant is broken.
  void validate() const;
};

struct LoadReport {
  std::size_t rows = 0;
  std::size_t duplicates = 0;
  std::size_t positives = 0;
  std::size_t labeled_negatives = 0;
  std::size_t compounds = 0;
  std::size_t sequences = 0;
};

struct Reaction {
  Id id;
  std::set<Id> reactants;
  std::set<Id> products;
  std::set<Id> enzymes;
  std::set<std::string> rclass;
  std::set<std::string> ec;
};

struct ReactionSet {
  std::vector<Reaction> reactions;
  std::map<Id, std::string> compounds;
  std::map<Id, std::string> sequences;
};

/// Every (compound in R u P, sequence in E) becomes a positive.
InteractionSet induced_interactions(const ReactionSet& reactions);

/// interactions.tsv: compound_id smiles sequence_id fasta label
InteractionSet load_interactions(const std::filesystem::path& path, LoadReport* report = nullptr);
void save_interactions(const InteractionSet& data, const std::filesystem::path& path);

/// reactions.jsonl with sibling compounds.tsv and sequences.tsv.
ReactionSet load_reactions(const std::filesystem::path& path);
void save_reactions(const ReactionSet& reactions, const std::filesystem::path& directory);

struct SplitSpec {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
  double unseen_fraction = 0.05;

  void validate() const;
};

struct Split {
  InteractionSet train;
  InteractionSet validation;
  InteractionSet test;
};

/// Seeded partition of the positives (and labeled negatives) by fraction.
Split split(const InteractionSet& data, const SplitSpec& spec);

struct UnseenSplit {
  InteractionSet reduced;
  InteractionSet unseen;
  std::set<Id> held_out_compounds;
  std::set<Id> held_out_sequences;
};

/// Holds out the least frequent compounds and sequences (independently,
/// ceil(fraction * n) of each, ties by id) together with every pair touching
/// them.
UnseenSplit build_unseen_test(const InteractionSet& data, const SplitSpec& spec);

struct LabeledPair {
  Id compound;
  Id sequence;
  int label = 0;

  friend bool operator==(const LabeledPair&, const LabeledPair&) = default;
};

/// All positives (label 1) followed by ratio * |positives| distinct negatives
/// (label 0): labeled negatives first, then uniform draws from the
/// compound x sequence grid. Pairs in `exclude` (in addition to the set's own
/// positives) are never drawn.
std::vector<LabeledPair> sample_negatives(const InteractionSet& data, int ratio, std::uint64_t seed,
                                          const std::set<Pair>& exclude = {});

struct StrataStatistics {
  double average_size = 0.0;
  double standard_deviation = 0.0;
  std::size_t maximum_size = 0;
  std::size_t minimum_size = 0;
  double average_sharing = 0.0;
  double average_jaccard = 0.0;
  std::size_t strata = 0;
};

StrataStatistics strata_stats(const std::map<std::string, std::set<Id>>& strata);

/// Table-style base counts.
struct BaseStatistics {
  std::size_t interactions = 0;
  std::size_t compounds = 0;
  std::size_t sequences = 0;
  double compound_to_sequence_ratio = 0.0;
};

BaseStatistics base_stats(const InteractionSet& data);

}  // namespace csi::data
