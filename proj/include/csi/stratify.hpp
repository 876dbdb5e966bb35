#pragma once

// Congruent view sets keyed by compound, sequence, or a reaction feature, and
// contrastive batch sampling over their keys.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "csi/datamodel.hpp"

namespace csi::strat {

enum class Keying { Compound, Sequence, Reaction, RClass, EC };

std::string_view to_string(Keying keying);
/// Throws Error{UnknownKeying}.
Keying parse_keying(std::string_view name);

enum class ViewKind { Compound, Sequence, CompoundPair, SequencePair, CompoundSequence };

/// One view payload. `second` is empty for single-object views.
struct ViewItem {
  ViewKind kind = ViewKind::Compound;
  data::Id first;
  data::Id second;

  friend auto operator<=>(const ViewItem&, const ViewItem&) = default;
};

/// All congruent views under one key. A view tuple takes one item from each
/// list, so the stratum holds prod(|views[i]|) tuples.
struct Stratum {
  std::string key;
  std::vector<std::vector<ViewItem>> views;

  std::size_t tuple_count() const;
};

struct CongruentViewSet {
  Keying keying = Keying::Compound;
  std::map<std::string, Stratum> strata;

  std::size_t eligible_keys() const;
};

CongruentViewSet stratify_by_compound(const data::InteractionSet& interactions);
CongruentViewSet stratify_by_sequence(const data::InteractionSet& interactions);

struct ReactionViewOptions {
  /// When set, View-2 (compound, sequence) items are restricted to these
  /// pairs, e.g. to keep held-out interactions out of pre-training.
  const std::set<data::Pair>* allowed_pairs = nullptr;
};

/// keying must be Reaction, RClass or EC; otherwise Error{UnknownKeying}.
/// Views: [0] reactant-product pairs, [1] compound-sequence pairs, [2]
/// sequence pairs (self-pair only for single-enzyme reactions). Strata with an
/// empty view are dropped.
CongruentViewSet stratify_by_reaction_feature(const data::ReactionSet& reactions, Keying keying,
                                              const ReactionViewOptions& options = {});

/// Key -> partner set (for compound/sequence keying), including size-1 strata.
std::map<std::string, std::set<data::Id>> partner_strata(const data::InteractionSet& interactions, Keying keying);

struct BatchEntry {
  std::string key;
  std::vector<ViewItem> views;
};

struct ContrastiveBatch {
  Keying keying = Keying::Compound;
  std::vector<BatchEntry> entries;

  std::size_t size() const { return entries.size(); }
};

/// k distinct keys drawn uniformly without replacement, then one uniformly
/// drawn item per view inside each stratum. Throws BatchTooLarge or
/// DegenerateBatch.
ContrastiveBatch sample_batch(const CongruentViewSet& views, std::size_t k, std::uint64_t seed);

/// Per-view object counts across strata.
struct ViewCountStatistics {
  std::size_t keys = 0;
  std::vector<std::size_t> total;
  std::vector<double> mean;
  std::vector<double> standard_deviation;
  std::vector<std::size_t> maximum;
};

ViewCountStatistics view_count_stats(const CongruentViewSet& views);

}  // namespace csi::strat
