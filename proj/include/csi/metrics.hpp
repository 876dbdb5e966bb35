#pragma once

// Ranking metrics over flat and grouped predictions. Items are ranked by
// descending score; equal scores keep their input order.

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace csi::metrics {

struct ScoredItem {
  double score = 0.0;
  int label = 0;
};

struct ScoredSet {
  std::vector<ScoredItem> items;
  std::string group;
};

/// Indices of `items` in rank order.
std::vector<std::size_t> rank_order(std::span<const ScoredItem> items);

/// Throws Error{NoPositives}.
double average_precision(std::span<const ScoredItem> items);
double r_precision(std::span<const ScoredItem> items);

/// AP over the top `k` ranks only: mean precision at each positive found
/// there. Zero when no positive makes the cut.
double average_precision_at(std::span<const ScoredItem> items, std::size_t k);

enum class Metric { AveragePrecision, RPrecision };

struct GroupedResult {
  double value = 0.0;
  std::size_t groups = 0;
  std::size_t skipped = 0;  // groups without a positive
};

/// Mean of the per-group metric over groups that have a positive. With
/// `at_k`, AP is truncated at rank k (MAP@k). Throws Error{NoEligibleGroups}.
GroupedResult grouped_metric(std::span<const ScoredSet> sets, Metric metric, std::optional<std::size_t> at_k = {});

/// Fraction of eligible groups whose top-ranked item is positive.
GroupedResult precision_at_1(std::span<const ScoredSet> sets);

/// Groups flat (compound, sequence, score, label) rows by one side.
struct LabeledScore {
  std::string compound;
  std::string sequence;
  double score = 0.0;
  int label = 0;
};
enum class GroupBy { Compound, Sequence };
std::vector<ScoredSet> group_scores(std::span<const LabeledScore> rows, GroupBy by);

/// The evaluation report's metric block.
struct Report {
  double ap = 0.0;
  double r_precision = 0.0;
  struct Grouped {
    double map = 0.0;
    double r_precision = 0.0;
    double map_at_3 = 0.0;
    double precision_at_1 = 0.0;
    std::size_t groups = 0;
    std::size_t skipped = 0;
  };
  Grouped by_compound;
  Grouped by_sequence;
  std::size_t examples = 0;
  std::size_t positives = 0;
};

Report evaluate(std::span<const LabeledScore> rows);

}  // namespace csi::metrics
