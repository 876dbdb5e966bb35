#include "csi/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "csi/error.hpp"

namespace csi::metrics {

namespace {

std::size_t positives_in(std::span<const ScoredItem> items) {
  return static_cast<std::size_t>(std::count_if(items.begin(), items.end(), [](const auto& i) { return i.label != 0; }));
}

double mean(const std::vector<double>& values) {
  // Pairwise summation keeps the result independent of chunking.
  auto rec = [&](auto&& self, std::size_t lo, std::size_t hi) -> double {
    if (hi - lo <= 8) return std::accumulate(values.begin() + static_cast<long>(lo), values.begin() + static_cast<long>(hi), 0.0);
    const std::size_t mid = lo + (hi - lo) / 2;
    return self(self, lo, mid) + self(self, mid, hi);
  };
  return rec(rec, 0, values.size()) / static_cast<double>(values.size());
}

}  // namespace

std::vector<std::size_t> rank_order(std::span<const ScoredItem> items) {
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return items[a].score > items[b].score; });
  return order;
}

double average_precision(std::span<const ScoredItem> items) {
  return average_precision_at(items, items.size());
}

double average_precision_at(std::span<const ScoredItem> items, std::size_t k) {
  const std::size_t positives = positives_in(items);
  if (positives == 0) throw Error(ErrorKind::NoPositives, "average precision needs at least one positive");
  const auto order = rank_order(items);
  const std::size_t cut = std::min(k, order.size());
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < cut; ++r) {
    if (items[order[r]].label != 0) {
      ++hits;
      total += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return hits == 0 ? 0.0 : total / static_cast<double>(hits);
}

double r_precision(std::span<const ScoredItem> items) {
  const std::size_t positives = positives_in(items);
  if (positives == 0) throw Error(ErrorKind::NoPositives, "R-precision needs at least one positive");
  const auto order = rank_order(items);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < positives; ++r) hits += items[order[r]].label != 0 ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(positives);
}

GroupedResult grouped_metric(std::span<const ScoredSet> sets, Metric metric, std::optional<std::size_t> at_k) {
  std::vector<double> values;
  GroupedResult out;
  for (const auto& set : sets) {
    if (positives_in(set.items) == 0) {
      ++out.skipped;
      continue;
    }
    if (metric == Metric::AveragePrecision) {
      values.push_back(at_k ? average_precision_at(set.items, *at_k) : average_precision(set.items));
    } else {
      values.push_back(r_precision(set.items));
    }
  }
  if (values.empty()) throw Error(ErrorKind::NoEligibleGroups, "no group has a positive item");
  out.groups = values.size();
  out.value = mean(values);
  return out;
}

GroupedResult precision_at_1(std::span<const ScoredSet> sets) {
  std::vector<double> values;
  GroupedResult out;
  for (const auto& set : sets) {
    if (positives_in(set.items) == 0) {
      ++out.skipped;
      continue;
    }
    values.push_back(set.items[rank_order(set.items).front()].label != 0 ? 1.0 : 0.0);
  }
  if (values.empty()) throw Error(ErrorKind::NoEligibleGroups, "no group has a positive item");
  out.groups = values.size();
  out.value = mean(values);
  return out;
}

std::vector<ScoredSet> group_scores(std::span<const LabeledScore> rows, GroupBy by) {
  std::map<std::string, ScoredSet> groups;
  for (const auto& row : rows) {
    const std::string& key = by == GroupBy::Compound ? row.compound : row.sequence;
    auto& set = groups[key];
    set.group = key;
    set.items.push_back({row.score, row.label});
  }
  std::vector<ScoredSet> out;
  out.reserve(groups.size());
  for (auto& [_, set] : groups) out.push_back(std::move(set));
  return out;
}

Report evaluate(std::span<const LabeledScore> rows) {
  Report report;
  std::vector<ScoredItem> flat;
  flat.reserve(rows.size());
  for (const auto& r : rows) flat.push_back({r.score, r.label});
  report.examples = flat.size();
  report.positives = positives_in(flat);
  report.ap = average_precision(flat);
  report.r_precision = r_precision(flat);
  for (GroupBy by : {GroupBy::Compound, GroupBy::Sequence}) {
    const auto sets = group_scores(rows, by);
    Report::Grouped g;
    const auto map = grouped_metric(sets, Metric::AveragePrecision);
    g.map = map.value;
    g.groups = map.groups;
    g.skipped = map.skipped;
    g.r_precision = grouped_metric(sets, Metric::RPrecision).value;
    g.map_at_3 = grouped_metric(sets, Metric::AveragePrecision, 3).value;
    g.precision_at_1 = precision_at_1(sets).value;
    (by == GroupBy::Compound ? report.by_compound : report.by_sequence) = g;
  }
  return report;
}

}  // namespace csi::metrics
