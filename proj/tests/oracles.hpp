#pragma once

// Brute-force reference implementations. They deliberately avoid the library's
// code paths: no sorting helpers, no tape, plain loops.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace oracle {

/// Rank of item i: 1 + items with a higher score + earlier items with an equal score.
inline std::size_t rank_of(const std::vector<double>& scores, std::size_t i) {
  std::size_t r = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > scores[i] || (scores[j] == scores[i] && j < i)) ++r;
  }
  return r;
}

/// Precision at rank r, recomputed from scratch.
inline double precision_at(const std::vector<double>& scores, const std::vector<int>& labels, std::size_t r) {
  std::size_t hits = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (rank_of(scores, j) <= r && labels[j] != 0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(r);
}

/// Mean precision at each positive ranked within the top k; 0 with no hit.
inline double average_precision(const std::vector<double>& scores, const std::vector<int>& labels, std::size_t k) {
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const std::size_t r = rank_of(scores, i);
    if (labels[i] != 0 && r <= k) {
      total += precision_at(scores, labels, r);
      ++hits;
    }
  }
  return hits == 0 ? 0.0 : total / static_cast<double>(hits);
}

inline double r_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::size_t positives = 0;
  for (int l : labels) positives += l != 0 ? 1 : 0;
  return precision_at(scores, labels, positives);
}

struct Group {
  std::vector<double> scores;
  std::vector<int> labels;
};

/// Mean of fn over groups holding at least one positive; -1 when none do.
template <typename Fn>
double grouped(const std::vector<Group>& groups, Fn fn) {
  double total = 0.0;
  std::size_t eligible = 0;
  for (const auto& g : groups) {
    bool any = false;
    for (int l : g.labels) any = any || l != 0;
    if (!any) continue;
    total += fn(g);
    ++eligible;
  }
  return eligible == 0 ? -1.0 : total / static_cast<double>(eligible);
}

inline double top_is_positive(const Group& g) {
  for (std::size_t i = 0; i < g.scores.size(); ++i) {
    if (rank_of(g.scores, i) == 1) return g.labels[i] != 0 ? 1.0 : 0.0;
  }
  return 0.0;
}

inline double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double dot = 0, na = 0, nb = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    dot += a(i) * b(i);
    na += a(i) * a(i);
    nb += b(i) * b(i);
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Direct summation of the in-batch loss with the positive excluded from
/// (or included in) the denominator.
inline double directional(const Eigen::MatrixXd& z1, const Eigen::MatrixXd& z2, double tau, bool include_positive) {
  const Eigen::Index k = z1.rows();
  double loss = 0.0;
  for (Eigen::Index n = 0; n < k; ++n) {
    const double pos = std::exp(cosine(z1.row(n).transpose(), z2.row(n).transpose()) / tau);
    double denom = 0.0;
    for (Eigen::Index m = 0; m < k; ++m) {
      if (m == n && !include_positive) continue;
      denom += std::exp(cosine(z1.row(n).transpose(), z2.row(m).transpose()) / tau);
    }
    loss += -std::log(pos / denom);
  }
  return loss / static_cast<double>(k);
}

inline double multiview(const std::vector<Eigen::MatrixXd>& views, double tau, bool include_positive) {
  double loss = 0.0;
  for (std::size_t i = 0; i < views.size(); ++i) {
    for (std::size_t j = i + 1; j < views.size(); ++j) {
      loss += directional(views[i], views[j], tau, include_positive) +
              directional(views[j], views[i], tau, include_positive);
    }
  }
  return loss;
}

}  // namespace oracle

#include <set>
#include <tuple>

#include "csi/datamodel.hpp"
#include "csi/stratify.hpp"

namespace oracle {

using Tuple = std::tuple<std::string, std::string, std::string>;

/// (c, s_i, s_j) for every compound and every pair of sequences s_i < s_j both
/// interacting with it, by a double loop over the whole sequence table.
inline std::set<Tuple> compound_tuples(const csi::data::InteractionSet& data) {
  std::set<Tuple> out;
  for (const auto& [c, _] : data.compounds) {
    for (auto a = data.sequences.begin(); a != data.sequences.end(); ++a) {
      for (auto b = std::next(a); b != data.sequences.end(); ++b) {
        if (data.positives.contains({c, a->first}) && data.positives.contains({c, b->first})) {
          out.emplace(c, a->first, b->first);
        }
      }
    }
  }
  return out;
}

/// (s, c_i, c_j) mirror of compound_tuples.
inline std::set<Tuple> sequence_tuples(const csi::data::InteractionSet& data) {
  std::set<Tuple> out;
  for (const auto& [s, _] : data.sequences) {
    for (auto a = data.compounds.begin(); a != data.compounds.end(); ++a) {
      for (auto b = std::next(a); b != data.compounds.end(); ++b) {
        if (data.positives.contains({a->first, s}) && data.positives.contains({b->first, s})) {
          out.emplace(s, a->first, b->first);
        }
      }
    }
  }
  return out;
}

/// Flattens a two-view set into (key, pair.first, pair.second) tuples.
inline std::set<Tuple> flatten(const csi::strat::CongruentViewSet& views) {
  std::set<Tuple> out;
  for (const auto& [key, stratum] : views.strata) {
    for (const auto& a : stratum.views[0]) {
      for (const auto& b : stratum.views[1]) {
        const auto& pair = a.second.empty() ? b : a;
        out.emplace(key, pair.first, pair.second);
      }
    }
  }
  return out;
}

}  // namespace oracle
