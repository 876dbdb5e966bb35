#include "csi/stratify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "csi/error.hpp"
#include "csi/random.hpp"

namespace csi::strat {

namespace {

std::map<data::Id, std::vector<data::Id>> partners(const data::InteractionSet& interactions, bool by_compound) {
  std::map<data::Id, std::vector<data::Id>> out;
  // positives are ordered by (compound, sequence), so partner lists come out
  // sorted for compound keying; sort explicitly for the other side.
  for (const auto& [c, s] : interactions.positives) {
    if (by_compound) {
      out[c].push_back(s);
    } else {
      out[s].push_back(c);
    }
  }
  for (auto& [_, list] : out) std::sort(list.begin(), list.end());
  return out;
}

template <typename Set>
void append_unique(std::vector<ViewItem>& dst, const Set& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

struct ReactionViews {
  std::set<ViewItem> v1, v2, v3;
};

ReactionViews views_of(const data::Reaction& r, const ReactionViewOptions& options) {
  ReactionViews out;
  for (const auto& rc : r.reactants) {
    for (const auto& p : r.products) out.v1.insert({ViewKind::CompoundPair, rc, p});
  }
  std::set<data::Id> compounds(r.reactants.begin(), r.reactants.end());
  compounds.insert(r.products.begin(), r.products.end());
  for (const auto& c : compounds) {
    for (const auto& s : r.enzymes) {
      if (options.allowed_pairs && !options.allowed_pairs->contains({c, s})) continue;
      out.v2.insert({ViewKind::CompoundSequence, c, s});
    }
  }
  if (r.enzymes.size() == 1) {
    out.v3.insert({ViewKind::SequencePair, *r.enzymes.begin(), *r.enzymes.begin()});
  } else {
    for (auto a = r.enzymes.begin(); a != r.enzymes.end(); ++a) {
      for (auto b = std::next(a); b != r.enzymes.end(); ++b) out.v3.insert({ViewKind::SequencePair, *a, *b});
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(Keying keying) {
  switch (keying) {
    case Keying::Compound: return "compound";
    case Keying::Sequence: return "sequence";
    case Keying::Reaction: return "reaction";
    case Keying::RClass: return "rclass";
    case Keying::EC: return "ec";
  }
  return "unknown";
}

Keying parse_keying(std::string_view name) {
  for (Keying k : {Keying::Compound, Keying::Sequence, Keying::Reaction, Keying::RClass, Keying::EC}) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorKind::UnknownKeying,
              "'" + std::string(name) + "' (valid: compound, sequence, reaction, rclass, ec)");
}

std::size_t Stratum::tuple_count() const {
  if (views.empty()) return 0;
  std::size_t n = 1;
  for (const auto& v : views) n *= v.size();
  return n;
}

std::size_t CongruentViewSet::eligible_keys() const {
  return static_cast<std::size_t>(
      std::count_if(strata.begin(), strata.end(), [](const auto& kv) { return kv.second.tuple_count() > 0; }));
}

CongruentViewSet stratify_by_compound(const data::InteractionSet& interactions) {
  CongruentViewSet out;
  out.keying = Keying::Compound;
  for (const auto& [c, seqs] : partners(interactions, true)) {
    if (seqs.size() < 2) continue;
    Stratum stratum;
    stratum.key = c;
    stratum.views.resize(2);
    stratum.views[0].push_back({ViewKind::Compound, c, {}});
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      for (std::size_t j = i + 1; j < seqs.size(); ++j) {
        stratum.views[1].push_back({ViewKind::SequencePair, seqs[i], seqs[j]});
      }
    }
    out.strata.emplace(c, std::move(stratum));
  }
  return out;
}

CongruentViewSet stratify_by_sequence(const data::InteractionSet& interactions) {
  CongruentViewSet out;
  out.keying = Keying::Sequence;
  for (const auto& [s, comps] : partners(interactions, false)) {
    if (comps.size() < 2) continue;
    Stratum stratum;
    stratum.key = s;
    stratum.views.resize(2);
    for (std::size_t i = 0; i < comps.size(); ++i) {
      for (std::size_t j = i + 1; j < comps.size(); ++j) {
        stratum.views[0].push_back({ViewKind::CompoundPair, comps[i], comps[j]});
      }
    }
    stratum.views[1].push_back({ViewKind::Sequence, s, {}});
    out.strata.emplace(s, std::move(stratum));
  }
  return out;
}

CongruentViewSet stratify_by_reaction_feature(const data::ReactionSet& reactions, Keying keying,
                                              const ReactionViewOptions& options) {
  if (keying != Keying::Reaction && keying != Keying::RClass && keying != Keying::EC) {
    throw Error(ErrorKind::UnknownKeying, "reaction-feature stratification cannot use keying '" +
                                              std::string(to_string(keying)) + "'");
  }
  std::map<std::string, ReactionViews> merged;
  for (const auto& r : reactions.reactions) {
    std::vector<std::string> keys;
    switch (keying) {
      case Keying::Reaction: keys = {r.id}; break;
      case Keying::RClass: keys.assign(r.rclass.begin(), r.rclass.end()); break;
      case Keying::EC: keys.assign(r.ec.begin(), r.ec.end()); break;
      default: break;
    }
    if (keys.empty()) continue;
    const ReactionViews v = views_of(r, options);
    for (const auto& key : keys) {
      auto& dst = merged[key];
      dst.v1.insert(v.v1.begin(), v.v1.end());
      dst.v2.insert(v.v2.begin(), v.v2.end());
      dst.v3.insert(v.v3.begin(), v.v3.end());
    }
  }
  CongruentViewSet out;
  out.keying = keying;
  for (auto& [key, v] : merged) {
    if (v.v1.empty() || v.v2.empty() || v.v3.empty()) continue;
    Stratum stratum;
    stratum.key = key;
    stratum.views.resize(3);
    append_unique(stratum.views[0], v.v1);
    append_unique(stratum.views[1], v.v2);
    append_unique(stratum.views[2], v.v3);
    out.strata.emplace(key, std::move(stratum));
  }
  return out;
}

std::map<std::string, std::set<data::Id>> partner_strata(const data::InteractionSet& interactions, Keying keying) {
  if (keying != Keying::Compound && keying != Keying::Sequence) {
    throw Error(ErrorKind::UnknownKeying, "partner strata need compound or sequence keying");
  }
  std::map<std::string, std::set<data::Id>> out;
  for (const auto& [key, list] : partners(interactions, keying == Keying::Compound)) {
    out[key].insert(list.begin(), list.end());
  }
  return out;
}

ContrastiveBatch sample_batch(const CongruentViewSet& views, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorKind::DegenerateBatch, "batch size must be at least 2, got " + std::to_string(k));
  std::vector<const Stratum*> eligible;
  for (const auto& [_, stratum] : views.strata) {
    if (stratum.tuple_count() > 0) eligible.push_back(&stratum);
  }
  if (eligible.size() < k) {
    throw Error(ErrorKind::BatchTooLarge, "batch size " + std::to_string(k) + " exceeds " +
                                              std::to_string(eligible.size()) + " eligible keys");
  }
  Rng rng(seed);
  ContrastiveBatch batch;
  batch.keying = views.keying;
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(eligible[i], eligible[i + uniform_index(rng, eligible.size() - i)]);
    const Stratum& s = *eligible[i];
    BatchEntry entry;
    entry.key = s.key;
    for (const auto& list : s.views) entry.views.push_back(list[uniform_index(rng, list.size())]);
    batch.entries.push_back(std::move(entry));
  }
  return batch;
}

ViewCountStatistics view_count_stats(const CongruentViewSet& views) {
  ViewCountStatistics out;
  out.keys = views.strata.size();
  if (views.strata.empty()) return out;
  const std::size_t n_views = views.strata.begin()->second.views.size();
  out.total.assign(n_views, 0);
  out.mean.assign(n_views, 0.0);
  out.standard_deviation.assign(n_views, 0.0);
  out.maximum.assign(n_views, 0);
  for (const auto& [_, s] : views.strata) {
    for (std::size_t v = 0; v < n_views; ++v) {
      out.total[v] += s.views[v].size();
      out.maximum[v] = std::max(out.maximum[v], s.views[v].size());
    }
  }
  const double n = static_cast<double>(out.keys);
  for (std::size_t v = 0; v < n_views; ++v) {
    out.mean[v] = static_cast<double>(out.total[v]) / n;
    double var = 0.0;
    for (const auto& [_, s] : views.strata) {
      const double d = static_cast<double>(s.views[v].size()) - out.mean[v];
      var += d * d;
    }
    out.standard_deviation[v] = std::sqrt(var / n);
  }
  return out;
}

}  // namespace csi::strat
