#include <gtest/gtest.h>

#include <random>

#include "csi/error.hpp"
#include "csi/stratify.hpp"
#include "oracles.hpp"

using namespace csi;
using namespace csi::strat;
using csi::data::InteractionSet;

namespace {

InteractionSet make(std::initializer_list<std::pair<const char*, const char*>> pairs) {
  InteractionSet s;
  for (auto [c, q] : pairs) {
    s.compounds[c] = "C";
    s.sequences[q] = "M";
    s.positives.insert({c, q});
  }
  return s;
}

InteractionSet random_set(std::mt19937_64& rng) {
  InteractionSet s;
  const int nc = 1 + static_cast<int>(rng() % 20), ns = 1 + static_cast<int>(rng() % 20);
  for (int c = 0; c < nc; ++c) s.compounds["c" + std::to_string(c)] = "C";
  for (int q = 0; q < ns; ++q) s.sequences["s" + std::to_string(q)] = "M";
  const double density = std::uniform_real_distribution<double>(0.0, 0.5)(rng);
  for (int c = 0; c < nc; ++c)
    for (int q = 0; q < ns; ++q)
      if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < density)
        s.positives.insert({"c" + std::to_string(c), "s" + std::to_string(q)});
  return s;
}

}  // namespace

TEST(Stratify, CompoundFixture) {
  const auto v = stratify_by_compound(make({{"c1", "s1"}, {"c1", "s2"}, {"c2", "s1"}}));
  ASSERT_EQ(v.strata.size(), 1u);
  const auto& st = v.strata.at("c1");
  ASSERT_EQ(st.views.size(), 2u);
  EXPECT_EQ(st.views[0], (std::vector<ViewItem>{{ViewKind::Compound, "c1", ""}}));
  EXPECT_EQ(st.views[1], (std::vector<ViewItem>{{ViewKind::SequencePair, "s1", "s2"}}));
}

TEST(Stratify, SequenceFixture) {
  const auto v = stratify_by_sequence(make({{"c1", "s1"}, {"c2", "s1"}, {"c1", "s2"}}));
  ASSERT_EQ(v.strata.size(), 1u);
  const auto& st = v.strata.at("s1");
  EXPECT_EQ(st.views[0], (std::vector<ViewItem>{{ViewKind::CompoundPair, "c1", "c2"}}));
  EXPECT_EQ(st.views[1], (std::vector<ViewItem>{{ViewKind::Sequence, "s1", ""}}));
}

TEST(Stratify, Counts) {
  const auto three = stratify_by_compound(make({{"c", "a"}, {"c", "b"}, {"c", "d"}}));
  EXPECT_EQ(three.strata.at("c").tuple_count(), 3u);
  const auto four = stratify_by_sequence(make({{"a", "s"}, {"b", "s"}, {"c", "s"}, {"d", "s"}}));
  EXPECT_EQ(four.strata.at("s").tuple_count(), 6u);
  EXPECT_TRUE(stratify_by_compound(make({{"c1", "s1"}, {"c2", "s2"}})).strata.empty());
  EXPECT_TRUE(stratify_by_sequence(InteractionSet{}).strata.empty());
}

TEST(Stratify, BruteForceEquivalenceAndSymmetry) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = random_set(rng);
    EXPECT_EQ(oracle::flatten(stratify_by_compound(s)), oracle::compound_tuples(s));
    EXPECT_EQ(oracle::flatten(stratify_by_sequence(s)), oracle::sequence_tuples(s));
    // Transposing roles turns sequence keying into compound keying.
    InteractionSet t;
    t.compounds = s.sequences;
    t.sequences = s.compounds;
    for (const auto& [c, q] : s.positives) t.positives.insert({q, c});
    EXPECT_EQ(oracle::flatten(stratify_by_compound(t)), oracle::flatten(stratify_by_sequence(s)));
  }
}

TEST(Stratify, ReactionViewCounts) {
  data::ReactionSet rs;
  rs.reactions.push_back({"r1", {"a"}, {"b", "c"}, {"e1", "e2"}, {"RC1"}, {"1.1.1.1"}});
  const auto v = stratify_by_reaction_feature(rs, Keying::Reaction);
  const auto& st = v.strata.at("r1");
  EXPECT_EQ(st.views[0].size(), 2u);
  EXPECT_EQ(st.views[1].size(), 6u);
  EXPECT_EQ(st.views[2].size(), 1u);
}

TEST(Stratify, ReactionSelfPairAndMerging) {
  data::ReactionSet rs;
  rs.reactions.push_back({"r1", {"a"}, {"b"}, {"e1"}, {"RC1"}, {"2.1.1.1"}});
  rs.reactions.push_back({"r2", {"c"}, {"d"}, {"e2", "e3"}, {"RC1"}, {"2.1.1.2"}});
  const auto by_reaction = stratify_by_reaction_feature(rs, Keying::Reaction);
  EXPECT_EQ(by_reaction.strata.at("r1").views[2], (std::vector<ViewItem>{{ViewKind::SequencePair, "e1", "e1"}}));
  const auto by_class = stratify_by_reaction_feature(rs, Keying::RClass);
  ASSERT_EQ(by_class.strata.size(), 1u);
  const auto& merged = by_class.strata.at("RC1");
  EXPECT_EQ(merged.views[0].size(), 2u);
  EXPECT_EQ(merged.views[1].size(), 6u);
  EXPECT_EQ(stratify_by_reaction_feature(rs, Keying::EC).strata.size(), 2u);
  EXPECT_THROW(stratify_by_reaction_feature(rs, Keying::Compound), Error);
  try {
    parse_keying("bogus");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownKeying);
  }
}

TEST(Stratify, AllowedPairsFilterViewTwo) {
  data::ReactionSet rs;
  rs.reactions.push_back({"r1", {"a"}, {"b"}, {"e1", "e2"}, {}, {}});
  const std::set<data::Pair> allowed{{"a", "e1"}};
  ReactionViewOptions options;
  options.allowed_pairs = &allowed;
  const auto v = stratify_by_reaction_feature(rs, Keying::Reaction, options);
  EXPECT_EQ(v.strata.at("r1").views[1], (std::vector<ViewItem>{{ViewKind::CompoundSequence, "a", "e1"}}));
  const std::set<data::Pair> nothing;
  options.allowed_pairs = &nothing;
  EXPECT_TRUE(stratify_by_reaction_feature(rs, Keying::Reaction, options).strata.empty());
}

TEST(Batch, Sampling) {
  InteractionSet s;
  for (int c = 0; c < 5; ++c) {
    s.compounds["c" + std::to_string(c)] = "C";
    for (int q = 0; q < 3; ++q) {
      s.sequences["s" + std::to_string(q)] = "M";
      s.positives.insert({"c" + std::to_string(c), "s" + std::to_string(q)});
    }
  }
  const auto v = stratify_by_compound(s);
  const auto all = sample_batch(v, 5, 3);
  std::set<std::string> keys;
  for (const auto& e : all.entries) keys.insert(e.key);
  EXPECT_EQ(keys.size(), 5u);
  const auto a = sample_batch(v, 3, 42), b = sample_batch(v, 3, 42);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.entries[i].key, b.entries[i].key);
    EXPECT_EQ(a.entries[i].views, b.entries[i].views);
  }
  auto kind = [&](std::size_t k) {
    try {
      sample_batch(v, k, 0);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::ConfigError;
  };
  EXPECT_EQ(kind(6), ErrorKind::BatchTooLarge);
  EXPECT_EQ(kind(1), ErrorKind::DegenerateBatch);
}

TEST(Batch, DistinctKeysAndMembership) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_set(rng);
    const auto v = stratify_by_compound(s);
    if (v.eligible_keys() < 2) continue;
    const std::size_t k = 2 + rng() % (v.eligible_keys() - 1);
    const auto batch = sample_batch(v, k, trial);
    std::set<std::string> keys;
    for (const auto& e : batch.entries) {
      EXPECT_TRUE(keys.insert(e.key).second);
      ASSERT_EQ(e.views.size(), 2u);
      EXPECT_TRUE(s.positives.contains({e.key, e.views[1].first}));
      EXPECT_TRUE(s.positives.contains({e.key, e.views[1].second}));
      EXPECT_LT(e.views[1].first, e.views[1].second);
    }
    EXPECT_EQ(batch.size(), k);
  }
}

TEST(ViewStats, MeanAndPopulationDeviation) {
  data::ReactionSet rs;
  rs.reactions.push_back({"r1", {"a"}, {"b"}, {"e1"}, {}, {}});
  rs.reactions.push_back({"r2", {"a", "c"}, {"b"}, {"e1", "e2", "e3"}, {}, {}});
  const auto s = view_count_stats(stratify_by_reaction_feature(rs, Keying::Reaction));
  EXPECT_EQ(s.keys, 2u);
  // View-1 sizes 1 and 2; View-2 sizes 2 and 9; View-3 sizes 1 and 3.
  EXPECT_DOUBLE_EQ(s.mean[0], 1.5);
  EXPECT_DOUBLE_EQ(s.standard_deviation[0], 0.5);
  EXPECT_DOUBLE_EQ(s.mean[1], 5.5);
  EXPECT_EQ(s.maximum[2], 3u);
  EXPECT_EQ(s.total[1], 11u);
}
