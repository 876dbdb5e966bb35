#include <gtest/gtest.h>
#include <unistd.h>

#include <fstream>
#include <random>
#include <set>
#include <string>

#include "csi/datamodel.hpp"
#include "csi/error.hpp"

using namespace csi;
using namespace csi::data;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(auto&& fn, std::string* message = nullptr) {
  try {
    fn();
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::ConfigError;
}

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("csi_dm_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path_ / name, std::ios::binary) << text;
    return path_ / name;
  }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

const char* kHeader = "compound_id\tsmiles\tsequence_id\tfasta\tlabel\n";

InteractionSet grid(int compounds, int sequences, const std::set<std::pair<int, int>>& positives) {
  InteractionSet s;
  for (int c = 0; c < compounds; ++c) s.compounds["c" + std::to_string(c)] = "CC";
  for (int q = 0; q < sequences; ++q) s.sequences["s" + std::to_string(q)] = "MK";
  for (auto [c, q] : positives) s.positives.insert({"c" + std::to_string(c), "s" + std::to_string(q)});
  return s;
}

InteractionSet random_set(std::mt19937_64& rng, int nc, int ns, double density) {
  std::set<std::pair<int, int>> pos;
  std::bernoulli_distribution coin(density);
  for (int c = 0; c < nc; ++c)
    for (int q = 0; q < ns; ++q)
      if (coin(rng)) pos.insert({c, q});
  return grid(nc, ns, pos);
}

}  // namespace

TEST(LoadInteractions, Fixture) {
  TempDir dir;
  const auto path = dir.write("i.tsv", std::string(kHeader) +
                                           "c1\tCCO\ts1\tMKV\t1\n"
                                           "c1\t\ts2\tMKL\t1\n"
                                           "c2\tCCN\ts1\t\t1\n");
  LoadReport report;
  const auto set = load_interactions(path, &report);
  EXPECT_EQ(set.compounds.size(), 2u);
  EXPECT_EQ(set.sequences.size(), 2u);
  EXPECT_EQ(set.positives.size(), 3u);
  EXPECT_EQ(report.rows, 3u);
  EXPECT_EQ(report.duplicates, 0u);
  const auto b = base_stats(set);
  EXPECT_EQ(b.interactions, 3u);
  EXPECT_DOUBLE_EQ(b.compound_to_sequence_ratio, 1.0);
}

TEST(LoadInteractions, DuplicatesAndNegatives) {
  TempDir dir;
  const auto path = dir.write("i.tsv", std::string(kHeader) +
                                           "c1\tCCO\ts1\tMKV\t1\n"
                                           "c1\tCCO\ts1\tMKV\t1\n"
                                           "c2\tCCN\ts1\tMKV\t0\n");
  LoadReport report;
  const auto set = load_interactions(path, &report);
  EXPECT_EQ(set.positives.size(), 1u);
  EXPECT_EQ(set.labeled_negatives.size(), 1u);
  EXPECT_EQ(report.duplicates, 1u);
}

TEST(LoadInteractions, Errors) {
  TempDir dir;
  std::string msg;
  auto dangling = dir.write("d.tsv", std::string(kHeader) + "c1\tCCO\ts1\tMKV\t1\nc1\t\ts9\t\t1\n");
  EXPECT_EQ(kind_of([&] { load_interactions(dangling); }, &msg), ErrorKind::DanglingReference);
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;

  std::string rows = kHeader;
  for (int i = 2; i <= 16; ++i) rows += "c1\tCCO\ts1\tMKV\t1\n";
  rows += "c1\tCCO\ts1\tMKV\n";  // line 17: four columns
  auto malformed = dir.write("m.tsv", rows);
  EXPECT_EQ(kind_of([&] { load_interactions(malformed); }, &msg), ErrorKind::SchemaError);
  EXPECT_NE(msg.find("line 17"), std::string::npos) << msg;

  auto conflict = dir.write("c.tsv", std::string(kHeader) + "c1\tCCO\ts1\tMKV\t1\nc1\tCCN\ts2\tMKV\t1\n");
  EXPECT_EQ(kind_of([&] { load_interactions(conflict); }), ErrorKind::SchemaError);
  auto bad_label = dir.write("l.tsv", std::string(kHeader) + "c1\tCCO\ts1\tMKV\t2\n");
  EXPECT_EQ(kind_of([&] { load_interactions(bad_label); }), ErrorKind::SchemaError);
  auto bad_smiles = dir.write("b.tsv", std::string(kHeader) + "c1\tC(\ts1\tMKV\t1\n");
  EXPECT_EQ(kind_of([&] { load_interactions(bad_smiles); }), ErrorKind::SyntaxError);
  EXPECT_EQ(kind_of([&] { load_interactions(dir.path() / "missing.tsv"); }), ErrorKind::IoError);
}

TEST(LoadInteractions, SaveRoundTrip) {
  std::mt19937_64 rng(3);
  auto set = random_set(rng, 6, 5, 0.4);
  set.labeled_negatives.insert({"c0", "s0"});
  set.positives.erase({"c0", "s0"});
  TempDir dir;
  save_interactions(set, dir.path() / "x.tsv");
  const auto back = load_interactions(dir.path() / "x.tsv");
  EXPECT_EQ(back.positives, set.positives);
  EXPECT_EQ(back.labeled_negatives, set.labeled_negatives);
}

TEST(Reactions, InducedPositives) {
  ReactionSet rs;
  rs.compounds = {{"a", "C"}, {"b", "CC"}, {"x", "CCC"}};
  rs.sequences = {{"e1", "MK"}, {"e2", "MV"}};
  rs.reactions.push_back({"r1", {"a"}, {"b"}, {"e1", "e2"}, {}, {}});
  EXPECT_EQ(induced_interactions(rs).positives.size(), 4u);
  // A second reaction sharing compound b and enzyme e1: (b,e1) must not double count.
  rs.reactions.push_back({"r2", {"b"}, {"x"}, {"e1"}, {}, {}});
  const std::set<std::pair<std::string, std::string>> expected{{"a", "e1"}, {"a", "e2"}, {"b", "e1"}, {"b", "e2"}, {"x", "e1"}};
  EXPECT_EQ(induced_interactions(rs).positives, expected);
}

TEST(Reactions, LoadSaveAndErrors) {
  TempDir dir;
  ReactionSet rs;
  rs.compounds = {{"a", "C"}, {"b", "CC"}};
  rs.sequences = {{"e1", "MK"}};
  rs.reactions.push_back({"r1", {"a"}, {"b"}, {"e1"}, {"RC1"}, {"1.1.1.1"}});
  save_reactions(rs, dir.path());
  const auto back = load_reactions(dir.path() / "reactions.jsonl");
  ASSERT_EQ(back.reactions.size(), 1u);
  EXPECT_EQ(back.reactions[0].enzymes, rs.reactions[0].enzymes);
  EXPECT_EQ(back.reactions[0].rclass, rs.reactions[0].rclass);
  EXPECT_EQ(back.reactions[0].ec, rs.reactions[0].ec);

  dir.write("reactions.jsonl", R"({"id":"r1","reactants":["a"],"products":["b"],"enzymes":[],"rclass":[],"ec":[]})" "\n");
  EXPECT_EQ(kind_of([&] { load_reactions(dir.path() / "reactions.jsonl"); }), ErrorKind::EmptySide);
  dir.write("reactions.jsonl", R"({"id":"r1","reactants":["zz"],"products":["b"],"enzymes":["e1"],"rclass":[],"ec":[]})" "\n");
  EXPECT_EQ(kind_of([&] { load_reactions(dir.path() / "reactions.jsonl"); }), ErrorKind::DanglingReference);
  dir.write("reactions.jsonl", "{not json\n");
  EXPECT_EQ(kind_of([&] { load_reactions(dir.path() / "reactions.jsonl"); }), ErrorKind::SchemaError);
}

TEST(Split, SizesDeterminismAndPartition) {
  std::set<std::pair<int, int>> pos;
  for (int i = 0; i < 100; ++i) pos.insert({i / 10, i % 10});
  const auto set = grid(10, 10, pos);
  SplitSpec spec;
  spec.seed = 7;
  const auto a = split(set, spec);
  EXPECT_EQ(a.train.positives.size(), 80u);
  EXPECT_EQ(a.validation.positives.size(), 10u);
  EXPECT_EQ(a.test.positives.size(), 10u);
  const auto b = split(set, spec);
  EXPECT_EQ(a.train.positives, b.train.positives);
  EXPECT_EQ(a.test.positives, b.test.positives);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = random_set(rng, 8, 8, 0.5);
    if (s.positives.size() < 10) continue;
    spec.seed = trial;
    const auto p = split(s, spec);
    std::set<std::pair<std::string, std::string>> all;
    std::size_t total = 0;
    for (const auto* part : {&p.train, &p.validation, &p.test}) {
      all.insert(part->positives.begin(), part->positives.end());
      total += part->positives.size();
    }
    EXPECT_EQ(total, s.positives.size());
    EXPECT_EQ(all, s.positives);
  }
}

TEST(Split, TooFew) {
  const auto set = grid(5, 1, {{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}});
  EXPECT_EQ(kind_of([&] { split(set, SplitSpec{}); }), ErrorKind::TooFewExamples);
}

TEST(Unseen, LeastFrequentCompoundHeldOut) {
  // c9 has a single interaction; every other compound has at least three.
  std::set<std::pair<int, int>> pos;
  for (int c = 0; c < 9; ++c)
    for (int q = 0; q < 3; ++q) pos.insert({c, (c + q) % 10});
  pos.insert({9, 4});
  auto set = grid(10, 10, pos);
  SplitSpec spec;
  spec.unseen_fraction = 0.1;  // ceil(0.1 * 10) = 1 object per side
  const auto u = build_unseen_test(set, spec);
  EXPECT_EQ(u.held_out_compounds, (std::set<Id>{"c9"}));
  EXPECT_TRUE(u.unseen.positives.contains({"c9", "s4"}));
  for (const auto& p : u.reduced.positives) EXPECT_NE(p.first, "c9");
  EXPECT_FALSE(u.reduced.compounds.contains("c9"));
  // No selected object leaks into the reduced positives.
  for (const auto& p : u.reduced.positives) {
    EXPECT_FALSE(u.held_out_compounds.contains(p.first));
    EXPECT_FALSE(u.held_out_sequences.contains(p.second));
  }
}

TEST(Unseen, ZeroFractionAndTies) {
  std::set<std::pair<int, int>> pos;
  for (int i = 0; i < 20; ++i) pos.insert({i, i});
  const auto set = grid(20, 20, pos);
  SplitSpec spec;
  spec.unseen_fraction = 0.0;
  const auto none = build_unseen_test(set, spec);
  EXPECT_TRUE(none.unseen.positives.empty());
  EXPECT_EQ(none.reduced.positives, set.positives);
  spec.unseen_fraction = 0.05;  // ceil(0.05 * 20) = 1, first id in sorted order
  const auto tie = build_unseen_test(set, spec);
  EXPECT_EQ(tie.held_out_compounds, (std::set<Id>{"c0"}));
  EXPECT_EQ(tie.held_out_sequences, (std::set<Id>{"s0"}));
}

TEST(Negatives, CountsAndForcedChoice) {
  std::set<std::pair<int, int>> pos;
  for (int i = 0; i < 10; ++i) pos.insert({i, i});
  const auto set = grid(10, 10, pos);
  const auto out = sample_negatives(set, 5, 1);
  EXPECT_EQ(out.size(), 60u);
  EXPECT_EQ(std::count_if(out.begin(), out.end(), [](auto& p) { return p.label == 1; }), 10);

  // Two free cells for two negatives: both must be drawn.
  const auto diagonal = grid(2, 2, {{0, 0}, {1, 1}});
  const auto forced = sample_negatives(diagonal, 1, 9);
  ASSERT_EQ(forced.size(), 4u);
  const std::set<std::pair<std::string, std::string>> drawn{{forced[2].compound, forced[2].sequence}, {forced[3].compound, forced[3].sequence}};
  EXPECT_EQ(drawn, (std::set<std::pair<std::string, std::string>>{{"c0", "s1"}, {"c1", "s0"}}));
  // One free cell cannot hold |positives| * ratio negatives.
  const auto small = grid(2, 2, {{0, 0}, {0, 1}, {1, 0}});
  EXPECT_EQ(kind_of([&] { sample_negatives(small, 1, 9); }), ErrorKind::InsufficientNegativeSpace);
  EXPECT_EQ(kind_of([&] { sample_negatives(small, 2, 9); }), ErrorKind::InsufficientNegativeSpace);
}

TEST(Negatives, Properties) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto set = random_set(rng, 10, 10, 0.1);
    if (set.positives.empty()) continue;
    std::set<std::pair<std::string, std::string>> exclude{{"c0", "s1"}};
    const int ratio = 1 + trial % 4;
    const auto out = sample_negatives(set, ratio, trial, exclude);
    std::set<std::pair<std::string, std::string>> seen;
    std::size_t negatives = 0;
    for (const auto& p : out) {
      EXPECT_TRUE(seen.insert({p.compound, p.sequence}).second);
      if (p.label == 0) {
        ++negatives;
        EXPECT_FALSE(set.positives.contains({p.compound, p.sequence}));
        EXPECT_FALSE(exclude.contains({p.compound, p.sequence}));
      }
    }
    EXPECT_EQ(negatives, static_cast<std::size_t>(ratio) * set.positives.size());
    EXPECT_EQ(out, sample_negatives(set, ratio, trial, exclude));
  }
}

TEST(Negatives, LabeledNegativesFirst) {
  auto set = grid(4, 4, {{0, 0}, {1, 1}});
  set.labeled_negatives = {{"c2", "s3"}};
  const auto out = sample_negatives(set, 2, 0);
  ASSERT_EQ(out.size(), 6u);
  EXPECT_EQ(out[2], (LabeledPair{"c2", "s3", 0}));
}

TEST(StrataStats, Fixtures) {
  const auto s = strata_stats({{"a", {"s1", "s2"}}, {"b", {"s2", "s3"}}});
  EXPECT_DOUBLE_EQ(s.average_size, 2.0);
  EXPECT_DOUBLE_EQ(s.average_sharing, 1.0);
  EXPECT_DOUBLE_EQ(s.average_jaccard, 1.0 / 3.0);
  const auto one = strata_stats({{"a", {"s1", "s2", "s3"}}});
  EXPECT_EQ(one.average_sharing, 0.0);
  EXPECT_EQ(one.average_jaccard, 0.0);
  const auto same = strata_stats({{"a", {"x", "y"}}, {"b", {"x", "y"}}, {"c", {"x", "y"}}});
  EXPECT_DOUBLE_EQ(same.average_jaccard, 1.0);
  EXPECT_DOUBLE_EQ(same.average_sharing, 2.0);
  EXPECT_EQ(kind_of([] { strata_stats({}); }), ErrorKind::EmptyInput);
}

TEST(StrataStats, BruteForce) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    std::map<std::string, std::set<Id>> strata;
    const int n = 2 + static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) {
      auto& s = strata["k" + std::to_string(i)];
      const int size = 1 + static_cast<int>(rng() % 5);
      for (int j = 0; j < size; ++j) s.insert("o" + std::to_string(rng() % 8));
    }
    double sharing = 0, jaccard = 0, pairs = 0;
    std::size_t lo = 100, hi = 0;
    for (auto a = strata.begin(); a != strata.end(); ++a) {
      lo = std::min(lo, a->second.size());
      hi = std::max(hi, a->second.size());
      for (auto b = std::next(a); b != strata.end(); ++b) {
        std::set<Id> inter, uni = a->second;
        for (const auto& x : b->second) {
          if (a->second.contains(x)) inter.insert(x);
          uni.insert(x);
        }
        sharing += static_cast<double>(inter.size());
        jaccard += static_cast<double>(inter.size()) / static_cast<double>(uni.size());
        ++pairs;
      }
    }
    const auto s = strata_stats(strata);
    EXPECT_NEAR(s.average_sharing, sharing / pairs, 1e-12);
    EXPECT_NEAR(s.average_jaccard, jaccard / pairs, 1e-12);
    EXPECT_EQ(s.minimum_size, lo);
    EXPECT_EQ(s.maximum_size, hi);
    EXPECT_LE(static_cast<double>(s.minimum_size), s.average_size);
    EXPECT_LE(s.average_size, static_cast<double>(s.maximum_size));
  }
}
