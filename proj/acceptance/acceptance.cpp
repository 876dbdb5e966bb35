// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset. Exit status is non-zero if a gating criterion
// fails; criterion 10 is informational and only runs when CSI_KEGG_DUMP names
// a reaction bundle.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "csi/cli.hpp"
#include "csi/contrastive.hpp"
#include "csi/encoders.hpp"
#include "csi/metrics.hpp"
#include "csi/pipeline.hpp"
#include "csi/stratify.hpp"
#include "csi/synth.hpp"
#include "oracles.hpp"

using namespace csi;
using ad::Matrix;
using ad::Var;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  bool gating = true;
  bool skipped = false;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// ---------------------------------------------------------------------------
// 1. Gradient checks

struct InputCheck {
  std::string name;
  Eigen::Index rows, cols;
  double lo, hi;
  std::function<Var(ad::Tape&, Var)> f;
};

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1001);
  const Matrix w43 = random_matrix(rng, 4, 3), m34 = random_matrix(rng, 3, 4), bias = random_matrix(rng, 1, 4);
  const Matrix conv_w = random_matrix(rng, 6, 4), conv_b = random_matrix(rng, 1, 4);
  const Matrix labels = (Matrix(4, 1) << 1, 0, 0, 1).finished();
  const Matrix other = random_matrix(rng, 4, 3), third = random_matrix(rng, 4, 3);
  const std::pair<int, int> edges[] = {{0, 1}, {1, 2}, {2, 3}, {1, 3}};
  const Matrix adj = ad::normalized_adjacency(4, edges);
  const ad::SparseMatrix sadj = adj.sparseView();
  static const ad::Index picks[] = {2, 0, 2, 1};
  static const ad::Index offsets[] = {0, 2, 5, 7};
  static const int codes[] = {1, 3, 0, 3, 2};
  const con::Temperature tau(0.5);

  std::vector<InputCheck> checks{
      {"matmul", 3, 4, -1, 1, [&](ad::Tape& t, Var x) { return ad::matmul(x, t.constant(w43)); }},
      {"transpose", 3, 4, -1, 1, [](ad::Tape&, Var x) { return ad::transpose(x); }},
      {"add", 3, 4, -1, 1, [&](ad::Tape& t, Var x) { return ad::add(x, t.constant(m34)); }},
      {"sub", 3, 4, -1, 1, [&](ad::Tape& t, Var x) { return ad::sub(t.constant(m34), x); }},
      {"add_bias", 1, 4, -1, 1, [&](ad::Tape& t, Var b) { return ad::add_bias(t.constant(m34), b); }},
      {"mul", 3, 4, -1, 1, [](ad::Tape&, Var x) { return ad::mul(x, x); }},
      {"div", 3, 4, 0.5, 2, [&](ad::Tape& t, Var x) { return ad::div(t.constant(m34), x); }},
      {"scale", 3, 4, -1, 1, [](ad::Tape&, Var x) { return ad::scale(x, -2.5); }},
      {"mul_constant", 3, 4, -1, 1, [&](ad::Tape&, Var x) { return ad::mul_constant(x, m34); }},
      {"relu", 3, 4, -1, 1, [](ad::Tape&, Var x) { return ad::relu(x); }},
      {"concat", 3, 2, -1, 1, [&](ad::Tape& t, Var x) { return ad::concat(x, t.constant(m34)); }},
      {"gather_rows", 3, 4, -1, 1, [](ad::Tape&, Var x) { return ad::gather_rows(x, picks); }},
      {"stack_rows", 1, 4, -1, 1, [&](ad::Tape& t, Var x) {
         const Var rows[] = {x, t.constant(bias), x};
         return ad::stack_rows(rows);
       }},
      {"conv1d", 9, 2, -1, 1, [&](ad::Tape& t, Var x) { return ad::conv1d(x, t.constant(conv_w), t.constant(conv_b), 3, 2); }},
      {"conv1d_segments", 10, 2, -1, 1,
       [&](ad::Tape& t, Var x) { return ad::conv1d_segments(x, t.constant(conv_w), t.constant(conv_b), 3, 5); }},
      {"max_pool1d", 7, 3, -1, 1, [](ad::Tape&, Var x) { return ad::max_pool1d(x, 3, 2); }},
      {"global_max_pool", 6, 3, -1, 1, [](ad::Tape&, Var x) { return ad::global_max_pool(x); }},
      {"segment_max_pool", 7, 3, -1, 1, [](ad::Tape&, Var x) { return ad::segment_max_pool(x, offsets); }},
      {"embedding", 4, 3, -1, 1, [](ad::Tape&, Var table) { return ad::embedding(table, codes); }},
      {"neighbor_aggregate", 4, 3, -1, 1, [&](ad::Tape&, Var x) { return ad::neighbor_aggregate(adj, x); }},
      {"neighbor_aggregate_sparse", 4, 3, -1, 1, [&](ad::Tape&, Var x) { return ad::neighbor_aggregate(sadj, x); }},
      {"softmax", 3, 5, -3, 3, [](ad::Tape&, Var x) { return ad::softmax(x); }},
      {"log", 3, 4, 0.2, 3, [](ad::Tape&, Var x) { return ad::log(x); }},
      {"exp", 3, 4, -1, 1, [](ad::Tape&, Var x) { return ad::exp(x); }},
      {"l2_norm", 3, 4, -1, 1, [](ad::Tape&, Var x) { return ad::l2_norm(x); }},
      {"dot", 3, 4, -1, 1, [&](ad::Tape& t, Var x) { return ad::dot(x, t.constant(m34)); }},
      {"scalar_divide", 1, 1, 0.5, 2, [](ad::Tape& t, Var x) { return ad::scalar_divide(t.constant(Matrix::Constant(2, 2, 1.5)), x); }},
      {"sum", 3, 4, -1, 1, [](ad::Tape&, Var x) { return ad::sum(x); }},
      {"row_sum", 3, 4, -1, 1, [](ad::Tape&, Var x) { return ad::row_sum(x); }},
      {"weighted_bce", 4, 1, -4, 4, [&](ad::Tape&, Var x) { return ad::weighted_bce_with_logits(x, labels, 3.0); }},
      {"directional_loss", 4, 3, -1, 1, [&](ad::Tape& t, Var x) { return con::directional_loss(x, t.constant(other), tau); }},
      {"directional_loss_inclusive", 4, 3, -1, 1,
       [&](ad::Tape& t, Var x) { return con::directional_loss(x, t.constant(other), tau, con::Denominator::IncludePositive); }},
      {"total_loss", 4, 3, -1, 1, [&](ad::Tape& t, Var x) { return con::total_loss(t.constant(other), x, tau); }},
      {"multiview_loss", 4, 3, -1, 1, [&](ad::Tape& t, Var x) {
         const Var views[] = {t.constant(other), x, t.constant(third)};
         return con::multiview_loss(views, tau);
       }},
  };

  double worst = 0.0;
  std::string worst_name;
  auto note = [&](const std::string& name, double err) {
    if (err > worst || !std::isfinite(err)) {
      worst = std::isfinite(err) ? err : 1e9;
      worst_name = name;
    }
  };
  std::size_t evaluated = 0;
  for (const auto& c : checks) {
    std::mt19937_64 head_rng(std::hash<std::string>{}(c.name));
    for (int point = 0; point < 20; ++point) {
      const Matrix x = random_matrix(rng, c.rows, c.cols, c.lo, c.hi);
      Matrix head;
      const double err = ad::grad_check(
          [&](ad::Tape& t, Var v) {
            const Var y = c.f(t, v);
            if (head.size() == 0) head = random_matrix(head_rng, y.rows(), y.cols());
            return ad::dot(y, t.constant(head));
          },
          x);
      note(c.name, err);
      ++evaluated;
    }
  }

  // Encoders, differentiated with respect to every parameter.
  const enc::GcnShape gs{chemio::kAtomFeatureWidth, 6, 3, 5, 4};
  const enc::CnnShape cs{chemio::kAlphabetSize, 4, 5, 3, 20, 4};
  const auto g1 = enc::graph_input(chemio::parse_smiles("CC(=O)Nc1ccc(O)cc1"));
  const auto g2 = enc::graph_input(chemio::parse_smiles("OC(=O)C1CCOCC1"));
  const auto s1 = chemio::encode_fasta("MKVLAWCDEH", 20).codes;
  const auto s2 = chemio::encode_fasta("GGSTPYRNQ", 20).codes;
  const enc::GraphInput* gl[] = {&g1};
  const enc::GraphInput* gr[] = {&g2};
  const std::vector<int>* sl[] = {&s1};
  const std::vector<int>* sr[] = {&s2};
  auto jitter_biases = [&](enc::ParameterGroup& g) {
    for (auto& p : g.params)
      if (p.name.ends_with("bias")) p.value = random_matrix(rng, p.value.rows(), p.value.cols(), -0.1, 0.1);
  };
  for (int point = 0; point < 20; ++point) {
    Rng init(static_cast<std::uint64_t>(point) + 77);
    auto gcn = enc::make_gcn("g", gs, init);
    auto cnn = enc::make_cnn("c", cs, init);
    auto pred = enc::make_predictor("p", 8, init);
    for (auto* g : {&gcn.group, &cnn.group, &pred.group}) jitter_biases(*g);
    const Matrix h4 = random_matrix(rng, 1, 4), h8 = random_matrix(rng, 1, 8);
    auto gp = gcn.group.pointers();
    auto cp = cnn.group.pointers();
    note("gcn_encode", ad::grad_check([&](ad::Tape& t) { return ad::dot(enc::gcn_encode(gcn, enc::bind(t, gcn.group), gl), t.constant(h4)); }, gp));
    note("cnn_encode", ad::grad_check([&](ad::Tape& t) { return ad::dot(enc::cnn_encode(cnn, enc::bind(t, cnn.group), sl), t.constant(h4)); }, cp));
    note("siamese_compound_pair", ad::grad_check([&](ad::Tape& t) {
      return ad::dot(enc::siamese_pair(gcn, enc::bind(t, gcn.group), std::span<const enc::GraphInput* const>(gl),
                                       std::span<const enc::GraphInput* const>(gr)),
                     t.constant(h8));
    }, gp));
    note("siamese_sequence_pair", ad::grad_check([&](ad::Tape& t) {
      return ad::dot(enc::siamese_pair(cnn, enc::bind(t, cnn.group), std::span<const std::vector<int>* const>(sl),
                                       std::span<const std::vector<int>* const>(sr)),
                     t.constant(h8));
    }, cp));
    const Matrix features = random_matrix(rng, 3, 8);
    auto pp = pred.group.pointers();
    note("predict", ad::grad_check([&](ad::Tape& t) {
      return ad::sum(enc::predict(pred, enc::bind(t, pred.group), t.constant(features)));
    }, pp));
    std::vector<ad::Parameter*> all;
    for (auto* g : {&gcn.group, &cnn.group, &pred.group})
      for (auto* p : g->pointers()) all.push_back(p);
    note("baseline_forward", ad::grad_check([&](ad::Tape& t) {
      return ad::weighted_bce_with_logits(enc::baseline_forward(gcn, enc::bind(t, gcn.group), cnn, enc::bind(t, cnn.group),
                                                                pred, enc::bind(t, pred.group), gl, sl),
                                          Matrix::Ones(1, 1), 2.0);
    }, all));
    evaluated += 6;
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 120.0,
          fmt("%zu checks, max relative error %.2e (%s), %.1fs", evaluated, worst, worst_name.c_str(), secs)};
}

// ---------------------------------------------------------------------------
// 2. Contrastive losses against direct summation

Outcome criterion2() {
  std::mt19937_64 rng(2002);
  std::normal_distribution<double> n(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + trial % 3, d = 2 + (trial / 3) % 2;
    const double tau = std::vector<double>{0.05, 0.07, 0.08, 0.5, 1.0}[static_cast<std::size_t>(trial % 5)];
    std::vector<Matrix> views(3, Matrix(k, d));
    for (auto& v : views)
      for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = n(rng);
    for (bool inclusive : {false, true}) {
      const auto den = inclusive ? con::Denominator::IncludePositive : con::Denominator::Exclusive;
      const double a = con::directional_loss(views[0], views[1], con::Temperature(tau), den);
      const double b = oracle::directional(views[0], views[1], tau, inclusive);
      const double c = con::multiview_loss(views, con::Temperature(tau), den);
      const double e = oracle::multiview(views, tau, inclusive);
      worst = std::max({worst, std::abs(a - b) / std::max(1.0, std::abs(b)), std::abs(c - e) / std::max(1.0, std::abs(e))});
    }
  }
  return {worst < 1e-10, fmt("100 batches x 2 denominators, max deviation %.2e", worst)};
}

// ---------------------------------------------------------------------------
// 3. Discriminator properties

Outcome criterion3() {
  std::mt19937_64 rng(3003);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> s(0.01, 100.0);
  double worst = 0.0;
  for (double tau : {0.05, 0.07, 0.08}) {
    const con::Temperature t(tau);
    const Eigen::Vector3d z(0.4, -1.1, 2.3), ortho(2.3, 0.0, -0.4);
    worst = std::max(worst, std::abs(con::discriminator(z, z, t) / std::exp(1.0 / tau) - 1.0));
    worst = std::max(worst, std::abs(con::discriminator(z, ortho, t) - 1.0));
    worst = std::max(worst, std::abs(con::discriminator(z, -z, t) / std::exp(-1.0 / tau) - 1.0));
    for (int trial = 0; trial < 200; ++trial) {
      Eigen::VectorXd a(4), b(4);
      for (int i = 0; i < 4; ++i) {
        a(i) = n(rng);
        b(i) = n(rng);
      }
      const double h = con::discriminator(a, b, t);
      worst = std::max(worst, std::abs(con::discriminator(s(rng) * a, s(rng) * b, t) / h - 1.0));
      // Bound violations count as deviations beyond the tolerance.
      worst = std::max(worst, std::max(0.0, std::exp(-1.0 / tau) / h - 1.0));
      worst = std::max(worst, std::max(0.0, h / std::exp(1.0 / tau) - 1.0));
    }
  }
  return {worst <= 1e-12, fmt("tau in {0.05,0.07,0.08}, max relative deviation %.2e", worst)};
}

// ---------------------------------------------------------------------------
// 4. Stratification equivalence

Outcome criterion4() {
  std::mt19937_64 rng(4004);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int set_failures = 0;
  for (int trial = 0; trial < 200; ++trial) {
    data::InteractionSet s;
    const int nc = 1 + static_cast<int>(rng() % 20), ns = 1 + static_cast<int>(rng() % 20);
    for (int c = 0; c < nc; ++c) s.compounds["c" + std::to_string(c)] = "C";
    for (int q = 0; q < ns; ++q) s.sequences["s" + std::to_string(q)] = "M";
    const double density = u(rng) * 0.6;
    for (int c = 0; c < nc; ++c)
      for (int q = 0; q < ns; ++q)
        if (u(rng) < density) s.positives.insert({"c" + std::to_string(c), "s" + std::to_string(q)});
    if (oracle::flatten(strat::stratify_by_compound(s)) != oracle::compound_tuples(s)) ++set_failures;
    if (oracle::flatten(strat::stratify_by_sequence(s)) != oracle::sequence_tuples(s)) ++set_failures;
  }
  int reaction_failures = 0;
  for (int trial = 0; trial < 50; ++trial) {
    data::ReactionSet rs;
    const int reactions = 1 + static_cast<int>(rng() % 10);
    for (int r = 0; r < reactions; ++r) {
      data::Reaction x;
      x.id = "R" + std::to_string(r);
      auto fill = [&](std::set<data::Id>& side, const char* prefix, int pool, int most) {
        const int count = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(most));
        while (static_cast<int>(side.size()) < count) side.insert(prefix + std::to_string(rng() % static_cast<std::uint64_t>(pool)));
      };
      fill(x.reactants, "c", 12, 4);
      fill(x.products, "c", 12, 4);
      fill(x.enzymes, "e", 8, 5);
      rs.reactions.push_back(x);
    }
    const auto v = strat::stratify_by_reaction_feature(rs, strat::Keying::Reaction);
    for (const auto& r : rs.reactions) {
      std::set<data::Id> both = r.reactants;
      both.insert(r.products.begin(), r.products.end());
      const std::size_t e = r.enzymes.size();
      const std::size_t v1 = r.reactants.size() * r.products.size(), v2 = both.size() * e, v3 = e == 1 ? 1 : e * (e - 1) / 2;
      const auto it = v.strata.find(r.id);
      if (it == v.strata.end() || it->second.views[0].size() != v1 || it->second.views[1].size() != v2 ||
          it->second.views[2].size() != v3) {
        ++reaction_failures;
      }
    }
  }
  return {set_failures == 0 && reaction_failures == 0,
          fmt("200 interaction sets (%d mismatches), 50 reaction sets (%d mismatched strata)", set_failures,
              reaction_failures)};
}

// ---------------------------------------------------------------------------
// 5. Metrics against brute force

Outcome criterion5() {
  auto to_items = [](const std::vector<double>& s, const std::vector<int>& l) {
    std::vector<metrics::ScoredItem> out;
    for (std::size_t i = 0; i < s.size(); ++i) out.push_back({s[i], l[i]});
    return out;
  };
  double worst = 0.0;
  std::size_t cases = 0;
  auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
  auto compare_groups = [&](const std::vector<oracle::Group>& groups) {
    std::vector<metrics::ScoredSet> sets;
    for (const auto& g : groups) sets.push_back({to_items(g.scores, g.labels), ""});
    const double map = oracle::grouped(groups, [](const auto& g) { return oracle::average_precision(g.scores, g.labels, g.scores.size()); });
    if (map < 0) return;
    track(metrics::grouped_metric(sets, metrics::Metric::AveragePrecision).value, map);
    track(metrics::grouped_metric(sets, metrics::Metric::AveragePrecision, 3).value,
          oracle::grouped(groups, [](const auto& g) { return oracle::average_precision(g.scores, g.labels, 3); }));
    track(metrics::grouped_metric(sets, metrics::Metric::RPrecision).value,
          oracle::grouped(groups, [](const auto& g) { return oracle::r_precision(g.scores, g.labels); }));
    track(metrics::precision_at_1(sets).value, oracle::grouped(groups, oracle::top_is_positive));
    ++cases;
  };
  // Exhaustive: every labeling of every ranking of up to 8 items, including
  // tied score patterns; each doubles as a single-group grouped case.
  for (std::size_t n = 1; n <= 8; ++n) {
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
      std::vector<int> labels(n);
      for (std::size_t i = 0; i < n; ++i) labels[i] = (mask >> i) & 1u;
      for (int grid : {0, 2, 3}) {
        std::vector<double> scores(n);
        for (std::size_t i = 0; i < n; ++i)
          scores[i] = grid == 0 ? static_cast<double>(n - i) : static_cast<double>((i * 7 + mask) % static_cast<unsigned>(grid));
        const auto items = to_items(scores, labels);
        track(metrics::average_precision(items), oracle::average_precision(scores, labels, n));
        track(metrics::r_precision(items), oracle::r_precision(scores, labels));
        compare_groups({{scores, labels}});
      }
    }
  }
  std::mt19937_64 rng(5005);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<oracle::Group> groups(1 + rng() % 8);
    for (auto& g : groups) {
      const std::size_t n = 9 + rng() % 40;
      for (std::size_t i = 0; i < n; ++i) {
        g.scores.push_back(static_cast<double>(rng() % 20) / 7.0);
        g.labels.push_back(rng() % 3 == 0);
      }
      g.labels[rng() % n] = 1;
      track(metrics::average_precision(to_items(g.scores, g.labels)), oracle::average_precision(g.scores, g.labels, n));
      track(metrics::r_precision(to_items(g.scores, g.labels)), oracle::r_precision(g.scores, g.labels));
    }
    compare_groups(groups);
  }
  const double fixture = metrics::average_precision(to_items({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0}));
  const bool fixture_ok = std::abs(fixture - 5.0 / 6.0) <= 1e-12;
  return {worst <= 1e-12 && fixture_ok,
          fmt("%zu grouped cases, max deviation %.2e, worked fixture AP = %.15f", cases, worst, fixture)};
}

// ---------------------------------------------------------------------------
// Planted-structure configuration shared by criteria 6, 7 and 9.

synth::SynthBundle planted_bundle(std::uint64_t seed) {
  synth::SynthSpec s;
  s.blocks = 4;
  s.compounds_per_block = 15;
  s.sequences_per_block = 15;
  s.noise = 0.05;
  s.seed = seed;
  return synth::synthesize(s);
}

pipe::TrainConfig planted_config(std::uint64_t seed, pipe::Stratification strat) {
  pipe::TrainConfig c;
  c.seed = seed;
  c.shape.d = 16;
  c.shape.sequence_length = 64;
  c.batch_size = 8;
  c.phase1_epochs = 200;
  c.phase2_epochs = 100;
  c.stratification = strat;
  return c;
}

// ---------------------------------------------------------------------------
// 6. Freeze invariant

Outcome criterion6() {
  const auto bundle = planted_bundle(0);
  const auto config = planted_config(0, pipe::Stratification::CompoundSequence);
  const auto prepared = pipe::prepare_experiment(bundle.interactions, config);
  const auto store = pipe::build_store(bundle.interactions.compounds, bundle.interactions.sequences,
                                       config.shape.sequence_length);
  pipe::Model model = pipe::build_model(config);
  pipe::Phase1Views views;
  views.compound = strat::stratify_by_compound(prepared.parts.train);
  views.sequence = strat::stratify_by_sequence(prepared.parts.train);
  pipe::TrainingLog log;
  pipe::train_contrastive(model, views, store, config, log);
  std::vector<Matrix> before;
  for (auto* g : model.encoder_groups())
    for (const auto& p : g->params) before.push_back(p.value);
  const Matrix predictor_before = model.predictor.group.params.front().value;
  const auto result = pipe::train_predictor(model, store, prepared.train, prepared.validation, config, log);
  std::size_t i = 0, tensors = 0, scalars = 0, differing = 0;
  for (auto* g : model.encoder_groups()) {
    for (const auto& p : g->params) {
      const Matrix& old = before[i++];
      ++tensors;
      scalars += static_cast<std::size_t>(p.value.size());
      if (old.rows() != p.value.rows() || old.cols() != p.value.cols() ||
          std::memcmp(old.data(), p.value.data(), sizeof(double) * static_cast<std::size_t>(old.size())) != 0) {
        ++differing;
      }
    }
  }
  const bool predictor_moved = predictor_before != model.predictor.group.params.front().value;
  return {differing == 0 && predictor_moved && tensors > 0,
          fmt("%zu encoder tensors (%zu scalars), %zu changed; predictor trained %d epochs", tensors, scalars, differing,
              result.epochs_run)};
}

// ---------------------------------------------------------------------------
// 7. Planted-structure experiment

struct PlantedRun {
  double ap1 = 0, ap25 = 0;
  std::string checkpoint, report;
};

PlantedRun planted_run(std::uint64_t seed, pipe::Stratification strat) {
  const auto bundle = planted_bundle(seed);
  const auto config = planted_config(seed, strat);
  auto r = pipe::run_experiment({bundle.interactions, std::nullopt}, config);
  return {r.report("test@1").ap, r.report("test@25").ap,
          pipe::serialize(pipe::make_checkpoint(r.model, config, r.log)), cli::report_json(r.evaluations)};
}

std::map<std::uint64_t, std::pair<PlantedRun, PlantedRun>> planted_cache;

Outcome criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  int gap_ok = 0, level_ok = 0, drop_ok = 0;
  std::ostringstream detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto base = planted_run(seed, pipe::Stratification::None);
    const auto csi = planted_run(seed, pipe::Stratification::CompoundSequence);
    planted_cache[seed] = {base, csi};
    const double base_drop = (base.ap1 - base.ap25) / base.ap1, csi_drop = (csi.ap1 - csi.ap25) / csi.ap1;
    gap_ok += csi.ap1 - base.ap1 >= 0.05;
    level_ok += csi.ap1 >= 0.90;
    drop_ok += csi_drop < base_drop;
    detail << fmt("seed %d: baseline %.3f/%.3f csi %.3f/%.3f (AP 1:1 / 25:1); ", static_cast<int>(seed), base.ap1,
                  base.ap25, csi.ap1, csi.ap25);
    std::cout << "  criterion 7 " << fmt("seed %d: baseline AP@1:1 %.4f AP@25:1 %.4f | CSI AP@1:1 %.4f AP@25:1 %.4f",
                                         static_cast<int>(seed), base.ap1, base.ap25, csi.ap1, csi.ap25)
              << std::endl;
  }
  const double secs = seconds_since(t0);
  detail << fmt("(a) %d/3 (b) %d/3 (c) %d/3, %.0fs", gap_ok, level_ok, drop_ok, secs);
  return {gap_ok == 3 && level_ok == 3 && drop_ok == 3 && secs < 600.0, detail.str()};
}

// ---------------------------------------------------------------------------
// 8. Three-view ablation

Outcome criterion8() {
  int wins = 0;
  std::ostringstream detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    synth::SynthSpec s;
    s.blocks = 4;
    s.compounds_per_block = 30;
    s.sequences_per_block = 30;
    s.reactions = true;
    s.reactions_per_block = 60;
    s.noise = 0.05;
    s.seed = seed;
    const auto bundle = synth::synthesize(s);
    auto config = planted_config(seed, pipe::Stratification::Reaction);
    config.phase2_epochs = 200;
    std::vector<double> ap;
    for (int drop : {0, 1, 2, 3}) {
      config.drop_views.clear();
      if (drop) config.drop_views.insert(drop);
      ap.push_back(pipe::run_experiment({bundle.interactions, bundle.reactions}, config).report("test@1").ap);
    }
    const bool win = ap[0] >= std::max({ap[1], ap[2], ap[3]});
    wins += win;
    std::cout << "  criterion 8 "
              << fmt("seed %d: all views %.4f | drop V1 %.4f | drop V2 %.4f | drop V3 %.4f", static_cast<int>(seed),
                     ap[0], ap[1], ap[2], ap[3])
              << std::endl;
    detail << fmt("seed %d %s; ", static_cast<int>(seed), win ? "full >= ablations" : "an ablation is higher");
  }
  detail << fmt("%d/3 seeds", wins);
  return {wins >= 2, detail.str()};
}

// ---------------------------------------------------------------------------
// 9. Determinism

Outcome criterion9() {
  std::size_t identical = 0;
  for (auto strat : {pipe::Stratification::None, pipe::Stratification::CompoundSequence}) {
    const auto a = planted_cache.contains(0)
                       ? (strat == pipe::Stratification::None ? planted_cache[0].first : planted_cache[0].second)
                       : planted_run(0, strat);
    const auto b = planted_run(0, strat);
    identical += a.checkpoint == b.checkpoint;
    identical += a.report == b.report;
  }
  return {identical == 4, fmt("%zu/4 artifacts byte-identical (checkpoint and report, baseline and CSI, seed 0)", identical)};
}

// ---------------------------------------------------------------------------
// 10. Real dump counts (optional)

Outcome criterion10() {
  const char* path = std::getenv("CSI_KEGG_DUMP");
  if (!path || !*path) return {true, "SKIP: set CSI_KEGG_DUMP to a reaction bundle to run", false, true};
  const auto ds = cli::load_dataset(path);
  const auto b = data::base_stats(ds.data.interactions);
  const bool counts = b.interactions == 127884 && b.compounds == 6087 && b.sequences == 21367;
  std::string keys = "no reactions";
  if (ds.data.reactions) {
    keys = fmt("reaction keys %zu, rclass keys %zu, ec keys %zu",
               strat::stratify_by_reaction_feature(*ds.data.reactions, strat::Keying::Reaction).strata.size(),
               strat::stratify_by_reaction_feature(*ds.data.reactions, strat::Keying::RClass).strata.size(),
               strat::stratify_by_reaction_feature(*ds.data.reactions, strat::Keying::EC).strata.size());
  }
  return {counts,
          fmt("interactions %zu compounds %zu sequences %zu ratio %.2f; %s", b.interactions, b.compounds, b.sequences,
              b.compound_to_sequence_ratio, keys.c_str()),
          false};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
      {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}};
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  bool failed = false;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && !only.contains(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const char* status = o.skipped ? "SKIP" : o.pass ? "PASS" : "FAIL";
    std::cout << "Criterion " << id << ": " << status << " (" << fmt("%.1fs", seconds_since(t0)) << ") " << o.detail
              << std::endl;
    if (!o.pass && o.gating) failed = true;
  }
  return failed ? 1 : 0;
}
