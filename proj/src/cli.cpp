#include "csi/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <toml.hpp>
#include <zlib.h>

#include <Eigen/Core>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "csi/stratify.hpp"
#include "csi/synth.hpp"

namespace csi::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigError:
    case ErrorKind::SchemaError:
    case ErrorKind::VersionMismatch:
    case ErrorKind::ChecksumMismatch:
    case ErrorKind::UnknownKeying:
      return kExitConfig;
    case ErrorKind::ShapeMismatch:
    case ErrorKind::NonFiniteValue:
    case ErrorKind::ZeroNormEmbedding:
    case ErrorKind::FrozenViolation:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

std::string crc_hex(const std::string& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08lx", crc);
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// One per artifact-producing command, written last as manifest.json.
struct Manifest {
  std::string command;
  json config = json::object();
  json inputs = json::array();
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
  std::string started = utc_now();

  void add_input(const fs::path& path) {
    const std::string bytes = read_file(path);
    inputs.push_back({{"path", path.string()}, {"bytes", bytes.size()}, {"crc32", crc_hex(bytes)}});
  }

  void write(const fs::path& dir) const {
    json j{{"command", command},         {"config", config},   {"inputs", inputs},
           {"seed", seed},               {"outputs", outputs}, {"started_at", started},
           {"finished_at", utc_now()}};
    write_file(dir / "manifest.json", j.dump(2) + "\n");
  }
};

/// Writes an artifact and records it in the manifest.
void emit(Manifest& manifest, const fs::path& dir, const std::string& name, const std::string& text) {
  write_file(dir / name, text);
  manifest.outputs.push_back(name);
}

json grouped_json(const metrics::Report::Grouped& g) {
  return {{"MAP", g.map},
          {"R-precision", g.r_precision},
          {"MAP@3", g.map_at_3},
          {"Precision@1", g.precision_at_1},
          {"groups", g.groups},
          {"skipped", g.skipped}};
}

json evaluations_json(std::span<const pipe::Evaluation> evaluations) {
  json out = json::object();
  for (const auto& e : evaluations) {
    out[e.name] = {{"overall", {{"AP", e.report.ap}, {"R-precision", e.report.r_precision}}},
                   {"by_compound", grouped_json(e.report.by_compound)},
                   {"by_sequence", grouped_json(e.report.by_sequence)},
                   {"examples", e.report.examples},
                   {"positives", e.report.positives}};
  }
  return out;
}

json stats_json(const data::StrataStatistics& s) {
  return {{"strata", s.strata},
          {"average_size", s.average_size},
          {"standard_deviation", s.standard_deviation},
          {"minimum_size", s.minimum_size},
          {"maximum_size", s.maximum_size},
          {"average_sharing", s.average_sharing},
          {"average_jaccard", s.average_jaccard}};
}

json view_stats_json(const strat::ViewCountStatistics& s) {
  return {{"keys", s.keys},
          {"total", s.total},
          {"mean", s.mean},
          {"standard_deviation", s.standard_deviation},
          {"maximum", s.maximum}};
}

json base_json(const data::InteractionSet& set) {
  const auto b = data::base_stats(set);
  return {{"interactions", b.interactions},
          {"compounds", b.compounds},
          {"sequences", b.sequences},
          {"compound_to_sequence_ratio", b.compound_to_sequence_ratio}};
}

json config_json(const pipe::TrainConfig& config) { return json::parse(pipe::to_json(config)); }

json view_item_json(const strat::ViewItem& item) {
  if (item.second.empty()) return json::array({item.first});
  return json::array({item.first, item.second});
}

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out.push_back(c);
  }
  return out;
}

/// Static loss curves, one panel per phase, plus an AP bar per evaluation set.
std::string training_svg(const pipe::TrainingLog& log, std::span<const pipe::Evaluation> evaluations) {
  std::map<std::string, std::vector<double>> curves;
  std::vector<std::string> order;
  for (const auto& r : log.records) {
    if (!curves.contains(r.phase)) order.push_back(r.phase);
    curves[r.phase].push_back(r.loss);
  }
  const int w = 420, h = 180, pad = 30;
  const int height = static_cast<int>(order.size()) * (h + pad) + 40 + static_cast<int>(evaluations.size()) * 22 + pad;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w + 2 * pad << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  int y0 = pad;
  for (const auto& phase : order) {
    const auto& v = curves[phase];
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double span = *hi - *lo > 0 ? *hi - *lo : 1.0;
    svg << "<text x=\"" << pad << "\" y=\"" << y0 - 6 << "\">phase " << svg_escape(phase) << " loss ["
        << *lo << ", " << *hi << "]</text>\n";
    svg << "<rect x=\"" << pad << "\" y=\"" << y0 << "\" width=\"" << w << "\" height=\"" << h
        << "\" fill=\"none\" stroke=\"#999\"/>\n<polyline fill=\"none\" stroke=\"#1f77b4\" points=\"";
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double x = pad + (v.size() > 1 ? w * static_cast<double>(i) / static_cast<double>(v.size() - 1) : 0.0);
      const double y = y0 + h - h * (v[i] - *lo) / span;
      svg << x << ',' << y << ' ';
    }
    svg << "\"/>\n";
    y0 += h + pad;
  }
  svg << "<text x=\"" << pad << "\" y=\"" << y0 + 4 << "\">AP by evaluation set</text>\n";
  y0 += 14;
  for (const auto& e : evaluations) {
    svg << "<rect x=\"" << pad + 80 << "\" y=\"" << y0 << "\" width=\"" << (w - 120) * e.report.ap
        << "\" height=\"16\" fill=\"#ff7f0e\"/>\n<text x=\"" << pad << "\" y=\"" << y0 + 12 << "\">"
        << svg_escape(e.name) << "</text>\n<text x=\"" << pad + 84 + (w - 120) * e.report.ap << "\" y=\"" << y0 + 12
        << "\">" << e.report.ap << "</text>\n";
    y0 += 22;
  }
  svg << "</svg>\n";
  return svg.str();
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw Error(ErrorKind::ConfigError, std::string(what) + " expects positive integers, got '" + item + "'");
    }
  }
  if (out.empty()) throw Error(ErrorKind::ConfigError, std::string(what) + " is empty");
  return out;
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw Error(ErrorKind::ConfigError, std::string(what) + " expects numbers, got '" + item + "'");
    }
  }
  if (out.empty()) throw Error(ErrorKind::ConfigError, std::string(what) + " is empty");
  return out;
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  int threads = 1;
};

pipe::TrainConfig resolve_config(const Globals& g) {
  pipe::TrainConfig config = g.config.empty() ? pipe::TrainConfig{} : load_config(g.config);
  if (g.seed) config.seed = *g.seed;
  config.validate();
  return config;
}

fs::path require_out(const Globals& g) {
  if (g.out.empty()) throw Error(ErrorKind::ConfigError, "--out <dir> is required for this command");
  fs::create_directories(g.out);
  return g.out;
}

struct RunArtifacts {
  json report;
  pipe::ExperimentResult result;
};

/// One full pipeline run written to `dir`.
RunArtifacts execute_run(const Dataset& dataset, const pipe::TrainConfig& config, const fs::path& dir,
                         const std::string& command, bool svg) {
  Manifest manifest;
  manifest.command = command;
  manifest.config = config_json(config);
  manifest.seed = config.seed;
  for (const auto& f : dataset.files) manifest.add_input(f);
  fs::create_directories(dir);

  RunArtifacts out{json::object(), pipe::run_experiment(dataset.data, config)};
  const auto& r = out.result;
  emit(manifest, dir, "training_log.jsonl", r.log.jsonl());
  const auto checkpoint = pipe::make_checkpoint(r.model, config, r.log);
  emit(manifest, dir, "model.ckpt", pipe::serialize(checkpoint));
  out.report["stratification"] = std::string(pipe::to_string(config.stratification));
  out.report["sets"] = evaluations_json(r.evaluations);
  out.report["counts"] = r.counts;
  if (r.predictor) {
    out.report["predictor"] = {{"epochs_run", r.predictor->epochs_run},
                               {"best_epoch", r.predictor->best_epoch},
                               {"best_val_loss", r.predictor->best_val_loss},
                               {"positive_weight", r.predictor->positive_weight}};
  }
  out.report["log_digest"] = r.log.digest();
  emit(manifest, dir, "report.json", out.report.dump(2) + "\n");
  if (svg) emit(manifest, dir, "curves.svg", training_svg(r.log, r.evaluations));
  manifest.write(dir);
  return out;
}

json ap_summary(const pipe::ExperimentResult& r) {
  json j = json::object();
  for (const auto& e : r.evaluations) j[e.name] = e.report.ap;
  return j;
}

// ---------------------------------------------------------------------------

void cmd_ingest(const Globals& g, const std::string& input) {
  const fs::path out = require_out(g);
  Manifest manifest;
  manifest.command = "ingest";
  manifest.seed = g.seed.value_or(0);
  json report;
  const fs::path in(input);
  const bool reactions = fs::is_directory(in) ? fs::exists(in / "reactions.jsonl") || fs::exists(in / "reactions" / "reactions.jsonl")
                                              : in.extension() == ".jsonl";
  if (reactions) {
    const Dataset ds = load_dataset(in);
    for (const auto& f : ds.files) manifest.add_input(f);
    data::save_reactions(*ds.data.reactions, out / "reactions");
    for (const char* f : {"reactions/reactions.jsonl", "reactions/compounds.tsv", "reactions/sequences.tsv"}) {
      manifest.outputs.push_back(f);
    }
    data::save_interactions(ds.data.interactions, out / "interactions.tsv");
    manifest.outputs.push_back("interactions.tsv");
    report = base_json(ds.data.interactions);
    report["reactions"] = ds.data.reactions->reactions.size();
  } else {
    const fs::path file = fs::is_directory(in) ? in / "interactions.tsv" : in;
    manifest.add_input(file);
    data::LoadReport load;
    const auto set = data::load_interactions(file, &load);
    data::save_interactions(set, out / "interactions.tsv");
    manifest.outputs.push_back("interactions.tsv");
    report = base_json(set);
    report["rows"] = load.rows;
    report["duplicates"] = load.duplicates;
    report["labeled_negatives"] = load.labeled_negatives;
  }
  emit(manifest, out, "report.json", report.dump(2) + "\n");
  manifest.write(out);
  std::cout << report.dump(2) << '\n';
}

void cmd_stats(const Globals& g, const std::string& input) {
  const Dataset ds = load_dataset(input);
  json j;
  j["base"] = base_json(ds.data.interactions);
  j["compound_strata"] = stats_json(data::strata_stats(strat::partner_strata(ds.data.interactions, strat::Keying::Compound)));
  j["sequence_strata"] = stats_json(data::strata_stats(strat::partner_strata(ds.data.interactions, strat::Keying::Sequence)));
  if (ds.has_reactions()) {
    j["reactions"] = ds.data.reactions->reactions.size();
    for (auto k : {strat::Keying::Reaction, strat::Keying::RClass, strat::Keying::EC}) {
      j["reaction_keyed"][std::string(strat::to_string(k))] =
          view_stats_json(strat::view_count_stats(strat::stratify_by_reaction_feature(*ds.data.reactions, k)));
    }
  }
  std::cout << j.dump(2) << '\n';
  if (!g.out.empty()) {
    const fs::path out = require_out(g);
    Manifest manifest;
    manifest.command = "stats";
    manifest.seed = g.seed.value_or(0);
    for (const auto& f : ds.files) manifest.add_input(f);
    emit(manifest, out, "stats.json", j.dump(2) + "\n");
    manifest.write(out);
  }
}

void cmd_stratify(const Globals& g, const std::string& input, const std::string& keying_name) {
  const fs::path out = require_out(g);
  const auto keying = strat::parse_keying(keying_name);
  const Dataset ds = load_dataset(input);
  strat::CongruentViewSet views;
  json stats;
  if (keying == strat::Keying::Compound || keying == strat::Keying::Sequence) {
    views = keying == strat::Keying::Compound ? strat::stratify_by_compound(ds.data.interactions)
                                              : strat::stratify_by_sequence(ds.data.interactions);
    stats["partners"] = stats_json(data::strata_stats(strat::partner_strata(ds.data.interactions, keying)));
  } else {
    if (!ds.has_reactions()) {
      throw Error(ErrorKind::ConfigError, "keying '" + keying_name + "' needs a reaction dataset");
    }
    views = strat::stratify_by_reaction_feature(*ds.data.reactions, keying);
  }
  stats["keying"] = keying_name;
  stats["views"] = view_stats_json(strat::view_count_stats(views));
  std::ostringstream lines;
  for (const auto& [key, stratum] : views.strata) {
    json v = json::array();
    for (const auto& list : stratum.views) {
      json items = json::array();
      for (const auto& item : list) items.push_back(view_item_json(item));
      v.push_back(items);
    }
    lines << json{{"key", key}, {"views", v}}.dump() << '\n';
  }
  Manifest manifest;
  manifest.command = "stratify";
  manifest.config = {{"keying", keying_name}};
  manifest.seed = g.seed.value_or(0);
  for (const auto& f : ds.files) manifest.add_input(f);
  emit(manifest, out, "strata.jsonl", lines.str());
  emit(manifest, out, "statistics.json", stats.dump(2) + "\n");
  manifest.write(out);
  std::cout << stats.dump(2) << '\n';
}

void cmd_synth(const Globals& g, synth::SynthSpec spec) {
  const fs::path out = require_out(g);
  spec.seed = g.seed.value_or(0);
  const auto bundle = synth::synthesize(spec);
  synth::write_bundle(bundle, out);
  Manifest manifest;
  manifest.command = "synth";
  manifest.seed = spec.seed;
  manifest.config = {{"blocks", spec.blocks},
                     {"compounds_per_block", spec.compounds_per_block},
                     {"sequences_per_block", spec.sequences_per_block},
                     {"subgroups", spec.subgroups},
                     {"noise", spec.noise},
                     {"partners_per_compound", spec.partners_per_compound},
                     {"min_length", spec.min_length},
                     {"max_length", spec.max_length},
                     {"reactions", spec.reactions},
                     {"reactions_per_block", spec.reactions_per_block}};
  manifest.outputs = {"interactions.tsv", "blocks.tsv"};
  if (bundle.reactions) {
    for (const char* f : {"reactions/reactions.jsonl", "reactions/compounds.tsv", "reactions/sequences.tsv"}) {
      manifest.outputs.push_back(f);
    }
  }
  manifest.write(out);
  std::cout << base_json(bundle.interactions).dump(2) << '\n';
}

void cmd_run(const Globals& g, const std::string& input, const std::string& stratification, bool svg) {
  const fs::path out = require_out(g);
  pipe::TrainConfig config = resolve_config(g);
  if (!stratification.empty()) config.stratification = pipe::parse_stratification(stratification);
  config.validate();
  const Dataset ds = load_dataset(input);
  const auto run = execute_run(ds, config, out, "run", svg);
  std::cout << ap_summary(run.result).dump(2) << '\n';
}

void cmd_evaluate(const Globals& g, const std::string& checkpoint_path, const std::string& input,
                  const std::string& ratios) {
  const fs::path out = require_out(g);
  const auto checkpoint = pipe::load_checkpoint(checkpoint_path);
  pipe::TrainConfig config = pipe::config_from_json(checkpoint.config_json);
  if (!ratios.empty()) config.test_ratios = parse_int_list(ratios, "--ratios");
  pipe::Model model = pipe::restore_model(checkpoint);
  const Dataset ds = load_dataset(input);
  const auto prepared = pipe::prepare_experiment(ds.data.interactions, config);
  const auto store = pipe::build_store(ds.data.interactions.compounds, ds.data.interactions.sequences,
                                       config.shape.sequence_length);
  const auto evaluations = pipe::evaluate_model(model, store, prepared.evaluations);
  Manifest manifest;
  manifest.command = "evaluate";
  manifest.config = config_json(config);
  manifest.seed = config.seed;
  manifest.add_input(checkpoint_path);
  for (const auto& f : ds.files) manifest.add_input(f);
  emit(manifest, out, "report.json", report_json(evaluations));
  manifest.write(out);
  std::cout << report_json(evaluations);
}

void cmd_ablate(const Globals& g, const std::string& input, bool svg) {
  const fs::path out = require_out(g);
  const pipe::TrainConfig base = resolve_config(g);
  const Dataset ds = load_dataset(input);
  struct Variant {
    std::string name;
    pipe::TrainConfig config;
  };
  std::vector<Variant> variants;
  auto add = [&](std::string name, auto&& edit) {
    pipe::TrainConfig c = base;
    c.drop_views.clear();
    c.drop_compound_strat = c.drop_sequence_strat = false;
    edit(c);
    variants.push_back({std::move(name), c});
  };
  add("baseline", [](auto& c) { c.stratification = pipe::Stratification::None; });
  add("compound+sequence", [](auto& c) { c.stratification = pipe::Stratification::CompoundSequence; });
  if (pipe::is_reaction_keyed(base.stratification)) {
    const auto name = std::string(pipe::to_string(base.stratification));
    add(name, [&](auto& c) { c.stratification = base.stratification; });
    for (int v : {1, 2, 3}) {
      add(name + "-drop-v" + std::to_string(v), [&](auto& c) {
        c.stratification = base.stratification;
        c.drop_views = {v};
      });
    }
  } else {
    add("compound-only", [](auto& c) {
      c.stratification = pipe::Stratification::CompoundSequence;
      c.drop_sequence_strat = true;
    });
    add("sequence-only", [](auto& c) {
      c.stratification = pipe::Stratification::CompoundSequence;
      c.drop_compound_strat = true;
    });
  }
  Manifest manifest;
  manifest.command = "ablate";
  manifest.config = config_json(base);
  manifest.seed = base.seed;
  for (const auto& f : ds.files) manifest.add_input(f);
  json summary = json::object();
  for (const auto& v : variants) {
    const auto run = execute_run(ds, v.config, out / v.name, "ablate/" + v.name, svg);
    summary[v.name] = ap_summary(run.result);
    manifest.outputs.push_back(v.name + "/");
  }
  emit(manifest, out, "ablation.json", summary.dump(2) + "\n");
  manifest.write(out);
  std::cout << summary.dump(2) << '\n';
}

void cmd_grid_tau(const Globals& g, const std::string& input, const std::string& taus, bool svg) {
  const fs::path out = require_out(g);
  const pipe::TrainConfig base = resolve_config(g);
  if (base.stratification == pipe::Stratification::None) {
    throw Error(ErrorKind::ConfigError, "grid-tau needs a contrastive stratification, not 'none'");
  }
  const Dataset ds = load_dataset(input);
  Manifest manifest;
  manifest.command = "grid-tau";
  manifest.config = config_json(base);
  manifest.seed = base.seed;
  for (const auto& f : ds.files) manifest.add_input(f);
  json summary{{"runs", json::object()}};
  std::optional<double> best_tau;
  double best_loss = 0.0;
  for (double tau : parse_double_list(taus, "--taus")) {
    pipe::TrainConfig c = base;
    c.tau = tau;
    char name[32];
    std::snprintf(name, sizeof name, "tau-%g", tau);
    const auto run = execute_run(ds, c, out / name, std::string("grid-tau/") + name, svg);
    const double val = run.result.predictor->best_val_loss;
    summary["runs"][name] = {{"tau", tau}, {"best_val_loss", val}, {"ap", ap_summary(run.result)}};
    manifest.outputs.push_back(std::string(name) + "/");
    // Selection uses validation loss so the test sets stay untouched.
    if (!best_tau || val < best_loss) {
      best_tau = tau;
      best_loss = val;
    }
  }
  summary["selected_tau"] = *best_tau;
  emit(manifest, out, "grid.json", summary.dump(2) + "\n");
  manifest.write(out);
  std::cout << summary.dump(2) << '\n';
}

}  // namespace

pipe::TrainConfig load_config(const fs::path& path) {
  const std::string text = read_file(path);
  if (path.extension() != ".toml") return pipe::config_from_json(text);
  try {
    const toml::table table = toml::parse(text, path.string());
    std::ostringstream ss;
    ss << toml::json_formatter{table};
    return pipe::config_from_json(ss.str());
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << path.string() << ':' << e.source().begin.line << ": " << e.description();
    throw Error(ErrorKind::ConfigError, msg.str());
  }
}

Dataset load_dataset(const fs::path& path) {
  Dataset ds;
  fs::path reactions;
  fs::path interactions;
  if (fs::is_directory(path)) {
    if (fs::exists(path / "reactions.jsonl")) reactions = path / "reactions.jsonl";
    else if (fs::exists(path / "reactions" / "reactions.jsonl")) reactions = path / "reactions" / "reactions.jsonl";
    else interactions = path / "interactions.tsv";
  } else if (path.extension() == ".jsonl") {
    reactions = path;
  } else {
    interactions = path;
  }
  if (!reactions.empty()) {
    ds.data.reactions = data::load_reactions(reactions);
    ds.data.interactions = data::induced_interactions(*ds.data.reactions);
    ds.files = {reactions, reactions.parent_path() / "compounds.tsv", reactions.parent_path() / "sequences.tsv"};
  } else {
    if (!fs::exists(interactions)) throw Error(ErrorKind::IoError, "no dataset at " + path.string());
    ds.data.interactions = data::load_interactions(interactions);
    ds.files = {interactions};
  }
  return ds;
}

std::string report_json(std::span<const pipe::Evaluation> evaluations) {
  return json{{"sets", evaluations_json(evaluations)}}.dump(2) + "\n";
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Contrastive stratification for compound-sequence interaction prediction"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every randomized step")->capture_default_str();
  app.add_option("--config", g.config, "TOML or JSON training config");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads for dense kernels")->check(CLI::PositiveNumber);

  std::string input, checkpoint, keying = "compound", stratification, ratios, taus = "0.05,0.06,0.07,0.08";
  bool svg = false;

  auto* ingest = app.add_subcommand("ingest", "Validate and normalize an interactions or reactions file");
  ingest->add_option("input", input, "interactions.tsv, reactions.jsonl or a bundle directory")->required();

  auto* stats = app.add_subcommand("stats", "Dataset and strata statistics");
  stats->add_option("input", input)->required();

  auto* stratify = app.add_subcommand("stratify", "Write congruent view strata as JSON lines");
  stratify->add_option("input", input)->required();
  stratify->add_option("--keying", keying, "compound, sequence, reaction, rclass or ec")->capture_default_str();

  synth::SynthSpec spec;
  auto* syn = app.add_subcommand("synth", "Generate a planted-structure benchmark bundle");
  syn->add_option("--blocks", spec.blocks)->capture_default_str();
  syn->add_option("--compounds-per-block", spec.compounds_per_block)->capture_default_str();
  syn->add_option("--sequences-per-block", spec.sequences_per_block)->capture_default_str();
  syn->add_option("--subgroups", spec.subgroups)->capture_default_str();
  syn->add_option("--noise", spec.noise)->capture_default_str();
  syn->add_option("--partners", spec.partners_per_compound, "Partners per compound")->capture_default_str();
  syn->add_option("--min-length", spec.min_length)->capture_default_str();
  syn->add_option("--max-length", spec.max_length)->capture_default_str();
  syn->add_flag("--reactions", spec.reactions, "Emit a reaction bundle");
  syn->add_option("--reactions-per-block", spec.reactions_per_block)->capture_default_str();

  auto* runc = app.add_subcommand("run", "Train and evaluate one configuration");
  runc->add_option("input", input)->required();
  runc->add_option("--stratification", stratification, "Overrides the config's stratification");
  runc->add_flag("--svg", svg, "Also write loss curves and AP bars as SVG");

  auto* eval = app.add_subcommand("evaluate", "Re-evaluate a checkpoint on its data");
  eval->add_option("checkpoint", checkpoint)->required();
  eval->add_option("input", input)->required();
  eval->add_option("--ratios", ratios, "Comma-separated test negative ratios, e.g. 1,5,10,25");

  auto* ablate = app.add_subcommand("ablate", "Baseline, strategy and view ablations");
  ablate->add_option("input", input)->required();
  ablate->add_flag("--svg", svg);

  auto* grid = app.add_subcommand("grid-tau", "Temperature sweep");
  grid->add_option("input", input)->required();
  grid->add_option("--taus", taus)->capture_default_str();
  grid->add_flag("--svg", svg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (seed_opt->count() > 0) g.seed = seed;

  try {
    Eigen::setNbThreads(g.threads);
    if (ingest->parsed()) cmd_ingest(g, input);
    else if (stats->parsed()) cmd_stats(g, input);
    else if (stratify->parsed()) cmd_stratify(g, input, keying);
    else if (syn->parsed()) cmd_synth(g, spec);
    else if (runc->parsed()) cmd_run(g, input, stratification, svg);
    else if (eval->parsed()) cmd_evaluate(g, checkpoint, input, ratios);
    else if (ablate->parsed()) cmd_ablate(g, input, svg);
    else if (grid->parsed()) cmd_grid_tau(g, input, taus, svg);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: SchemaError: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: IoError: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace csi::cli
