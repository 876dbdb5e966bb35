#pragma once

// Command-line front end. `run` parses argv, dispatches a subcommand and maps
// library errors to exit codes; the helpers are exposed for tests.

#include <filesystem>
#include <span>
#include <string>

#include "csi/error.hpp"
#include "csi/pipeline.hpp"

namespace csi::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// 2 for config/schema problems, 3 for data problems, 4 for numeric failures.
int exit_code(ErrorKind kind);

/// `.toml` files go through a TOML parser, anything else is read as JSON.
pipe::TrainConfig load_config(const std::filesystem::path& path);

/// Input bundle: an interactions.tsv file, a reactions.jsonl file, or a
/// directory holding either (reactions win when both are present).
struct Dataset {
  pipe::ExperimentData data;
  std::vector<std::filesystem::path> files;
  bool has_reactions() const { return data.reactions.has_value(); }
};

Dataset load_dataset(const std::filesystem::path& path);

/// {"<set>": {"overall": {...}, "by_compound": {...}, "by_sequence": {...}}}
std::string report_json(std::span<const pipe::Evaluation> evaluations);

/// Full entry point; returns the process exit code.
int run(int argc, const char* const* argv);

}  // namespace csi::cli
