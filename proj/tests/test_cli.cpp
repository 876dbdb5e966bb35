#include <gtest/gtest.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "csi/cli.hpp"

using namespace csi;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

// Runs the csi binary, capturing stdout and stderr together.
Result csi_run(const std::string& args) {
  const std::string cmd = std::string(CSI_BINARY) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buffer[4096];
  while (std::size_t n = std::fread(buffer, 1, sizeof buffer, pipe)) r.output.append(buffer, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("csi_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path write(const std::string& name, const std::string& text) {
    std::ofstream(dir_ / name, std::ios::binary) << text;
    return dir_ / name;
  }
  std::string q(const fs::path& p) const { return "'" + p.string() + "'"; }
  fs::path dir_;
};

const char* kHeader = "compound_id\tsmiles\tsequence_id\tfasta\tlabel\n";

std::string fixture() {
  return std::string(kHeader) + "c1\tCCO\ts1\tMKVLA\t1\n" + "c1\t\ts2\tGGHHW\t1\n" + "c2\tc1ccccc1\ts1\t\t1\n";
}

}  // namespace

TEST(CliUnit, ExitCodes) {
  EXPECT_EQ(cli::exit_code(ErrorKind::ConfigError), 2);
  EXPECT_EQ(cli::exit_code(ErrorKind::SchemaError), 2);
  EXPECT_EQ(cli::exit_code(ErrorKind::UnknownKeying), 2);
  EXPECT_EQ(cli::exit_code(ErrorKind::VersionMismatch), 2);
  EXPECT_EQ(cli::exit_code(ErrorKind::DanglingReference), 3);
  EXPECT_EQ(cli::exit_code(ErrorKind::SyntaxError), 3);
  EXPECT_EQ(cli::exit_code(ErrorKind::IoError), 3);
  EXPECT_EQ(cli::exit_code(ErrorKind::NonFiniteValue), 4);
  EXPECT_EQ(cli::exit_code(ErrorKind::FrozenViolation), 4);
}

TEST_F(CliTest, TomlAndJsonConfigs) {
  const auto toml = write("c.toml", "tau = 0.05\nphase1_epochs = 3\nstratification = \"sequence\"\n\n[shape]\nd = 8\n");
  const auto c = cli::load_config(toml);
  EXPECT_EQ(c.tau, 0.05);
  EXPECT_EQ(c.phase1_epochs, 3);
  EXPECT_EQ(c.stratification, pipe::Stratification::Sequence);
  EXPECT_EQ(c.shape.d, 8);
  const auto js = write("c.json", R"({"tau": 0.08, "batch_size": 4})");
  EXPECT_EQ(cli::load_config(js).batch_size, 4);
  const auto bad = write("bad.toml", "tau = [\n");
  EXPECT_THROW(cli::load_config(bad), Error);
}

TEST_F(CliTest, IngestFixtureCounts) {
  const auto tsv = write("interactions.tsv", fixture());
  const auto r = csi_run("ingest " + q(tsv) + " --out " + q(dir_ / "out"));
  ASSERT_EQ(r.code, 0) << r.output;
  const json report = json::parse(slurp(dir_ / "out" / "report.json"));
  EXPECT_EQ(report["interactions"], 3);
  EXPECT_EQ(report["compounds"], 2);
  EXPECT_EQ(report["sequences"], 2);
  EXPECT_EQ(report["compound_to_sequence_ratio"], 1.0);
  const json manifest = json::parse(slurp(dir_ / "out" / "manifest.json"));
  EXPECT_EQ(manifest["command"], "ingest");
  EXPECT_EQ(manifest["inputs"].size(), 1u);
  const auto stats = csi_run("stats " + q(tsv));
  ASSERT_EQ(stats.code, 0) << stats.output;
  EXPECT_NE(stats.output.find("\"interactions\": 3"), std::string::npos) << stats.output;
}

TEST_F(CliTest, MalformedRowNamesItsLine) {
  std::string text = kHeader;
  for (int i = 2; i <= 16; ++i) text += "c" + std::to_string(i) + "\tCC\ts1\tMKV\t1\n";
  text += "c17\tCC\ts1\n";
  const auto r = csi_run("ingest " + q(write("bad.tsv", text)) + " --out " + q(dir_ / "o"));
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("line 17"), std::string::npos) << r.output;
  const auto dangling = csi_run("stats " + q(write("d.tsv", std::string(kHeader) + "c1\t\ts1\tMKV\t1\n")));
  EXPECT_EQ(dangling.code, 3) << dangling.output;
  EXPECT_EQ(csi_run("stats " + q(dir_ / "missing.tsv")).code, 3);
}

TEST_F(CliTest, ConfigErrorsExitTwo) {
  const auto tsv = write("interactions.tsv", fixture());
  const auto r = csi_run("run " + q(tsv) + " --stratification tissue --out " + q(dir_ / "o"));
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("compound+sequence"), std::string::npos) << r.output;
  EXPECT_EQ(csi_run("stratify " + q(tsv) + " --keying tissue --out " + q(dir_ / "o")).code, 2);
  EXPECT_EQ(csi_run("frobnicate").code, 2);
  EXPECT_EQ(csi_run("--help").code, 0);
}

TEST_F(CliTest, SynthStratifyIdempotent) {
  const std::string synth = "synth --blocks 2 --compounds-per-block 6 --sequences-per-block 6 --subgroups 2 "
                            "--partners 3 --seed 5 --out ";
  ASSERT_EQ(csi_run(synth + q(dir_ / "a")).code, 0);
  ASSERT_EQ(csi_run(synth + q(dir_ / "b")).code, 0);
  for (const char* f : {"interactions.tsv", "blocks.tsv"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  EXPECT_TRUE(fs::exists(dir_ / "a" / "manifest.json"));
  ASSERT_EQ(csi_run("stratify " + q(dir_ / "a") + " --keying sequence --out " + q(dir_ / "s1")).code, 0);
  ASSERT_EQ(csi_run("stratify " + q(dir_ / "a") + " --keying sequence --out " + q(dir_ / "s2")).code, 0);
  EXPECT_EQ(slurp(dir_ / "s1" / "strata.jsonl"), slurp(dir_ / "s2" / "strata.jsonl"));
  EXPECT_FALSE(slurp(dir_ / "s1" / "strata.jsonl").empty());
}

TEST_F(CliTest, RunAndEvaluateAgree) {
  ASSERT_EQ(csi_run("synth --blocks 2 --compounds-per-block 8 --sequences-per-block 8 --subgroups 2 --partners 3 "
                    "--min-length 20 --max-length 30 --out " + q(dir_ / "data")).code, 0);
  const auto cfg = write("run.toml",
                         "phase1_epochs = 5\nphase2_epochs = 5\nbatch_size = 4\nnegative_ratio = 1\n"
                         "test_ratios = [1, 5]\n\n[shape]\nd = 8\ngcn_hidden = 8\ngcn_layers = 2\n"
                         "cnn_embedding = 8\ncnn_filters = 8\ncnn_width = 4\nsequence_length = 32\n");
  const auto r = csi_run("--config " + q(cfg) + " run " + q(dir_ / "data") + " --svg --out " + q(dir_ / "run"));
  ASSERT_EQ(r.code, 0) << r.output;
  for (const char* f : {"report.json", "model.ckpt", "training_log.jsonl", "manifest.json", "curves.svg"}) {
    EXPECT_TRUE(fs::exists(dir_ / "run" / f)) << f;
  }
  const json report = json::parse(slurp(dir_ / "run" / "report.json"));
  const json& test1 = report["sets"]["test@1"];
  for (const char* family : {"overall", "by_compound", "by_sequence"}) EXPECT_TRUE(test1.contains(family)) << family;
  EXPECT_TRUE(report["sets"].contains("unseen@1"));

  const auto e = csi_run("evaluate " + q(dir_ / "run" / "model.ckpt") + " " + q(dir_ / "data") + " --out " +
                         q(dir_ / "eval"));
  ASSERT_EQ(e.code, 0) << e.output;
  const json again = json::parse(slurp(dir_ / "eval" / "report.json"));
  EXPECT_EQ(again["sets"]["test@1"], test1);

  // Re-running overwrites with identical artifacts.
  ASSERT_EQ(csi_run("--config " + q(cfg) + " run " + q(dir_ / "data") + " --out " + q(dir_ / "run2")).code, 0);
  EXPECT_EQ(slurp(dir_ / "run" / "model.ckpt"), slurp(dir_ / "run2" / "model.ckpt"));
  EXPECT_EQ(slurp(dir_ / "run" / "report.json"), slurp(dir_ / "run2" / "report.json"));
}
