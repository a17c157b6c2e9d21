#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "dpfed/cli.hpp"
#include "dpfed/config.hpp"
#include "dpfed/io.hpp"

namespace dpfed {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    auto base = fs::temp_directory_path() / "dpfed_test_XXXXXX";
    std::string templ = base.string();
    if (!mkdtemp(templ.data())) throw std::runtime_error("mkdtemp failed");
    path_ = templ;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

constexpr const char* kMinimalConfig = R"(
# tiny smoke configuration
[dataset]
kind = "regression"
dim = 8
clients = 4

[client]
local_steps = 2
local_lr = 0.01
clip = 0.5

[run]
algorithm = "ldp_fedexp_gaussian"
rounds = 3
seed = 7
workers = 1
)";

TEST(ConfigParse, SectionsCommentsQuotes) {
  std::stringstream in(kMinimalConfig);
  const RawConfig raw = parse_config_text(in);
  EXPECT_EQ(raw.values.at("dataset.kind"), "regression");
  EXPECT_EQ(raw.values.at("dataset.dim"), "8");
  EXPECT_EQ(raw.values.at("run.algorithm"), "ldp_fedexp_gaussian");
}

TEST(ConfigParse, Errors) {
  std::stringstream bad1("[dataset\nkind = x");
  EXPECT_THROW(parse_config_text(bad1), config_error);
  std::stringstream bad2("[a]\nno_equals_here");
  EXPECT_THROW(parse_config_text(bad2), config_error);
  EXPECT_THROW(parse_config_file("/nonexistent/path.toml"), config_error);
}

TEST(ConfigResolve, DefaultsFollowClipAndClientCount) {
  std::stringstream in(kMinimalConfig);
  RawConfig raw = parse_config_text(in);
  const ExperimentConfig cfg = resolve_experiment(raw);
  EXPECT_EQ(cfg.algorithm, Algorithm::kLdpFedexpGaussian);
  EXPECT_DOUBLE_EQ(cfg.mechanism.sigma, 0.7 * 0.5);
  EXPECT_EQ(cfg.rule.variant, StepVariant::kLdpGaussianCorrected);
  EXPECT_EQ(cfg.last_k_average, 2);
  EXPECT_DOUBLE_EQ(cfg.delta, 1e-5);

  apply_overrides(raw, {"run.algorithm=cdp_fedexp", "dataset.clients=25"});
  const ExperimentConfig cdp = resolve_experiment(raw);
  EXPECT_DOUBLE_EQ(cdp.mechanism.sigma, 5.0 * 0.5 / 5.0);
  EXPECT_DOUBLE_EQ(cdp.mechanism.sigma_xi, 8.0 * cdp.mechanism.sigma * cdp.mechanism.sigma / 25.0);
  EXPECT_EQ(cdp.rule.variant, StepVariant::kCdpCorrected);
}

TEST(ConfigResolve, FieldLevelErrors) {
  {
    std::stringstream in("[dataset]\nkind = \"imagenet\"\n");
    RawConfig raw = parse_config_text(in);
    EXPECT_THROW(resolve_experiment(raw), config_error);
  }
  {
    std::stringstream in("[client]\nlocal_lr = \"fast\"\n");
    RawConfig raw = parse_config_text(in);
    EXPECT_THROW(resolve_experiment(raw), config_error);
  }
  {
    std::stringstream in("[client]\nlocal_rl = 0.1\n");  // typo
    RawConfig raw = parse_config_text(in);
    try {
      resolve_experiment(raw);
      FAIL() << "expected config_error";
    } catch (const config_error& e) {
      EXPECT_NE(std::string(e.what()).find("client.local_rl"), std::string::npos);
    }
  }
  {
    std::stringstream in("[run]\nalgorithm = \"dp_fedavg\"\nrounds = 0\n");
    RawConfig raw = parse_config_text(in);
    EXPECT_THROW(resolve_experiment(raw), config_error);
  }
}

TEST(ConfigEcho, RoundTripsToIdenticalConfig) {
  std::stringstream in(kMinimalConfig);
  RawConfig raw = parse_config_text(in);
  apply_overrides(raw, {"run.algorithm=ldp_fedexp_privunit", "mechanism.eps1=1.5"});
  const ExperimentConfig cfg = resolve_experiment(raw);
  const ExperimentConfig back = config_from_json(config_to_json(cfg));
  EXPECT_TRUE(cfg == back);
}

TEST(FormatG17, RoundTripsDoublesExactly) {
  RngStream rng(71);
  for (int i = 0; i < 1000; ++i) {
    const double v = std::exp(40.0 * (rng.uniform01() - 0.5)) * (rng.bernoulli(0.5) ? 1 : -1);
    EXPECT_EQ(std::stod(format_g17(v)), v);
  }
  EXPECT_EQ(format_g17(0.1), "0.10000000000000001");
}

TEST(DatasetJson, RegressionRoundTripIsExact) {
  RngStream rng(72);
  const FederatedDataset ds = generate_synthetic_regression(6, 5, rng);
  const FederatedDataset back = dataset_from_json(dataset_to_json(ds));
  EXPECT_EQ(back.feature_dim, ds.feature_dim);
  EXPECT_EQ(*back.optimum, *ds.optimum);
  for (std::size_t i = 0; i < ds.clients.size(); ++i) {
    const auto& a = std::get<RegressionClient>(ds.clients[i]);
    const auto& b = std::get<RegressionClient>(back.clients[i]);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.y, b.y);
  }
}

TEST(DatasetJson, FileRoundTrip) {
  TempDir tmp;
  RngStream rng(74);
  const FederatedDataset ds = generate_synthetic_regression(3, 4, rng);
  const std::string path = (tmp.path() / "data.json").string();
  write_dataset_json(path, ds);
  const FederatedDataset back = read_dataset_json(path);
  EXPECT_EQ(*back.optimum, *ds.optimum);
  EXPECT_THROW(read_dataset_json("/no/such/file.json"), config_error);
}

TEST(DatasetJson, ClassificationRoundTrip) {
  RngStream rng(73);
  const FederatedDataset ds = generate_synthetic_classification(4, 3, 3, 5, 0.3, rng);
  const FederatedDataset back = dataset_from_json(dataset_to_json(ds));
  for (std::size_t i = 0; i < ds.clients.size(); ++i) {
    const auto& a = std::get<ClassificationClient>(ds.clients[i]);
    const auto& b = std::get<ClassificationClient>(back.clients[i]);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.num_classes, b.num_classes);
  }
  EXPECT_FALSE(back.optimum.has_value());
}

TEST(StudyCsv, ParsesBackLosslessly) {
  std::vector<StudyCell> table{
      {10, "naive_noisy", 101.25, 3.5, 1.0625},
      {100, "ldp_privunit", 2.0 / 3.0, 0.001220703125, 0.59999999999999998},
  };
  std::stringstream ss;
  write_study_csv(ss, table);
  const std::vector<StudyCell> back = parse_study_csv(ss);
  ASSERT_EQ(back.size(), table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    EXPECT_EQ(back[i].clients, table[i].clients);
    EXPECT_EQ(back[i].rule, table[i].rule);
    EXPECT_EQ(back[i].eta_mean, table[i].eta_mean);
    EXPECT_EQ(back[i].eta_std, table[i].eta_std);
    EXPECT_EQ(back[i].eta_target_mean, table[i].eta_target_mean);
  }
}

// ---------------------------------------------------------------------------
// Command-level behavior through the library entry points.

TEST(CmdRun, MissingConfigExitsTwo) {
  CliOptions opts;
  opts.config_path = "/does/not/exist.toml";
  opts.out_dir = "/tmp/dpfed_never_created";
  EXPECT_EQ(cmd_run(opts), exit_code::kConfigError);
}

TEST(CmdRun, MinimalRunWritesCsvAndSummary) {
  TempDir tmp;
  write_file(tmp.path() / "cfg.toml", kMinimalConfig);
  CliOptions opts;
  opts.config_path = (tmp.path() / "cfg.toml").string();
  opts.out_dir = (tmp.path() / "out").string();
  ASSERT_EQ(cmd_run(opts), exit_code::kOk);

  const std::string csv = read_file(tmp.path() / "out" / "rounds.csv");
  int lines = 0;
  for (char ch : csv) lines += ch == '\n';
  EXPECT_EQ(lines, 4);  // header + 3 data rows

  const json summary = json::parse(read_file(tmp.path() / "out" / "summary.json"));
  EXPECT_EQ(summary.at("seed"), 7);
  EXPECT_TRUE(summary.contains("final_loss"));
  EXPECT_TRUE(summary.contains("wall_time_seconds"));
  const ExperimentConfig echoed = config_from_json(summary.at("config"));
  EXPECT_EQ(echoed.rounds, 3);
}

TEST(CmdRun, SeedOverrideChangesOutputSameSeedByteIdentical) {
  TempDir tmp;
  write_file(tmp.path() / "cfg.toml", kMinimalConfig);
  CliOptions opts;
  opts.config_path = (tmp.path() / "cfg.toml").string();

  opts.out_dir = (tmp.path() / "a").string();
  ASSERT_EQ(cmd_run(opts), exit_code::kOk);
  opts.out_dir = (tmp.path() / "b").string();
  ASSERT_EQ(cmd_run(opts), exit_code::kOk);
  opts.out_dir = (tmp.path() / "c").string();
  opts.seed = 12345;
  ASSERT_EQ(cmd_run(opts), exit_code::kOk);

  const std::string a = read_file(tmp.path() / "a" / "rounds.csv");
  const std::string b = read_file(tmp.path() / "b" / "rounds.csv");
  const std::string c = read_file(tmp.path() / "c" / "rounds.csv");
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(CmdRun, DivergenceExitsThree) {
  TempDir tmp;
  std::string cfg = kMinimalConfig;
  cfg += "\n[sweep]\n";  // keep file valid; override lr below
  write_file(tmp.path() / "cfg.toml", cfg);
  CliOptions opts;
  opts.config_path = (tmp.path() / "cfg.toml").string();
  opts.out_dir = (tmp.path() / "out").string();
  // local iterates must overflow into non-finite territory before clipping
  opts.overrides = {"client.local_lr=1e200", "client.local_steps=8"};
  EXPECT_EQ(cmd_run(opts), exit_code::kRuntimeFailure);
}

TEST(CmdSweep, GridOfFourProducesManifestsAndLeaderboard) {
  TempDir tmp;
  std::string cfg = kMinimalConfig;
  cfg += R"(
[sweep]
local_lr_grid = "0.005,0.02"
clip_grid = "0.3,1"
)";
  write_file(tmp.path() / "cfg.toml", cfg);
  CliOptions opts;
  opts.config_path = (tmp.path() / "cfg.toml").string();
  opts.out_dir = (tmp.path() / "sweep").string();
  ASSERT_EQ(cmd_sweep(opts), exit_code::kOk);

  const json board = json::parse(read_file(tmp.path() / "sweep" / "leaderboard.json"));
  ASSERT_EQ(board.size(), 4u);
  double prev = -1.0;
  for (const json& entry : board) {
    ASSERT_EQ(entry.at("status"), "ok");
    const fs::path summary_path = entry.at("summary_path").get<std::string>();
    EXPECT_TRUE(fs::exists(summary_path));
    const double obj = entry.at("objective").get<double>();
    EXPECT_GE(obj, prev);  // ranked ascending
    prev = obj;
  }

  // rerun with the same seeds reproduces the board exactly
  CliOptions opts2 = opts;
  opts2.out_dir = (tmp.path() / "sweep2").string();
  ASSERT_EQ(cmd_sweep(opts2), exit_code::kOk);
  const json board2 = json::parse(read_file(tmp.path() / "sweep2" / "leaderboard.json"));
  for (std::size_t i = 0; i < board.size(); ++i) {
    EXPECT_EQ(board[i].at("objective"), board2[i].at("objective"));
    EXPECT_EQ(board[i].at("local_lr"), board2[i].at("local_lr"));
  }
}

TEST(CmdSweep, AllCellsFailingIsNonzeroExit) {
  TempDir tmp;
  std::string cfg = kMinimalConfig;
  cfg += R"(
[sweep]
local_lr_grid = "1e200"
clip_grid = "0.3,1"
)";
  write_file(tmp.path() / "cfg.toml", cfg);
  CliOptions opts;
  opts.config_path = (tmp.path() / "cfg.toml").string();
  opts.out_dir = (tmp.path() / "sweep").string();
  opts.overrides = {"client.local_steps=8"};
  EXPECT_EQ(cmd_sweep(opts), exit_code::kRuntimeFailure);
  // failures are still recorded on the board
  const json board = json::parse(read_file(tmp.path() / "sweep" / "leaderboard.json"));
  ASSERT_EQ(board.size(), 2u);
  for (const json& entry : board) {
    EXPECT_NE(entry.at("status").get<std::string>(), "ok");
  }
}

TEST(CmdSweep, AcceptsPublishedGridsVerbatim) {
  TempDir tmp;
  std::string cfg = kMinimalConfig;
  cfg += R"(
[sweep]
local_lr_grid = "0.01, 0.03, 0.1, 0.3, 1"
clip_grid = "0.1, 0.3, 1, 3, 10"
)";
  write_file(tmp.path() / "cfg.toml", cfg);
  RawConfig raw = parse_config_file((tmp.path() / "cfg.toml").string());
  const SweepSpec spec = resolve_sweep(raw);
  EXPECT_EQ(spec.local_lr_grid, (std::vector<double>{0.01, 0.03, 0.1, 0.3, 1}));
  EXPECT_EQ(spec.clip_grid, (std::vector<double>{0.1, 0.3, 1, 3, 10}));
}

TEST(CmdStepsizeStudy, ThreeRowsPerRuleAndNaiveAboveTarget) {
  TempDir tmp;
  std::string cfg = R"(
[dataset]
kind = "regression"
dim = 64
clients = 10

[client]
local_steps = 3
local_lr = 0.01
clip = 0.3

[run]
algorithm = "ldp_fedexp_gaussian"
rounds = 2
seed = 3
workers = 2

[study]
m_grid = "10,20,40"
repeats = 8
)";
  write_file(tmp.path() / "cfg.toml", cfg);
  CliOptions opts;
  opts.config_path = (tmp.path() / "cfg.toml").string();
  opts.out_dir = (tmp.path() / "study").string();
  ASSERT_EQ(cmd_stepsize_study(opts), exit_code::kOk);

  std::ifstream in(tmp.path() / "study" / "stepsize_study.csv");
  const std::vector<StudyCell> table = parse_study_csv(in);
  ASSERT_EQ(table.size(), 9u);  // 3 rules x 3 client counts
  int naive_rows = 0;
  for (const StudyCell& cell : table) {
    if (cell.rule == "naive_noisy") {
      ++naive_rows;
      // d sigma^2 = 64 * 0.21^2 = 2.8 dominates the clean numerator (<= 0.09)
      EXPECT_GT(cell.eta_mean, cell.eta_target_mean);
    }
  }
  EXPECT_EQ(naive_rows, 3);
}

// The installed binary: flag parsing, stdout contract, exit codes.
TEST(CliBinary, EndToEnd) {
  TempDir tmp;
  write_file(tmp.path() / "cfg.toml", kMinimalConfig);
  const std::string out_dir = (tmp.path() / "out").string();
  const std::string stdout_file = (tmp.path() / "stdout.txt").string();
  const std::string cmd = std::string(DPFED_CLI_BINARY) + " run --config " +
                          (tmp.path() / "cfg.toml").string() + " --out-dir " + out_dir +
                          " --workers 2 > " + stdout_file + " 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(rc));
  EXPECT_EQ(WEXITSTATUS(rc), 0);
  // stdout carries exactly the manifest path
  std::string line = read_file(stdout_file);
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.pop_back();
  EXPECT_EQ(line, (fs::path(out_dir) / "summary.json").string());
  EXPECT_TRUE(fs::exists(line));

  const std::string bad = std::string(DPFED_CLI_BINARY) + " run --config /missing.toml" +
                          " > /dev/null 2>/dev/null";
  const int rc2 = std::system(bad.c_str());
  ASSERT_TRUE(WIFEXITED(rc2));
  EXPECT_EQ(WEXITSTATUS(rc2), 2);
}

}  // namespace
}  // namespace dpfed
