#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "omega/cli/app.hpp"

using namespace omega;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "omega");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

int run_binary(const std::string& args) {
  const std::string cmd = std::string(OMEGA_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("omega_cli_" + std::string(::testing::UnitTest::GetInstance()
                                                                         ->current_test_info()
                                                                         ->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream(root_ / "tiny.cfg") << "# tiny model\n"
                                         "model.l_patch = 8\nmodel.n_patches = 4\nmodel.d_model = 16\n"
                                         "model.n_layers = 2\nmodel.n_heads = 2\nmodel.d_ff = 32\n"
                                         "model.l_pred = 8  # horizon\n"
                                         "train.steps = 12\ntrain.batch_size = 8\ntrain.eval_every = 4\n"
                                         "eval.stride = 8\n";
    std::ofstream(root_ / "recipe.txt")
        << "sinusoid_mixture count=3 rate_hz=20 duration_s=20 amp1=0.5:1.5 freq1=0.2:2 phase1=0:6.28\n";
  }
  std::string p(const std::string& rel) const { return (root_ / rel).string(); }

  void make_corpus() {
    ASSERT_EQ(run_cli({"synth", "--out", p("corpus"), "--set", "corpus.recipe=" + p("recipe.txt")}).code, 0);
  }
  void make_checkpoint() {
    make_corpus();
    ASSERT_EQ(run_cli({"pretrain", "--config", p("tiny.cfg"), "--data", p("corpus"), "--out", p("pre")}).code, 0);
  }
  void write_series(const std::string& rel, std::size_t n) {
    std::ofstream f(root_ / rel);
    f.precision(17);
    f << "time_s,value\n";
    for (std::size_t i = 0; i < n; ++i) f << i * 0.5 << ',' << 3.0 + std::sin(0.2 * i) + 0.001 * i << '\n';
  }

  fs::path root_;
};

}  // namespace

TEST(RunConfig, ResolvedTextRoundTrips) {
  cli::RunConfig a;
  a.set("model.d_model", "64");
  a.set("train.lr", "0.0005");
  a.set("eval.task", "reconstruct");
  a.set("model.norm_kind", "layer");
  cli::RunConfig b;
  b.merge_text(a.to_text());
  EXPECT_EQ(b.to_text(), a.to_text());
  EXPECT_EQ(b.model.d_model, 64u);
  EXPECT_EQ(b.train.lr, 0.0005);
  EXPECT_EQ(b.eval.task, eval::Task::reconstruct);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  cli::RunConfig c;
  EXPECT_THROW(c.set("model.dmodel", "3"), ConfigError);
  EXPECT_THROW(c.set("train.steps", "-4"), ConfigError);
  EXPECT_THROW(c.set("train.lr", "fast"), ConfigError);
  EXPECT_THROW(c.merge_text("model.d_model 3\n"), ConfigError);
  try {
    c.merge_text("# ok\n\ntrain.steps = 5\nbogus = 1\n", "x.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("x.cfg:4"), std::string::npos) << e.what();
  }
  EXPECT_EQ(c.train.steps, 5u);
}

TEST(RunConfig, EveryDocumentedKeyIsEchoed) {
  const std::string text = cli::RunConfig{}.to_text();
  for (const char* key : {"model.l_patch", "model.norm_kind", "model.seed", "train.lr", "train.seed",
                          "eval.window", "eval.stride", "eval.task", "eval.preprocess",
                          "corpus.seed", "data.column", "runtime.workers"}) {
    EXPECT_NE(text.find(std::string(key) + " = "), std::string::npos) << key;
  }
}

TEST_F(CliTest, GradcheckPassesOnTinyConfig) {
  const Result r = run_cli({"gradcheck"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("max relative error"), std::string::npos);
  EXPECT_EQ(run_binary("gradcheck"), 0);
}

TEST_F(CliTest, UsageErrorsExitOne) {
  const Result r = run_cli({"eval", "--data", p("x.csv"), "--out", p("e")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--checkpoint"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(run_cli({"launch"}).code, 1);
  EXPECT_EQ(run_cli({"gradcheck", "--frobnicate"}).code, 1);
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_binary("eval --data x.csv"), 1);
  EXPECT_EQ(run_binary("nonsense"), 1);
}

TEST_F(CliTest, ConfigErrorsExitOneRuntimeErrorsExitTwo) {
  EXPECT_EQ(run_cli({"pretrain", "--set", "model.d_mdl=3", "--out", p("a")}).code, 1);
  EXPECT_EQ(run_cli({"pretrain", "--set", "model.n_heads=5", "--out", p("a")}).code, 1);
  std::ofstream(root_ / "bad.omg") << "garbage that is not a checkpoint";
  write_series("s.csv", 400);
  EXPECT_EQ(run_cli({"eval", "--checkpoint", p("bad.omg"), "--data", p("s.csv"), "--out", p("e")}).code, 2);
  EXPECT_EQ(run_cli({"eval", "--checkpoint", p("missing.omg"), "--data", p("s.csv"), "--out", p("e")}).code, 2);
}

TEST_F(CliTest, PretrainRejectsHeldOutKinds) {
  ASSERT_EQ(run_cli({"synth", "--held-out", "--out", p("held")}).code, 0);
  const Result r = run_cli({"pretrain", "--config", p("tiny.cfg"), "--data", p("held"), "--out", p("pre")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("held-out"), std::string::npos);
}

TEST_F(CliTest, RerunFromResolvedConfigIsBitwiseReproducible) {
  make_checkpoint();
  const std::string first = read_file(root_ / "pre" / "checkpoint.omg");
  ASSERT_FALSE(first.empty());
  const Result again = run_cli({"pretrain", "--config", p("pre/resolved.cfg"), "--data", p("corpus"),
                                "--out", p("again")});
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(read_file(root_ / "again" / "checkpoint.omg"), first);
  EXPECT_EQ(read_file(root_ / "again" / "loss_curve.csv"), read_file(root_ / "pre" / "loss_curve.csv"));
  EXPECT_EQ(read_file(root_ / "again" / "resolved.cfg"), read_file(root_ / "pre" / "resolved.cfg"));
  EXPECT_EQ(read_file(root_ / "pre" / "loss_curve.csv").rfind("step,total,forecast_mse,reconstruct_mse\n", 0), 0u);
}

TEST_F(CliTest, SeedFlagChangesEveryStream) {
  make_corpus();
  ASSERT_EQ(run_cli({"pretrain", "--config", p("tiny.cfg"), "--data", p("corpus"), "--out", p("s1"),
                     "--seed", "9"}).code, 0);
  const std::string cfg = read_file(root_ / "s1" / "resolved.cfg");
  EXPECT_NE(cfg.find("model.seed = 9"), std::string::npos);
  EXPECT_NE(cfg.find("train.seed = 9"), std::string::npos);
  EXPECT_NE(cfg.find("corpus.seed = 9"), std::string::npos);
}

TEST_F(CliTest, ForecastTraceHasContextAndHorizonRows) {
  make_checkpoint();
  write_series("s.csv", 100);
  const Result r = run_cli({"forecast", "--checkpoint", p("pre/checkpoint.omg"), "--input", p("s.csv"),
                            "--out", p("fc/trace.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(root_ / "fc" / "trace.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "offset,ground_truth,prediction");
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 32u + 8u);
  // Context rows carry the source values; forecast rows only predictions.
  const double v68 = 3.0 + std::sin(0.2 * 68) + 0.001 * 68;
  EXPECT_EQ(rows[0].rfind("68,", 0), 0u);
  EXPECT_NEAR(std::stod(rows[0].substr(3)), v68, 1e-12);
  EXPECT_EQ(rows[32].rfind("100,,", 0), 0u);
  const double pred = std::stod(rows[32].substr(5));
  EXPECT_GT(pred, 1.0);  // source units, not [0,1]
  const Result rc = run_cli({"reconstruct", "--checkpoint", p("pre/checkpoint.omg"), "--input",
                             p("s.csv"), "--out", p("rc/trace.csv")});
  EXPECT_EQ(rc.code, 0) << rc.err;
}

TEST_F(CliTest, EvalWritesReportsAndNothingOutsideOut) {
  make_checkpoint();
  write_series("s.csv", 300);
  std::set<fs::path> before;
  for (const auto& e : fs::recursive_directory_iterator(root_)) before.insert(e.path());
  const Result r = run_cli({"eval", "--checkpoint", p("pre/checkpoint.omg"), "--data", p("s.csv"),
                            "--out", p("ev"), "--stride", "4", "--emit-traces", "--workers", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& e : fs::recursive_directory_iterator(root_)) {
    if (!before.count(e.path())) {
      EXPECT_EQ(fs::relative(e.path(), root_).begin()->string(), "ev") << e.path();
    }
  }
  EXPECT_TRUE(fs::exists(root_ / "ev" / "s_windows.csv"));
  EXPECT_TRUE(fs::exists(root_ / "ev" / "s_traces"));
  const std::string summary = read_file(root_ / "ev" / "summary.csv");
  const std::size_t windows = (300 - 40) / 4 + 1;
  EXPECT_NE(summary.find("s,forecast,zero_shot," + std::to_string(windows) + ","), std::string::npos) << summary;
}

TEST_F(CliTest, FinetuneAndCompareRun) {
  make_checkpoint();
  write_series("target.csv", 800);
  const Result ft = run_cli({"finetune", "--config", p("tiny.cfg"), "--checkpoint", p("pre/checkpoint.omg"),
                             "--data", p("target.csv"), "--out", p("ft")});
  ASSERT_EQ(ft.code, 0) << ft.err;
  EXPECT_TRUE(fs::exists(root_ / "ft" / "checkpoint.omg"));
  EXPECT_NE(read_file(root_ / "ft" / "resolved.cfg").find("model.d_model = 16"), std::string::npos);
  const Result tt = run_cli({"target-train", "--config", p("tiny.cfg"), "--data", p("target.csv"),
                             "--out", p("tt")});
  ASSERT_EQ(tt.code, 0) << tt.err;
  const Result cmp = run_cli({"compare", "--config", p("tiny.cfg"), "--checkpoint", p("pre/checkpoint.omg"),
                              "--data", p("target.csv"), "--out", p("cmp")});
  ASSERT_EQ(cmp.code, 0) << cmp.err;
  for (const char* leg : {"zero_shot", "fine_tuned", "target_trained"}) {
    EXPECT_TRUE(fs::exists(root_ / "cmp" / (std::string(leg) + "_summary.csv"))) << leg;
  }
  EXPECT_NE(read_file(root_ / "cmp" / "summary.txt").find("% "), std::string::npos);
}

TEST_F(CliTest, LogLevelFromEnvironment) {
  const std::string cmd = "OMEGA_LOG=error " + std::string(OMEGA_CLI_PATH) + " synth --held-out --out " +
                          p("h") + " 2>" + p("err.txt") + " >/dev/null";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_EQ(read_file(root_ / "err.txt"), "");
  const std::string cmd2 = "OMEGA_LOG=info " + std::string(OMEGA_CLI_PATH) + " synth --held-out --out " +
                           p("h2") + " 2>" + p("err2.txt") + " >/dev/null";
  ASSERT_EQ(std::system(cmd2.c_str()), 0);
  EXPECT_NE(read_file(root_ / "err2.txt").find("[info]"), std::string::npos);
}
