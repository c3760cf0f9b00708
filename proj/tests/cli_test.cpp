// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "protoadapt/cli.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "protoadapt/adapter.hpp"
#include "protoadapt/embedcache.hpp"
#include "protoadapt/pseudolabel.hpp"
#include "test_util.hpp"

namespace protoadapt {
namespace {

using nlohmann::json;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "protoadapt");
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// One synthetic train/test pair shared across the suite.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir();
    const std::string root = dir_->path().string();
    ASSERT_EQ(run_cli({"synth", "--out", root + "/train", "--classifier-out", root + "/text",
                       "--concentration", "0.48", "--text-angle", "0.9"})
                  .code,
              0);
    ASSERT_EQ(run_cli({"synth", "--out", root + "/test", "--split", "1", "--concentration",
                       "0.48", "--text-angle", "0.9"})
                  .code,
              0);
  }
  static void TearDownTestSuite() { delete dir_; }

  static std::string path(const std::string& name) { return (*dir_ / name).string(); }

  static testing::TempDir* dir_;
};
testing::TempDir* CliTest::dir_ = nullptr;

TEST(CliBasics, UnknownCommandAndNoArgs) {
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({}).code, 2);
  Outcome help = run_cli({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("pseudo-label"), std::string::npos);
}

TEST(CliBasics, HelpShowsDefaults) {
  Outcome train = run_cli({"train", "--help"});
  EXPECT_EQ(train.code, 0);
  for (const char* needle : {"--k", "16", "--tau", "0.01", "--eta", "5.5", "--epochs", "20",
                             "--batch-size", "256", "--lr", "0.001", "rn50", "vitb16", "--config"})
    EXPECT_NE(train.out.find(needle), std::string::npos) << needle;
  for (const char* cmd : {"validate", "pseudo-label", "prototypes", "predict", "eval", "ablate",
                          "sweep", "synth"}) {
    Outcome r = run_cli({cmd, "--help"});
    EXPECT_EQ(r.code, 0) << cmd;
    EXPECT_NE(r.out.find("--config"), std::string::npos) << cmd;
  }
}

TEST_F(CliTest, MissingClassifierIsInvalid) {
  Outcome r = run_cli({"pseudo-label", "--cache", path("train"), "--out", path("x.json")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--classifier"), std::string::npos) << r.err;
}

TEST_F(CliTest, PseudoLabelIsReproducible) {
  std::vector<std::string> args{"pseudo-label", "--cache", path("train"), "--classifier",
                                path("text"), "--k", "8"};
  auto a = args;
  a.insert(a.end(), {"--out", path("pl_a.json")});
  auto b = args;
  b.insert(b.end(), {"--out", path("pl_b.json")});
  ASSERT_EQ(run_cli(a).code, 0);
  ASSERT_EQ(run_cli(b).code, 0);
  EXPECT_EQ(slurp(path("pl_a.json")), slurp(path("pl_b.json")));
  PseudoLabelSet set = load_pseudo_labels(path("pl_a.json"));
  EXPECT_EQ(set.k, 8);
  EXPECT_LE(set.total_selected(), 80u);
  for (const auto& list : set.per_class) EXPECT_LE(list.size(), 8u);
}

TEST_F(CliTest, StagedCommandsMatchPipeline) {
  ASSERT_EQ(run_cli({"pseudo-label", "--cache", path("train"), "--classifier", path("text"),
                     "--out", path("staged/pl.json")})
                .code,
            0);
  ASSERT_EQ(run_cli({"prototypes", "--cache", path("train"), "--pseudolabels",
                     path("staged/pl.json"), "--out", path("staged/protos")})
                .code,
            0);
  ASSERT_EQ(run_cli({"train", "--cache", path("train"), "--classifier", path("text"),
                     "--pseudolabels", path("staged/pl.json"), "--prototypes",
                     path("staged/protos"), "--out", path("staged/adapter"), "--epochs", "3"})
                .code,
            0);
  ASSERT_EQ(run_cli({"train", "--pipeline", "--cache", path("train"), "--classifier",
                     path("text"), "--out", path("piped"), "--epochs", "3"})
                .code,
            0);
  EXPECT_EQ(slurp(path("staged/adapter/weights.f32")), slurp(path("piped/weights.f32")));
}

TEST_F(CliTest, PipelineIsFastAndDeterministic) {
  std::vector<std::string> base{"train", "--pipeline", "--cache", path("train"), "--classifier",
                                path("text"), "--seed", "5"};
  auto a = base;
  a.insert(a.end(), {"--out", path("run_a")});
  auto b = base;
  b.insert(b.end(), {"--out", path("run_b")});
  const auto start = std::chrono::steady_clock::now();
  Outcome r = run_cli(a);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_LT(seconds, 60.0);
  EXPECT_NE(r.out.find("final train accuracy"), std::string::npos);
  ASSERT_EQ(run_cli(b).code, 0);
  for (const char* f : {"pseudolabels.json", "prototypes/prototypes.f32", "weights.f32",
                        "adapter.json", "history.csv"})
    EXPECT_EQ(slurp(*dir_ / "run_a" / f), slurp(*dir_ / "run_b" / f)) << f;
  EXPECT_EQ(load_adapter(path("run_a")).trained_epochs, 20);
}

TEST_F(CliTest, ImagenetProfileAndExplicitEpochs) {
  std::vector<std::string> base{"train", "--pipeline", "--cache", path("train"), "--classifier",
                                path("text"), "--profile", "imagenet"};
  auto a = base;
  a.insert(a.end(), {"--out", path("inet")});
  ASSERT_EQ(run_cli(a).code, 0);
  EXPECT_EQ(load_adapter(path("inet")).trained_epochs, 30);
  auto b = base;
  b.insert(b.end(), {"--out", path("inet5"), "--epochs", "5"});
  ASSERT_EQ(run_cli(b).code, 0);
  EXPECT_EQ(load_adapter(path("inet5")).trained_epochs, 5);
}

TEST_F(CliTest, ConfigFilePrecedence) {
  payload::write_text(*dir_ / "cfg.json", R"({"epochs": 4, "eta": 3.0})");
  ASSERT_EQ(run_cli({"train", "--pipeline", "--cache", path("train"), "--classifier",
                     path("text"), "--config", path("cfg.json"), "--out", path("cfg_run")})
                .code,
            0);
  AdapterModel from_file = load_adapter(path("cfg_run"));
  EXPECT_EQ(from_file.trained_epochs, 4);
  EXPECT_DOUBLE_EQ(from_file.eta, 3.0);
  ASSERT_EQ(run_cli({"train", "--pipeline", "--cache", path("train"), "--classifier",
                     path("text"), "--config", path("cfg.json"), "--epochs", "2", "--out",
                     path("cfg_cli")})
                .code,
            0);
  EXPECT_EQ(load_adapter(path("cfg_cli")).trained_epochs, 2);

  payload::write_text(*dir_ / "bad.json", R"({"epochs": 4, "warp_factor": 9})");
  Outcome bad = run_cli({"train", "--pipeline", "--cache", path("train"), "--classifier",
                         path("text"), "--config", path("bad.json"), "--out", path("bad")});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("warp_factor"), std::string::npos) << bad.err;
}

TEST_F(CliTest, InvalidValuesRejected) {
  std::vector<std::string> base{"train", "--pipeline", "--cache", path("train"), "--classifier",
                                path("text"), "--out", path("nope")};
  for (std::vector<std::string> extra : {std::vector<std::string>{"--epochs", "0"},
                                         {"--tau", "-1"},
                                         {"--optimizer", "lbfgs"},
                                         {"--init", "zeros"}}) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    EXPECT_EQ(run_cli(args).code, 2) << extra[0];
  }
}

TEST_F(CliTest, EvalAndClassMismatch) {
  ASSERT_EQ(run_cli({"train", "--pipeline", "--cache", path("train"), "--classifier",
                     path("text"), "--out", path("ev")})
                .code,
            0);
  Outcome ok = run_cli({"eval", "--adapter", path("ev"), "--cache", path("test"), "--classifier",
                        path("text"), "--source-cache", path("train"), "--out", path("ev/report")});
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_NE(ok.out.find("top1"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(*dir_ / "ev/report/eval.json"));

  ASSERT_EQ(run_cli({"synth", "--out", path("other"), "--classes", "10", "--name", "other"}).code, 0);
  EmbeddingCache renamed = load_cache(path("other"));
  renamed.class_names[4] = "okapi";
  save_cache(renamed, path("renamed"));
  Outcome bad = run_cli({"eval", "--adapter", path("ev"), "--cache", path("renamed"),
                         "--classifier", path("text"), "--source-cache", path("train")});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("okapi"), std::string::npos) << bad.err;
}

TEST_F(CliTest, PredictWritesCsv) {
  ASSERT_EQ(run_cli({"train", "--pipeline", "--cache", path("train"), "--classifier",
                     path("text"), "--out", path("pr"), "--epochs", "2"})
                .code,
            0);
  ASSERT_EQ(run_cli({"predict", "--adapter", path("pr"), "--cache", path("test"), "--classifier",
                     path("text"), "--out", path("pr/pred.csv")})
                .code,
            0);
  std::istringstream csv(slurp(path("pr/pred.csv")));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "sample_id,prediction,class_name");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 1000);
}

TEST_F(CliTest, AblateAndSweepRowCounts) {
  Outcome ab = run_cli({"ablate", "--cache", path("train"), "--eval-cache", path("test"),
                        "--classifier", path("text"), "--out", path("abl"), "--epochs", "2",
                        "--jobs", "2"});
  ASSERT_EQ(ab.code, 0) << ab.err;
  json rows = json::parse(slurp(path("abl/ablation.json")));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0]["label"], "zero_shot");
  EXPECT_EQ(rows[4]["label"], "full");

  Outcome sw = run_cli({"sweep", "--cache", path("train"), "--eval-cache", path("test"),
                        "--classifier", path("text"), "--out", path("sw"), "--epochs", "2"});
  ASSERT_EQ(sw.code, 0) << sw.err;
  json sweep = json::parse(slurp(path("sw/sweep.json")));
  ASSERT_EQ(sweep.size(), 4u);
  EXPECT_EQ(sweep[3]["k"], 32);
  EXPECT_EQ(run_cli({"sweep", "--cache", path("train"), "--classifier", path("text"), "--out",
                     path("sw0"), "--k-values", "4,0"})
                .code,
            2);
}

TEST_F(CliTest, ValidateReportsViolations) {
  Outcome ok = run_cli({"validate", "--cache", path("train"), "--classifier", path("text")});
  EXPECT_EQ(ok.code, 0);
  EXPECT_NE(ok.out.find("OK"), std::string::npos);

  std::filesystem::copy(path("train"), path("corrupt"), std::filesystem::copy_options::recursive);
  std::string ids = slurp(path("corrupt/ids.txt"));
  // Repeat the first id in place of the second.
  const std::string first = ids.substr(0, ids.find('\n') + 1);
  ids = first + first + ids.substr(ids.find('\n', first.size()) + 1);
  payload::write_text(*dir_ / "corrupt/ids.txt", ids);
  Outcome bad = run_cli({"validate", "--cache", path("corrupt")});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.out.find("violation"), std::string::npos) << bad.out;

  EXPECT_EQ(run_cli({"validate", "--cache", path("does_not_exist")}).code, 1);
  EXPECT_EQ(run_cli({"validate"}).code, 2);
}

}  // namespace
}  // namespace protoadapt
