#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sys/wait.h>

#include "futuregan/fileio.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(FUTUREGAN_CLI) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (size_t n = fread(buf, 1, sizeof buf, pipe)) r.output.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  static fs::path root() { return fs::temp_directory_path() / "futuregan_test_cli"; }

  static void SetUpTestSuite() {
    fs::remove_all(root());
    fs::create_directories(root());
    const auto gen = run("dataset gen --videos 4 --length 12 --canvas 32 --speed-min 1 --speed-max 3 --seed 3 "
                         "--out-dir " + (root() / "data").string());
    ASSERT_EQ(gen.code, 0) << gen.output;
    const auto train = run("train --dataset " + dataset().string() + " --out-dir " + run_dir().string() +
                           " --final-resolution 16 --base-maps 8 --t-in 3 --t-out 3 --batch-size 2 --epochs 1,1,1 "
                           "--checkpoint-every 0 --seed 2");
    ASSERT_EQ(train.code, 0) << train.output;
  }

  static void TearDownTestSuite() { fs::remove_all(root()); }

  static fs::path dataset() { return root() / "data" / "moving_mnist.fgv"; }
  static fs::path run_dir() { return root() / "run"; }

  static fs::path final_checkpoint() {
    fs::path best;
    for (const auto& e : fs::directory_iterator(run_dir() / "checkpoints"))
      if (best.empty() || e.path().filename() > best.filename()) best = e.path();
    return best;
  }
};

}  // namespace

TEST_F(Cli, DatasetGenerationIsDeterministic) {
  const auto a = run("dataset gen --videos 3 --length 8 --seed 11 --out-dir " + (root() / "g1").string());
  const auto b = run("dataset gen --videos 3 --length 8 --seed 11 --out-dir " + (root() / "g2").string());
  ASSERT_EQ(a.code, 0) << a.output;
  ASSERT_EQ(b.code, 0) << b.output;
  EXPECT_EQ(futuregan::fileio::read_file(root() / "g1" / "moving_mnist.fgv"),
            futuregan::fileio::read_file(root() / "g2" / "moving_mnist.fgv"));
  const std::regex sum("checksum ([0-9a-f]+)");
  std::smatch ma, mb;
  ASSERT_TRUE(std::regex_search(a.output, ma, sum));
  ASSERT_TRUE(std::regex_search(b.output, mb, sum));
  EXPECT_EQ(ma[1], mb[1]);
  EXPECT_TRUE(fs::exists(root() / "g1" / "run_manifest.json"));
}

TEST_F(Cli, InspectReportsSequenceCount) {
  const auto r = run("dataset inspect --dataset " + dataset().string() + " --t-in 3 --t-out 3");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto j = nlohmann::json::parse(r.output);
  EXPECT_EQ(j["videos"], 4);
  EXPECT_EQ(j["sequences"], 8);
  EXPECT_EQ(j["resolution"], 32);
}

TEST_F(Cli, UsageAndIoErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("train --no-such-flag").code, 2);
  EXPECT_EQ(run("dataset inspect --dataset " + (root() / "missing.fgv").string()).code, 2);
  // A regular file cannot become a directory.
  const auto blocker = root() / "blocker";
  std::ofstream(blocker) << "x";
  EXPECT_EQ(run("dataset gen --videos 1 --length 4 --out-dir " + (blocker / "sub").string()).code, 2);
  EXPECT_EQ(run("train --dataset " + dataset().string() + " --out-dir " + (root() / "bad").string() +
                " --final-resolution 16 --no-such-key-either")
                .code,
            2);
}

TEST_F(Cli, TrainingWritesCheckpointsLogAndManifest) {
  size_t checkpoints = 0;
  for (const auto& e : fs::directory_iterator(run_dir() / "checkpoints")) checkpoints += e.is_regular_file();
  EXPECT_GE(checkpoints, 3u);
  EXPECT_TRUE(fs::exists(run_dir() / "train_log.jsonl"));
  EXPECT_TRUE(fs::exists(run_dir() / "config.snapshot"));
  const auto manifest = nlohmann::json::parse(futuregan::fileio::read_file(run_dir() / "run_manifest.json"));
  EXPECT_TRUE(manifest.contains("artifacts"));
  const auto log = futuregan::fileio::read_file(run_dir() / "train_log.jsonl");
  EXPECT_NE(log.find("\"grow\""), std::string::npos);
}

TEST_F(Cli, ResumeWithConflictingConfigExitsThree) {
  const auto r = run("train --dataset " + dataset().string() + " --out-dir " + run_dir().string() +
                     " --resume latest --seed 99");
  EXPECT_EQ(r.code, 3) << r.output;
  EXPECT_NE(r.output.find("train.seed"), std::string::npos) << r.output;
  // Resuming a finished run with no changes is fine.
  const auto ok = run("train --dataset " + dataset().string() + " --out-dir " + run_dir().string() + " --resume latest");
  EXPECT_EQ(ok.code, 0) << ok.output;
}

TEST_F(Cli, PredictWritesFramesGifAndStrip) {
  for (int steps : {6, 30}) {
    const auto out = root() / ("pred" + std::to_string(steps));
    const auto r = run("predict --checkpoint " + final_checkpoint().string() + " --input " + dataset().string() +
                       " --steps " + std::to_string(steps) + " --out-dir " + out.string());
    ASSERT_EQ(r.code, 0) << r.output;
    int frames = 0;
    for (const auto& e : fs::directory_iterator(out)) frames += e.path().filename().string().rfind("frame_", 0) == 0;
    EXPECT_EQ(frames, steps);
    EXPECT_TRUE(fs::exists(out / "prediction.gif"));
    EXPECT_TRUE(fs::exists(out / "strip.png"));
  }
}

TEST_F(Cli, EvaluateWritesPlotsAndReport) {
  const auto out = root() / "eval";
  const auto r = run("evaluate --checkpoint " + final_checkpoint().string() + " --dataset " + dataset().string() +
                     " --baseline copylast --flow 1 --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  for (const char* f : {"mse.png", "psnr.png", "ssim.png", "report.json", "report.csv", "flow_truth_001.png"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  const auto report = nlohmann::json::parse(futuregan::fileio::read_file(out / "report.json"));
  ASSERT_TRUE(report.contains("model"));
  ASSERT_TRUE(report.contains("copylast"));
  EXPECT_EQ(report["model"]["per_frame"].size(), 3u);
  EXPECT_EQ(report["copylast"]["metadata"]["samples"], 8);
}

TEST_F(Cli, EvaluateOnEmptySplitWritesNothing) {
  const auto data = root() / "short";
  ASSERT_EQ(run("dataset gen --videos 2 --length 4 --out-dir " + data.string()).code, 0);
  const auto out = root() / "eval_empty";
  const auto r = run("evaluate --baseline copylast --t-in 3 --t-out 3 --dataset " +
                     (data / "moving_mnist.fgv").string() + " --out " + out.string());
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_FALSE(fs::exists(out / "report.json"));
}
