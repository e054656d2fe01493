#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "needletrack/calibrate.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int status = -1;
  std::string out;
};

// Runs the CLI inside `dir`, capturing stdout; stderr is discarded.
CliRun run_cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" NEEDLETRACK_CLI "' " + args + " 2>/dev/null";
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("needletrack_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

const std::string kSmall = " --set dataset.n=30 --set train.epochs=2 --set bench.n_runs=10 --set bench.sides=[64]";

}  // namespace

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run_cli(dir_, "").status, 1);
  EXPECT_EQ(run_cli(dir_, "frobnicate").status, 1);
  EXPECT_EQ(run_cli(dir_, "train --no-such-flag").status, 1);
  EXPECT_EQ(run_cli(dir_, "predict").status, 1);  // --image is required
  EXPECT_EQ(run_cli(dir_, "--help").status, 0);
}

TEST_F(Cli, ConfigAndDataErrorsExitTwo) {
  EXPECT_EQ(run_cli(dir_, "generate --set train.epohcs=3").status, 2);
  EXPECT_EQ(run_cli(dir_, "generate --set optics.image_side=72").status, 2);
  EXPECT_EQ(run_cli(dir_, "train").status, 2);  // no dataset yet
  std::ofstream(dir_ / "bad.json") << "{\"train\": {\"epochs\": 1, \"typo\": 2}}";
  EXPECT_EQ(run_cli(dir_, "generate --config bad.json").status, 2);
}

TEST_F(Cli, GenerateIsDeterministic) {
  ASSERT_EQ(run_cli(dir_, "generate --set dataset.n=12 --set seed=7 --set paths.dataset_dir=a").status, 0);
  ASSERT_EQ(run_cli(dir_, "generate --set dataset.n=12 --set seed=7 --set paths.dataset_dir=b").status, 0);
  EXPECT_EQ(slurp(dir_ / "a" / "manifest.json"), slurp(dir_ / "b" / "manifest.json"));
  EXPECT_EQ(slurp(dir_ / "a" / "images" / "000011.png"), slurp(dir_ / "b" / "images" / "000011.png"));
  const auto manifest = nlohmann::json::parse(slurp(dir_ / "a" / "manifest.json"));
  EXPECT_EQ(manifest.at("count"), 12);
}

TEST_F(Cli, FullPipeline) {
  ASSERT_EQ(run_cli(dir_, "generate" + kSmall).status, 0);
  ASSERT_EQ(run_cli(dir_, "train" + kSmall).status, 0);
  EXPECT_TRUE(fs::exists(dir_ / "model.ntwt"));
  EXPECT_TRUE(fs::exists(dir_ / "model.ntwt.json"));
  const std::string csv = slurp(dir_ / "loss.csv");
  EXPECT_EQ(csv.rfind("epoch,train_mse\n1,", 0), 0u) << csv;

  const CliRun eval = run_cli(dir_, "eval" + kSmall);
  ASSERT_EQ(eval.status, 0);
  EXPECT_NE(eval.out.find("L2-Norm"), std::string::npos);
  const auto metrics = nlohmann::json::parse(slurp(dir_ / "metrics.json"));
  EXPECT_EQ(metrics.at("n_test"), 6);

  const CliRun pred = run_cli(dir_, "predict" + kSmall + " --image data/images/000000.png");
  ASSERT_EQ(pred.status, 0);
  double x, y, z;
  std::istringstream in(pred.out);
  EXPECT_TRUE(in >> x >> y >> z) << pred.out;

  const CliRun bench = run_cli(dir_, "bench" + kSmall);
  ASSERT_EQ(bench.status, 0);
  EXPECT_NE(bench.out.find("20 ms"), std::string::npos);
  const auto report = nlohmann::json::parse(slurp(dir_ / "bench.json"));
  EXPECT_EQ(report.at("runs").size(), 1u);

  // Evaluating against a different normalization than the model was trained with.
  EXPECT_EQ(run_cli(dir_, "eval" + kSmall + " --set normalization.z.max=7").status, 2);
}

TEST_F(Cli, Calibrate) {
  std::vector<needletrack::Pose> poses;
  const Eigen::Vector3d tip(0.5, 0.0, 10.0), pivot(1.0, 2.0, 3.0);
  for (int k = 0; k < 8; ++k) {
    needletrack::Pose p;
    p.rotation = (Eigen::AngleAxisd(0.2 * k, Eigen::Vector3d::UnitX()) *
                  Eigen::AngleAxisd(0.15 * k * k, Eigen::Vector3d::UnitY()))
                     .toRotationMatrix();
    p.translation = pivot - p.rotation * tip;
    poses.push_back(p);
  }
  needletrack::write_pose_file(dir_ / "poses.json", poses);
  const CliRun r = run_cli(dir_, "calibrate --poses poses.json");
  ASSERT_EQ(r.status, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(j.at("tip_offset_cm")[2].get<double>(), 10.0, 1e-9);
  EXPECT_NEAR(j.at("pivot_point_cm")[1].get<double>(), 2.0, 1e-9);

  std::ofstream(dir_ / "bad.json") << "[{\"rotation\": [1,0,0,0,1,0,0,0,1], \"translation\": [0,0,0], \"unit\": \"mm\"}]";
  EXPECT_EQ(run_cli(dir_, "calibrate --poses bad.json").status, 2);
}

TEST_F(Cli, PublishedSplitSize) {
  const std::string s = " --set dataset.n=606 --set train.epochs=1";
  ASSERT_EQ(run_cli(dir_, "generate" + s).status, 0);
  ASSERT_EQ(run_cli(dir_, "train" + s).status, 0);
  ASSERT_EQ(run_cli(dir_, "eval" + s).status, 0);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir_ / "metrics.json")).at("n_test"), 121);
}
