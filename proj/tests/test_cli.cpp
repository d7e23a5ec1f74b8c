#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ssgan/image_io.hpp"
#include "ssgan/trainer.hpp"
#include "test_support.hpp"

namespace ssgan {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args, const fs::path& run_root) {
  const std::string cmd = "SSGAN_RUN_ROOT='" + run_root.string() + "' '" SSGAN_CLI "' " + args + " 2>&1";
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  while (size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    std::ofstream(dir_ / "tiny.json") << R"({
      "dataset": {"name": "shapes", "shapes_train": 256, "shapes_test": 128, "shapes_classes": 4},
      "arch": {"image_size": 8, "z_dim": 8, "g_width": 8, "d_width": 8, "sbn_hidden": 4, "num_classes": 4},
      "batch_size": 16, "total_steps": 4,
      "eval": {"interval": 2, "fid_samples": 32, "sample_interval": 2, "sample_grid": 16, "checkpoint_interval": 2},
      "extractor": {"width": 4, "embed_dim": 8, "epochs": 1, "batch_size": 64}
    })";
  }
  std::string config() const { return "--config '" + (dir_ / "tiny.json").string() + "'"; }
  TempDir dir_;
};

TEST_F(Cli, TrainWritesARunAndReflectsOverrides) {
  const auto r = run("train " + config() + " --seed 2 --set weights.alpha=0.5 --quiet --plot", dir_.path());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("final_fid"), std::string::npos);
  fs::path run_dir;
  for (const auto& e : fs::directory_iterator(dir_.path()))
    if (e.path().filename().string().rfind("ssgan-s2-", 0) == 0) run_dir = e.path();
  ASSERT_FALSE(run_dir.empty()) << r.out;
  const auto cfg = load_config(run_dir / "config.json");
  EXPECT_DOUBLE_EQ(cfg.weights.alpha, 0.5);
  EXPECT_EQ(cfg.seed, 2u);
  EXPECT_TRUE(fs::exists(run_dir / "fid.png"));
  EXPECT_EQ(trainer::read_run_record(run_dir).final_step, 4);

  const auto again = run("train " + config() + " --seed 2 --set weights.alpha=0.5 --quiet", dir_.path());
  EXPECT_NE(again.code, 0);
  EXPECT_NE(again.out.find("already holds a run"), std::string::npos);
  const auto resumed = run("train " + config() + " --seed 2 --set weights.alpha=0.5 --quiet --resume", dir_.path());
  EXPECT_EQ(resumed.code, 0) << resumed.out;
  EXPECT_EQ(load_config(run_dir / "config.json").weights.alpha, 0.5);
}

TEST_F(Cli, UnknownConfigKeyIsAUsageErrorNamingThePath) {
  const auto r = run("train " + config() + " --set arch.depth=3", dir_.path());
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("arch.depth"), std::string::npos);
}

TEST_F(Cli, MultiSeedTableCarriesHashAndSeedColumns) {
  const auto r = run("train " + config() + " --variant sn_gan,ssgan --seeds 0,1 --quiet --out '" +
                         (dir_ / "table").string() + "'",
                     dir_.path());
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream in(dir_ / "table" / "best_of_seeds.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "variant,seeds,seed_list,best_seed,best_final_fid,config_hash");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 2);
}

TEST_F(Cli, SweepWorkersProduceTheGridTable) {
  const auto r = run("sweep " + config() + " --grid sn --variant ssgan --jobs 2 --quiet --out '" +
                         (dir_ / "sweep").string() + "'",
                     dir_.path());
  ASSERT_EQ(r.code, 0) << r.out;
  std::ifstream in(dir_ / "sweep" / "sweep.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "cell,variant,seed,config_hash,status,final_fid,error");
  int rows = 0;
  for (std::string line; std::getline(in, line);) {
    ++rows;
    EXPECT_NE(line.find("completed"), std::string::npos) << line;
  }
  EXPECT_EQ(rows, 3);
  // A rerun reuses finished cells.
  EXPECT_EQ(run("sweep " + config() + " --grid sn --variant ssgan --quiet --out '" + (dir_ / "sweep").string() + "'",
                dir_.path())
                .code,
            0);
}

TEST_F(Cli, FidReportsScalarAndCounts) {
  ASSERT_EQ(run("train " + config() + " --quiet --set paths.run_dir='" + (dir_ / "r").string() + "'", dir_.path()).code,
            0);
  const auto r = run("fid " + config() + " --real test_split --fake '" + (dir_ / "r").string() + "' --n 40 --quiet",
                     dir_.path());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("fid,n_real,n_fake"), std::string::npos);
  EXPECT_NE(r.out.find(",128,40,"), std::string::npos) << r.out;
  const auto pngs = run("fid " + config() + " --fake '" + (dir_ / "r" / "samples").string() + "' --quiet", dir_.path());
  ASSERT_EQ(pngs.code, 0) << pngs.out;
  EXPECT_NE(pngs.out.find(",128,48,"), std::string::npos) << pngs.out;  // three 16-image grids
  EXPECT_NE(run("fid " + config() + " --fake '" + (dir_ / "missing").string() + "'", dir_.path()).code, 0);
}

TEST_F(Cli, ForgettingEmitsTraceSummaryAndTwoPanelPlot) {
  const auto r = run(
      "forgetting --set image_size=8 --set width=4 --set schedule.num_classes=3 --set dataset.shapes_classes=3 "
      "--set schedule.steps_per_task=10 --set eval_interval=5 --set return_window=10 --set eval_per_class=10 "
      "--set dataset.shapes_train=300 --set dataset.shapes_test=150 --seeds 0,1 --plot --quiet --out '" +
          (dir_ / "f").string() + "'",
      dir_.path());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(dir_ / "f" / "trace.csv"));
  const auto img = image::read_png(dir_ / "f" / "forgetting.png");
  EXPECT_GT(img.width, img.height * 2);
  std::ifstream in(dir_ / "f" / "summary.csv");
  int rows = -1;
  for (std::string line; std::getline(in, line);) ++rows;
  EXPECT_EQ(rows, 4);
  EXPECT_EQ(run("plot --kind forgetting '" + (dir_ / "f" / "trace.csv").string() + "' --out '" +
                    (dir_ / "again.png").string() + "'",
                dir_.path())
                .code,
            0);
}

}  // namespace
}  // namespace ssgan
