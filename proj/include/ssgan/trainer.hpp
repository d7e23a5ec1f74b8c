#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssgan/checkpoint.hpp"
#include "ssgan/config.hpp"
#include "ssgan/data.hpp"
#include "ssgan/metrics.hpp"
#include "ssgan/models.hpp"
#include "ssgan/optim.hpp"

namespace ssgan::trainer {

// A non-finite loss or parameter. `diagnostics` describes the failing step.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, nlohmann::json diagnostics)
      : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}
  const nlohmann::json& diagnostics() const { return diagnostics_; }

 private:
  nlohmann::json diagnostics_;
};

class RunDirectoryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Values of the last discriminator update and of the generator update.
struct StepMetrics {
  double d_loss = 0, d_source = 0, d_rotation = 0, d_penalty = 0;
  double g_loss = 0, g_source = 0, g_rotation = 0;
  double real_logit = 0, fake_logit = 0;
  double rot_acc_real = 0, rot_acc_fake = 0;
  int64_t d_updates = 0;
  bool generator_updated = false;

  // Named values that apply to the variant, in a fixed order.
  std::vector<std::pair<std::string, double>> items(Variant v) const;
};

// Everything that determines the continuation of a run. Randomness is
// derived from (seed, step) rather than carried as generator state.
struct TrainState {
  explicit TrainState(const SsGANConfig& cfg, bool labeled_dataset);

  SsGANConfig config;
  bool labeled = false;
  int64_t step = 0;  // generator updates so far
  models::ModelPair<float> models;
  optim::Adam<float> g_opt, d_opt;
  int64_t data_epoch = 0, data_position = 0;

  checkpoint::Archive save() const;
  // Throws CheckpointError when the archive belongs to another configuration.
  void load(const checkpoint::Archive& archive);
};

// One generator step: reals.size() must equal disc_iters. Each discriminator
// update uses its own real batch and a fresh fake batch.
StepMetrics train_step(TrainState& state, const std::vector<data::Batch>& reals);

struct FidReference {
  const metrics::FeatureExtractor* extractor = nullptr;  // frozen
  metrics::GaussianStats stats;
  int64_t n_real = 0;

  static FidReference from_dataset(const metrics::FeatureExtractor& extractor, const data::Dataset& eval_split);
};

// Fake images for evaluation; labels drawn uniformly when the generator is conditional.
TensorF generate(const TrainState& state, int64_t n, uint64_t seed);

struct MetricRow {
  int64_t step = 0;
  std::string metric;
  double value = 0;

  bool operator==(const MetricRow&) const = default;
};

enum class RunStatus { Completed, Diverged, Aborted };
std::string to_string(RunStatus s);

struct RunRecord {
  SsGANConfig config;
  std::string config_hash;
  std::filesystem::path run_dir;
  RunStatus status = RunStatus::Completed;
  int64_t final_step = 0;
  std::vector<MetricRow> metrics;
  std::vector<std::filesystem::path> checkpoints;
  std::optional<double> final_fid;
  double wall_seconds = 0;

  std::vector<std::pair<int64_t, double>> curve(const std::string& metric) const;
};

struct RunOptions {
  std::filesystem::path run_dir;
  const FidReference* fid = nullptr;  // null disables FID evaluation
  bool resume = false;
  std::ostream* log = nullptr;
  // Stops after this generator step (for interruption tests); the run resumes later.
  std::optional<int64_t> stop_after;
};

// Divergence: FID above 10x the initial value, or non-finite, on 3
// consecutive evaluations.
inline constexpr double kDivergenceFactor = 10.0;
inline constexpr int kDivergencePatience = 3;

// The first finite FID is the baseline.
struct DivergenceMonitor {
  std::optional<double> initial_fid;
  std::optional<double> last_fid;
  int bad_evals = 0;

  // Returns true once the run counts as diverged.
  bool record(double fid);
  nlohmann::json to_json() const;
  static DivergenceMonitor from_json(const nlohmann::json& j);
};

RunRecord train(const SsGANConfig& config, const data::Dataset& dataset, const RunOptions& options);

std::vector<MetricRow> read_metrics(const std::filesystem::path& path);
// Latest checkpoints/step_*.ckpt, if any.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& run_dir);
std::filesystem::path checkpoint_path(const std::filesystem::path& run_dir, int64_t step);
RunRecord read_run_record(const std::filesystem::path& run_dir);

// ---- sweeps ----

struct SweepCell {
  std::string key;  // e.g. "lambda=1,beta1=0,beta2=0.9,disc_iters=1"
  std::vector<std::string> overrides;
};

// gp: lambda in {1, 10} x three Adam settings; sn: three Adam settings;
// alpha: alpha in {0.2, 0.5, 1} with beta = 1.
std::vector<SweepCell> sweep_grid(const std::string& name);
// Variants a grid runs: alpha runs ssgan only, the others sn_gan and ssgan.
std::vector<Variant> sweep_variants(const std::string& name);

struct SweepRow {
  std::string cell;
  Variant variant = Variant::SsGan;
  uint64_t seed = 0;
  std::string config_hash;
  RunStatus status = RunStatus::Completed;
  std::optional<double> final_fid;
  std::string error;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  std::string csv() const;
};

struct SweepJob {
  SsGANConfig config;
  std::string cell;
};

// Runs one job and reports its outcome; exceptions become failed rows.
using SweepRunner = std::function<SweepRow(const SweepJob&)>;

std::vector<SweepJob> expand_sweep(const SsGANConfig& base, const std::vector<SweepCell>& grid,
                                   const std::vector<Variant>& variants, const std::vector<uint64_t>& seeds);
// Rows come back in job order. Up to `parallelism` runner calls are in flight
// at once, each on its own thread; a runner that trains in-process must
// therefore be used with parallelism 1, while one that launches a worker
// process may be used with any bound.
SweepTable sweep(const std::vector<SweepJob>& jobs, const SweepRunner& runner, int parallelism = 1);

// ---- multi-seed summaries ----

struct SeedSummary {
  std::optional<double> best_final_fid;  // min over seeds of the final FID
  uint64_t best_seed = 0;
  std::vector<std::pair<int64_t, double>> mean_curve;  // steps evaluated by every seed
};

SeedSummary summarize_seeds(const std::vector<RunRecord>& runs);

}  // namespace ssgan::trainer
