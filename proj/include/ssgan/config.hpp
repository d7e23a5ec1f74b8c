#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "ssgan/losses.hpp"
#include "ssgan/models.hpp"
#include "ssgan/optim.hpp"

namespace ssgan {

struct DatasetSpec {
  std::string name = "cifar10";  // cifar10 | shapes
  int64_t shapes_train = 20000;  // synthetic shapes only
  int64_t shapes_test = 5000;
  int shapes_classes = 10;
  uint64_t shapes_seed = 1234;
};

struct EvalSpec {
  int64_t interval = 1000;  // FID cadence in generator steps; 0 disables
  int64_t fid_samples = 5000;
  int64_t sample_interval = 1000;
  int64_t sample_grid = 64;
  int64_t checkpoint_interval = 1000;
  int64_t log_interval = 1;
};

struct ExtractorConfig {
  int64_t width = 32;
  int64_t embed_dim = 256;
  int64_t epochs = 8;
  int64_t batch_size = 128;
  double lr = 1e-3;
};

// Every hyperparameter of one training run. Round-trips through JSON; unknown
// keys are rejected with their dotted path.
struct PathsSpec {
  std::string data_root;  // empty: $SSGAN_DATA_ROOT
  std::string run_dir;    // empty: <run root>/<variant>-s<seed>-<hash>
};

struct SsGANConfig {
  Variant variant = Variant::SsGan;
  Regularizer regularizer = Regularizer::SpectralNorm;
  losses::LossFamily loss = losses::LossFamily::CrossEntropy;
  losses::LossWeights weights;
  optim::AdamConfig adam;
  int64_t disc_iters = 2;
  int64_t batch_size = 64;
  int64_t total_steps = 20000;
  uint64_t seed = 0;
  ArchSpec arch;
  DatasetSpec dataset;
  EvalSpec eval;
  ExtractorConfig extractor;
  PathsSpec paths;

  ModelConfig model_config(bool labeled_dataset) const;
  // Throws ConfigError on any inconsistent value.
  void validate() const;
};

nlohmann::json to_json(const SsGANConfig& cfg);
// Missing keys keep their defaults; unknown keys throw ConfigError.
SsGANConfig config_from_json(const nlohmann::json& j);
SsGANConfig load_config(const std::filesystem::path& path);

// "a.b.c=value"; the value is parsed as JSON when possible, else taken as a string.
// Overwrites scalars of `base` with those of `patch`; a key absent from
// `base` throws ConfigError naming its dotted path under `path`.
void merge_strict(nlohmann::json& base, const nlohmann::json& patch, const std::string& path = "");

void apply_override(nlohmann::json& j, const std::string& assignment);
SsGANConfig with_overrides(const SsGANConfig& cfg, const std::vector<std::string>& assignments);

// SHA-256 (first 16 hex digits) of the canonical JSON form without the
// paths section, so relocating a run keeps its identity.
std::string config_hash(const SsGANConfig& cfg);

}  // namespace ssgan
