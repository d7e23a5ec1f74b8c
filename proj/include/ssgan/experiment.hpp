#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ssgan/config.hpp"
#include "ssgan/data.hpp"
#include "ssgan/forgetting.hpp"
#include "ssgan/metrics.hpp"
#include "ssgan/plot.hpp"
#include "ssgan/probes.hpp"
#include "ssgan/trainer.hpp"

namespace ssgan::experiment {

inline constexpr const char* kDataRootEnv = "SSGAN_DATA_ROOT";
inline constexpr const char* kRunRootEnv = "SSGAN_RUN_ROOT";

// paths.data_root, else $SSGAN_DATA_ROOT, else ./data.
std::filesystem::path data_root(const SsGANConfig& cfg);
// $SSGAN_RUN_ROOT, else ./runs.
std::filesystem::path run_root();
// paths.run_dir, else <run root>/<variant>-s<seed>-<config hash>.
std::filesystem::path run_dir(const SsGANConfig& cfg);

struct Splits {
  data::Dataset train;
  data::Dataset test;
};

// CIFAR-10 from the data root, or the procedural shapes at arch.image_size.
Splits load_splits(const SsGANConfig& cfg);
Splits shapes_splits(const DatasetSpec& spec, int64_t image_size);

using LogFn = std::function<void(const std::string&)>;

// Frozen extractor trained on the training split, cached under
// <run root>/extractors keyed by dataset content and extractor settings.
metrics::FeatureExtractor cached_extractor(const SsGANConfig& cfg, const data::Dataset& train,
                                           const LogFn& log = {});
std::filesystem::path extractor_cache_path(const SsGANConfig& cfg, const data::Dataset& train);

// Forgetting experiment settings together with their data source.
struct ForgettingSpec {
  DatasetSpec dataset{"shapes", 20000, 5000, 10, 1234};
  int64_t image_size = 32;
  std::string data_root;
  forgetting::ForgettingConfig run;
};
nlohmann::json to_json(const ForgettingSpec& spec);
ForgettingSpec forgetting_spec_from_json(const nlohmann::json& j);  // unknown keys rejected

nlohmann::json to_json(const probes::ProbeConfig& cfg);
probes::ProbeConfig probe_config_from_json(const nlohmann::json& j);  // unknown keys rejected

// Figure layouts.
plot::Panel fid_panel(const std::vector<std::pair<std::string, std::vector<std::pair<int64_t, double>>>>& curves,
                      const std::string& title = "FID");
std::vector<plot::Panel> forgetting_panels(const std::vector<forgetting::AccuracyTrace>& traces);
std::vector<plot::Panel> probe_panels(const std::vector<probes::ProbeRow>& rows);
std::vector<plot::Panel> alpha_panels(const std::vector<trainer::RunRecord>& runs);

}  // namespace ssgan::experiment
