#include "ssgan/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <set>

#include <unistd.h>

#include "ssgan/hash.hpp"
#include "ssgan/random.hpp"

namespace ssgan::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path env_or(const char* name, const char* fallback) {
  const char* v = std::getenv(name);
  return (v && *v) ? fs::path(v) : fs::path(fallback);
}

template <typename T>
T get(const json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type: " + j.at(key).dump());
  }
}

}  // namespace

fs::path data_root(const SsGANConfig& cfg) {
  return cfg.paths.data_root.empty() ? env_or(kDataRootEnv, "data") : fs::path(cfg.paths.data_root);
}

fs::path run_root() { return env_or(kRunRootEnv, "runs"); }

fs::path run_dir(const SsGANConfig& cfg) {
  if (!cfg.paths.run_dir.empty()) return cfg.paths.run_dir;
  return run_root() / (to_string(cfg.variant) + "-s" + std::to_string(cfg.seed) + "-" + config_hash(cfg));
}

Splits shapes_splits(const DatasetSpec& spec, int64_t image_size) {
  return {data::make_synthetic_shapes(spec.shapes_train, image_size, spec.shapes_seed, spec.shapes_classes,
                                      data::Split::Train),
          data::make_synthetic_shapes(spec.shapes_test, image_size, derive_seed(spec.shapes_seed, "test"),
                                      spec.shapes_classes, data::Split::Test)};
}

Splits load_splits(const SsGANConfig& cfg) {
  if (cfg.dataset.name == "shapes") return shapes_splits(cfg.dataset, cfg.arch.image_size);
  const fs::path root = data_root(cfg);
  try {
    return {data::load_cifar10(root, data::Split::Train), data::load_cifar10(root, data::Split::Test)};
  } catch (const data::DataError& e) {
    throw data::DataError(std::string(e.what()) + " (set " + kDataRootEnv +
                          " or paths.data_root to the directory holding the CIFAR-10 binary batches)");
  }
}

fs::path extractor_cache_path(const SsGANConfig& cfg, const data::Dataset& train) {
  const json key = {{"data", train.version}, {"extractor", to_json(cfg).at("extractor")}, {"seed", 0}};
  return run_root() / "extractors" / (sha256_hex(key.dump()).substr(0, 16) + ".ext");
}

metrics::FeatureExtractor cached_extractor(const SsGANConfig& cfg, const data::Dataset& train, const LogFn& log) {
  const fs::path path = extractor_cache_path(cfg, train);
  if (fs::exists(path)) {
    if (log) log("using cached extractor " + path.string());
    return metrics::FeatureExtractor::load(path);
  }
  metrics::ExtractorSpec spec;
  spec.image_size = train.images.dim(1);
  spec.channels = train.images.dim(3);
  spec.num_classes = train.num_classes;
  spec.width = cfg.extractor.width;
  spec.embed_dim = cfg.extractor.embed_dim;
  metrics::FeatureExtractor fx(spec);
  fx.fit(train, {cfg.extractor.epochs, cfg.extractor.batch_size, cfg.extractor.lr, 0},
         [&](int64_t epoch, double loss, double acc) {
           if (log)
             log("extractor epoch " + std::to_string(epoch) + " loss " + std::to_string(loss) + " accuracy " +
                 std::to_string(acc));
         });
  fx.freeze();
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp" + std::to_string(::getpid());
  fx.save(tmp);
  fs::rename(tmp, path);
  if (log) log("cached extractor at " + path.string());
  return fx;
}

json to_json(const ForgettingSpec& s) {
  const auto& r = s.run;
  return {{"dataset",
           {{"name", s.dataset.name},
            {"shapes_train", s.dataset.shapes_train},
            {"shapes_test", s.dataset.shapes_test},
            {"shapes_classes", s.dataset.shapes_classes},
            {"shapes_seed", s.dataset.shapes_seed}}},
          {"image_size", s.image_size},
          {"data_root", s.data_root},
          {"schedule",
           {{"num_classes", r.schedule.num_classes},
            {"steps_per_task", r.schedule.steps_per_task},
            {"cycles", r.schedule.cycles}}},
          {"batch_size", r.batch_size},
          {"width", r.width},
          {"lr", r.lr},
          {"beta", r.beta},
          {"eval_interval", r.eval_interval},
          {"eval_per_class", r.eval_per_class},
          {"return_window", r.return_window},
          {"seed", r.seed}};
}

ForgettingSpec forgetting_spec_from_json(const json& patch) {
  json j = to_json(ForgettingSpec{});
  merge_strict(j, patch);
  ForgettingSpec s;
  const json& d = j.at("dataset");
  s.dataset.name = get<std::string>(d, "name");
  s.dataset.shapes_train = get<int64_t>(d, "shapes_train");
  s.dataset.shapes_test = get<int64_t>(d, "shapes_test");
  s.dataset.shapes_classes = get<int>(d, "shapes_classes");
  s.dataset.shapes_seed = get<uint64_t>(d, "shapes_seed");
  if (s.dataset.name != "shapes" && s.dataset.name != "cifar10")
    throw ConfigError("config key 'dataset.name' must be cifar10 or shapes");
  s.image_size = get<int64_t>(j, "image_size");
  s.data_root = get<std::string>(j, "data_root");
  const json& sc = j.at("schedule");
  s.run.schedule.num_classes = get<int>(sc, "num_classes");
  s.run.schedule.steps_per_task = get<int64_t>(sc, "steps_per_task");
  s.run.schedule.cycles = get<int64_t>(sc, "cycles");
  s.run.batch_size = get<int64_t>(j, "batch_size");
  s.run.width = get<int64_t>(j, "width");
  s.run.lr = get<double>(j, "lr");
  s.run.beta = get<double>(j, "beta");
  s.run.eval_interval = get<int64_t>(j, "eval_interval");
  s.run.eval_per_class = get<int64_t>(j, "eval_per_class");
  s.run.return_window = get<int64_t>(j, "return_window");
  s.run.seed = get<uint64_t>(j, "seed");
  s.run.schedule.validate();
  return s;
}

json to_json(const probes::ProbeConfig& c) {
  return {{"target_dim", c.target_dim},       {"lr", c.lr},
          {"lr_candidates", c.lr_candidates}, {"momentum", c.momentum},
          {"batch_size", c.batch_size},       {"epochs", c.epochs},
          {"decay_every", c.decay_every},     {"decay_factor", c.decay_factor},
          {"validation_fraction", c.validation_fraction}, {"seed", c.seed}};
}

probes::ProbeConfig probe_config_from_json(const json& patch) {
  json j = to_json(probes::ProbeConfig{});
  // lr_candidates is the one list-valued key; it replaces the default wholesale.
  json rest = patch;
  if (rest.is_object() && rest.contains("lr_candidates")) {
    j["lr_candidates"] = rest["lr_candidates"];
    rest.erase("lr_candidates");
  }
  merge_strict(j, rest);
  probes::ProbeConfig c;
  c.target_dim = get<int64_t>(j, "target_dim");
  c.lr = get<double>(j, "lr");
  c.lr_candidates = get<std::vector<double>>(j, "lr_candidates");
  c.momentum = get<double>(j, "momentum");
  c.batch_size = get<int64_t>(j, "batch_size");
  c.epochs = get<int64_t>(j, "epochs");
  c.decay_every = get<int64_t>(j, "decay_every");
  c.decay_factor = get<double>(j, "decay_factor");
  c.validation_fraction = get<double>(j, "validation_fraction");
  c.seed = get<uint64_t>(j, "seed");
  return c;
}

plot::Panel fid_panel(const std::vector<std::pair<std::string, std::vector<std::pair<int64_t, double>>>>& curves,
                      const std::string& title) {
  plot::Panel p{title, "generator step", "FID", {}, {}, {}, std::nullopt};
  for (const auto& [label, curve] : curves) {
    plot::Series s{label, {}, {}, std::nullopt, curve.size() < 30};
    for (const auto& [step, v] : curve) {
      s.x.push_back(static_cast<double>(step));
      s.y.push_back(v);
    }
    p.series.push_back(std::move(s));
  }
  return p;
}

std::vector<plot::Panel> forgetting_panels(const std::vector<forgetting::AccuracyTrace>& traces) {
  std::vector<plot::Panel> panels;
  for (auto variant : {forgetting::ClassifierVariant::Vanilla, forgetting::ClassifierVariant::WithSelfSup}) {
    plot::Panel p{variant == forgetting::ClassifierVariant::Vanilla ? "vanilla classifier"
                                                                     : "classifier with rotation loss",
                  "iteration", "accuracy", {}, {}, {}, std::make_pair(0.3, 1.0)};
    for (const auto& t : traces) {
      if (t.variant != variant) continue;
      plot::Series s{"seed " + std::to_string(t.seed), {}, {}, std::nullopt, false};
      for (const auto& r : t.rows) {
        s.x.push_back(static_cast<double>(r.step));
        s.y.push_back(r.accuracy);
      }
      p.series.push_back(std::move(s));
      if (p.light_vlines.empty()) {
        for (auto v : t.switch_steps) p.light_vlines.push_back(static_cast<double>(v));
        for (auto v : t.cycle_steps) p.dashed_vlines.push_back(static_cast<double>(v));
      }
    }
    if (!p.series.empty()) panels.push_back(std::move(p));
  }
  return panels;
}

std::vector<plot::Panel> probe_panels(const std::vector<probes::ProbeRow>& rows) {
  std::map<std::string, std::map<std::string, std::vector<std::pair<int64_t, double>>>> by_variant;
  for (const auto& r : rows) by_variant[r.variant][r.block].emplace_back(r.step, r.top1_mean);
  std::vector<plot::Panel> panels;
  for (auto& [variant, blocks] : by_variant) {
    plot::Panel p{variant, "generator step", "top-1 accuracy", {}, {}, {}, std::nullopt};
    for (auto& [block, pts] : blocks) {
      std::sort(pts.begin(), pts.end());
      plot::Series s{block, {}, {}, std::nullopt, true};
      for (const auto& [step, v] : pts) {
        s.x.push_back(static_cast<double>(step));
        s.y.push_back(v);
      }
      p.series.push_back(std::move(s));
    }
    panels.push_back(std::move(p));
  }
  return panels;
}

std::vector<plot::Panel> alpha_panels(const std::vector<trainer::RunRecord>& runs) {
  std::map<double, std::vector<const trainer::RunRecord*>> by_alpha;
  for (const auto& r : runs) by_alpha[r.config.weights.alpha].push_back(&r);
  plot::Panel finals{"final FID by alpha", "alpha", "FID", {}, {}, {}, std::nullopt};
  plot::Series best{"best over seeds", {}, {}, std::nullopt, true};
  std::vector<std::pair<std::string, std::vector<std::pair<int64_t, double>>>> curves;
  for (const auto& [alpha, rs] : by_alpha) {
    std::vector<trainer::RunRecord> copies;
    for (const auto* r : rs) copies.push_back(*r);
    const auto summary = trainer::summarize_seeds(copies);
    if (summary.best_final_fid) {
      best.x.push_back(alpha);
      best.y.push_back(*summary.best_final_fid);
    }
    char label[32];
    std::snprintf(label, sizeof label, "alpha=%g", alpha);
    curves.emplace_back(label, summary.mean_curve);
  }
  finals.series.push_back(std::move(best));
  return {finals, fid_panel(curves, "FID during training")};
}

}  // namespace ssgan::experiment
