#include "ssgan/config.hpp"

#include <fstream>

#include "ssgan/hash.hpp"

namespace ssgan {

using nlohmann::json;

ModelConfig SsGANConfig::model_config(bool labeled_dataset) const {
  ModelConfig m;
  m.variant = variant;
  m.regularizer = regularizer;
  m.arch = arch;
  m.labeled_dataset = labeled_dataset;
  m.seed = seed;
  return m;
}

void SsGANConfig::validate() const {
  weights.validate();
  if (adam.lr <= 0) throw ConfigError("adam.lr must be positive");
  if (adam.beta1 < 0 || adam.beta1 >= 1 || adam.beta2 < 0 || adam.beta2 >= 1)
    throw ConfigError("adam betas must lie in [0,1)");
  if (disc_iters < 1) throw ConfigError("disc_iters must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2 (batch statistics)");
  if (uses_rotation(variant) && batch_size % 4 != 0)
    throw ConfigError("batch_size must be divisible by 4 for variant " + to_string(variant));
  if (total_steps < 0) throw ConfigError("total_steps must be >= 0");
  if (dataset.name != "cifar10" && dataset.name != "shapes")
    throw ConfigError("dataset.name must be cifar10 or shapes, got '" + dataset.name + "'");
  if (eval.interval < 0 || eval.sample_interval < 0 || eval.checkpoint_interval < 0 || eval.log_interval < 1)
    throw ConfigError("eval intervals must be nonnegative (log_interval >= 1)");
  if (eval.interval > 0 && eval.fid_samples < 2) throw ConfigError("eval.fid_samples must be >= 2");
  if (regularizer == Regularizer::GradientPenalty && weights.gp_lambda <= 0)
    throw ConfigError("regularizer gradient_penalty needs weights.gp_lambda > 0");
  models::validate(model_config(true));
}

json to_json(const SsGANConfig& c) {
  return json{
      {"variant", to_string(c.variant)},
      {"regularizer", to_string(c.regularizer)},
      {"loss", losses::to_string(c.loss)},
      {"weights", {{"alpha", c.weights.alpha}, {"beta", c.weights.beta}, {"gp_lambda", c.weights.gp_lambda}}},
      {"adam", {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
      {"disc_iters", c.disc_iters},
      {"batch_size", c.batch_size},
      {"total_steps", c.total_steps},
      {"seed", c.seed},
      {"arch",
       {{"image_size", c.arch.image_size},
        {"channels", c.arch.channels},
        {"z_dim", c.arch.z_dim},
        {"g_width", c.arch.g_width},
        {"d_width", c.arch.d_width},
        {"sbn_hidden", c.arch.sbn_hidden},
        {"num_classes", c.arch.num_classes}}},
      {"dataset",
       {{"name", c.dataset.name},
        {"shapes_train", c.dataset.shapes_train},
        {"shapes_test", c.dataset.shapes_test},
        {"shapes_classes", c.dataset.shapes_classes},
        {"shapes_seed", c.dataset.shapes_seed}}},
      {"eval",
       {{"interval", c.eval.interval},
        {"fid_samples", c.eval.fid_samples},
        {"sample_interval", c.eval.sample_interval},
        {"sample_grid", c.eval.sample_grid},
        {"checkpoint_interval", c.eval.checkpoint_interval},
        {"log_interval", c.eval.log_interval}}},
      {"extractor",
       {{"width", c.extractor.width},
        {"embed_dim", c.extractor.embed_dim},
        {"epochs", c.extractor.epochs},
        {"batch_size", c.extractor.batch_size},
        {"lr", c.extractor.lr}}},
      {"paths", {{"data_root", c.paths.data_root}, {"run_dir", c.paths.run_dir}}},
  };
}

void merge_strict(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError("config" + (path.empty() ? "" : " key '" + path + "'") + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    auto it = base.find(key);
    if (it == base.end()) throw ConfigError("unknown config key '" + where + "'");
    if (it->is_object())
      merge_strict(*it, value, where);
    else if (value.is_object() || value.is_array())
      throw ConfigError("config key '" + where + "' expects a scalar");
    else
      *it = value;
  }
}

namespace {

template <typename T>
T field(const json& j, const char* section, const char* key) {
  const json& node = section ? j.at(section).at(key) : j.at(key);
  try {
    return node.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + (section ? std::string(section) + "." : "") + key +
                      "' has the wrong type: " + node.dump());
  }
}

}  // namespace

SsGANConfig config_from_json(const json& patch) {
  json j = to_json(SsGANConfig{});
  merge_strict(j, patch, "");
  SsGANConfig c;
  c.variant = parse_variant(field<std::string>(j, nullptr, "variant"));
  c.regularizer = parse_regularizer(field<std::string>(j, nullptr, "regularizer"));
  c.loss = losses::parse_loss_family(field<std::string>(j, nullptr, "loss"));
  c.weights.alpha = field<double>(j, "weights", "alpha");
  c.weights.beta = field<double>(j, "weights", "beta");
  c.weights.gp_lambda = field<double>(j, "weights", "gp_lambda");
  c.adam.lr = field<double>(j, "adam", "lr");
  c.adam.beta1 = field<double>(j, "adam", "beta1");
  c.adam.beta2 = field<double>(j, "adam", "beta2");
  c.adam.eps = field<double>(j, "adam", "eps");
  c.disc_iters = field<int64_t>(j, nullptr, "disc_iters");
  c.batch_size = field<int64_t>(j, nullptr, "batch_size");
  c.total_steps = field<int64_t>(j, nullptr, "total_steps");
  c.seed = field<uint64_t>(j, nullptr, "seed");
  c.arch.image_size = field<int64_t>(j, "arch", "image_size");
  c.arch.channels = field<int64_t>(j, "arch", "channels");
  c.arch.z_dim = field<int64_t>(j, "arch", "z_dim");
  c.arch.g_width = field<int64_t>(j, "arch", "g_width");
  c.arch.d_width = field<int64_t>(j, "arch", "d_width");
  c.arch.sbn_hidden = field<int64_t>(j, "arch", "sbn_hidden");
  c.arch.num_classes = field<int64_t>(j, "arch", "num_classes");
  c.dataset.name = field<std::string>(j, "dataset", "name");
  c.dataset.shapes_train = field<int64_t>(j, "dataset", "shapes_train");
  c.dataset.shapes_test = field<int64_t>(j, "dataset", "shapes_test");
  c.dataset.shapes_classes = field<int>(j, "dataset", "shapes_classes");
  c.dataset.shapes_seed = field<uint64_t>(j, "dataset", "shapes_seed");
  c.eval.interval = field<int64_t>(j, "eval", "interval");
  c.eval.fid_samples = field<int64_t>(j, "eval", "fid_samples");
  c.eval.sample_interval = field<int64_t>(j, "eval", "sample_interval");
  c.eval.sample_grid = field<int64_t>(j, "eval", "sample_grid");
  c.eval.checkpoint_interval = field<int64_t>(j, "eval", "checkpoint_interval");
  c.eval.log_interval = field<int64_t>(j, "eval", "log_interval");
  c.extractor.width = field<int64_t>(j, "extractor", "width");
  c.extractor.embed_dim = field<int64_t>(j, "extractor", "embed_dim");
  c.extractor.epochs = field<int64_t>(j, "extractor", "epochs");
  c.extractor.batch_size = field<int64_t>(j, "extractor", "batch_size");
  c.extractor.lr = field<double>(j, "extractor", "lr");
  c.paths.data_root = field<std::string>(j, "paths", "data_root");
  c.paths.run_dir = field<std::string>(j, "paths", "run_dir");
  c.validate();
  return c;
}

SsGANConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' must look like key.path=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ConfigError("config key '" + key + "' is a section, not a value");
  *node = value;
}

SsGANConfig with_overrides(const SsGANConfig& cfg, const std::vector<std::string>& assignments) {
  json j = to_json(cfg);
  for (const auto& a : assignments) apply_override(j, a);
  return config_from_json(j);
}

std::string config_hash(const SsGANConfig& cfg) {
  json j = to_json(cfg);
  j.erase("paths");
  return sha256_hex(j.dump()).substr(0, 16);
}

}  // namespace ssgan
