#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "ssgan/experiment.hpp"
#include "ssgan/hash.hpp"
#include "ssgan/image_io.hpp"
#include "ssgan/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ssgan;

extern char** environ;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitRunFailed = 3;

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;
  std::string seeds;
  std::string variant;
  bool resume = false;
  bool plot = false;
  int jobs = 1;
  std::string out;
  bool quiet = false;
};

void add_config_flags(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config, "JSON config file");
  app->add_option("--set", o.overrides, "override a config value, key.path=value")->take_all();
}

std::vector<uint64_t> parse_seeds(const std::string& text) {
  std::vector<uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) {
      size_t used = 0;
      const auto v = std::stoull(item, &used);
      if (used != item.size()) throw CLI::ValidationError("--seeds", "'" + item + "' is not an integer");
      out.push_back(v);
    }
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

json read_json_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
}

SsGANConfig resolve_config(const CommonOptions& o) {
  json j = to_json(o.config.empty() ? SsGANConfig{} : load_config(o.config));
  for (const auto& a : o.overrides) apply_override(j, a);
  return config_from_json(j);
}

// The seeds a command runs: --seeds, else --seed, else the config's own.
std::vector<uint64_t> resolve_seeds(const CommonOptions& o, uint64_t config_seed) {
  if (!o.seeds.empty()) return parse_seeds(o.seeds);
  return {o.seed.value_or(config_seed)};
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string fmt(std::optional<double> v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(6) << *v;
  return os.str();
}

struct Logger {
  bool quiet = false;
  void operator()(const std::string& line) const {
    if (!quiet) std::cerr << line << '\n';
  }
};

std::optional<trainer::FidReference> fid_reference(const SsGANConfig& cfg, const experiment::Splits& splits,
                                                   std::optional<metrics::FeatureExtractor>& holder,
                                                   const Logger& log) {
  if (cfg.eval.interval <= 0) return std::nullopt;
  holder.emplace(experiment::cached_extractor(cfg, splits.train, log));
  return trainer::FidReference::from_dataset(*holder, splits.test);
}

// ---------------------------------------------------------------- train

int cmd_train(const CommonOptions& o, const std::optional<int64_t>& stop_after) {
  const Logger log{o.quiet};
  SsGANConfig base = resolve_config(o);
  const auto variants = o.variant.empty() ? std::vector<std::string>{to_string(base.variant)} : split_list(o.variant);
  const auto seeds = resolve_seeds(o, base.seed);
  const bool many = variants.size() * seeds.size() > 1;

  const auto splits = experiment::load_splits(base);
  std::optional<metrics::FeatureExtractor> extractor;
  const auto reference = fid_reference(base, splits, extractor, log);

  std::map<std::string, std::vector<trainer::RunRecord>> by_variant;
  std::ostringstream runs_csv;
  runs_csv << "variant,seed,config_hash,status,final_step,final_fid,run_dir\n";
  bool failed = false;
  for (const auto& vname : variants) {
    for (uint64_t seed : seeds) {
      SsGANConfig cfg = base;
      cfg.variant = parse_variant(vname);
      cfg.seed = seed;
      if (many && !cfg.paths.run_dir.empty())
        cfg.paths.run_dir = (fs::path(base.paths.run_dir) / (vname + "-s" + std::to_string(seed))).string();
      cfg.validate();
      trainer::RunOptions ro;
      ro.run_dir = experiment::run_dir(cfg);
      ro.fid = reference ? &*reference : nullptr;
      ro.resume = o.resume && fs::exists(ro.run_dir);
      ro.log = o.quiet ? nullptr : &std::cerr;
      ro.stop_after = stop_after;
      log("run " + ro.run_dir.string() + (ro.resume ? " (resuming)" : ""));
      auto rec = trainer::train(cfg, splits.train, ro);
      failed |= rec.status != trainer::RunStatus::Completed;
      std::cout << "run " << rec.run_dir.string() << " status " << trainer::to_string(rec.status) << " step "
                << rec.final_step << " final_fid " << (rec.final_fid ? fmt(rec.final_fid) : "n/a") << '\n';
      runs_csv << vname << ',' << seed << ',' << rec.config_hash << ',' << trainer::to_string(rec.status) << ','
               << rec.final_step << ',' << fmt(rec.final_fid) << ',' << rec.run_dir.string() << '\n';
      if (o.plot && !many) {
        plot::write_plot(rec.run_dir / "fid.png", {experiment::fid_panel({{vname, rec.curve("fid")}})});
      }
      by_variant[vname].push_back(std::move(rec));
    }
  }

  if (many) {
    std::ostringstream best;
    best << "variant,seeds,seed_list,best_seed,best_final_fid,config_hash\n";
    std::vector<std::pair<std::string, std::vector<std::pair<int64_t, double>>>> curves;
    for (const auto& vname : variants) {
      const auto& runs = by_variant[vname];
      const auto s = trainer::summarize_seeds(runs);
      std::string list, hash;
      for (const auto& r : runs) {
        list += (list.empty() ? "" : ";") + std::to_string(r.config.seed);
        if (r.config.seed == s.best_seed) hash = r.config_hash;
      }
      best << vname << ',' << runs.size() << ',' << list << ',' << (s.best_final_fid ? std::to_string(s.best_seed) : "")
           << ',' << fmt(s.best_final_fid) << ',' << hash << '\n';
      curves.emplace_back(vname, s.mean_curve);
    }
    std::cout << '\n' << runs_csv.str() << '\n' << best.str();
    if (!o.out.empty()) {
      write_text(fs::path(o.out) / "runs.csv", runs_csv.str());
      write_text(fs::path(o.out) / "best_of_seeds.csv", best.str());
    }
    if (o.plot) {
      const fs::path png = (o.out.empty() ? experiment::run_root() : fs::path(o.out)) / "fid_curves.png";
      fs::create_directories(png.parent_path());
      plot::write_plot(png, {experiment::fid_panel(curves, "FID (mean over seeds)")});
      std::cout << "plot " << png.string() << '\n';
    }
  }
  return failed ? kExitRunFailed : 0;
}

// ---------------------------------------------------------------- sweep

std::string sanitize(std::string s) {
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-') c = '_';
  return s;
}

// Runs `self train --config job.json` with output redirected to a log file.
int spawn_worker(const fs::path& self, const fs::path& config, const fs::path& log_path, bool resume) {
  std::vector<std::string> args = {self.string(), "train", "--config", config.string(), "--quiet"};
  if (resume) args.push_back("--resume");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, STDOUT_FILENO, log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  posix_spawn_file_actions_adddup2(&actions, STDOUT_FILENO, STDERR_FILENO);
  pid_t pid = 0;
  const int rc = posix_spawn(&pid, self.c_str(), &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  if (rc != 0) throw std::runtime_error("cannot start worker: " + std::string(std::strerror(rc)));
  int status = 0;
  while (waitpid(pid, &status, 0) < 0)
    if (errno != EINTR) throw std::runtime_error("waitpid failed");
  return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
}

int cmd_sweep(const CommonOptions& o, const std::string& grid_name) {
  const Logger log{o.quiet};
  const SsGANConfig base = resolve_config(o);
  const auto grid = trainer::sweep_grid(grid_name);
  std::vector<Variant> variants;
  if (o.variant.empty())
    variants = trainer::sweep_variants(grid_name);
  else
    for (const auto& v : split_list(o.variant)) variants.push_back(parse_variant(v));
  const auto seeds = resolve_seeds(o, base.seed);
  auto jobs = trainer::expand_sweep(base, grid, variants, seeds);

  const fs::path root = o.out.empty() ? experiment::run_root() / ("sweep-" + grid_name + "-" + config_hash(base))
                                      : fs::path(o.out);
  fs::create_directories(root / "jobs");
  fs::create_directories(root / "logs");
  // Workers would race to build the shared extractor cache.
  {
    const auto splits = experiment::load_splits(base);
    std::optional<metrics::FeatureExtractor> holder;
    fid_reference(base, splits, holder, log);
  }

  const fs::path self = fs::read_symlink("/proc/self/exe");
  std::mutex io;
  const auto runner = [&](const trainer::SweepJob& job) {
    trainer::SweepRow row;
    row.cell = job.cell;
    row.variant = job.config.variant;
    row.seed = job.config.seed;
    SsGANConfig cfg = job.config;
    const std::string name = sanitize(job.cell) + "-" + to_string(cfg.variant) + "-s" + std::to_string(cfg.seed);
    cfg.paths.run_dir = fs::absolute(root / "runs" / name).string();
    row.config_hash = config_hash(cfg);
    const fs::path job_file = root / "jobs" / (name + ".json");
    write_text(job_file, to_json(cfg).dump(2));
    const fs::path run_dir = cfg.paths.run_dir;
    bool done = false;
    if (fs::exists(run_dir / "run.json")) {
      const auto rec = trainer::read_run_record(run_dir);
      done = rec.status == trainer::RunStatus::Completed && rec.final_step >= cfg.total_steps;
    }
    if (!done) {
      if (fs::exists(run_dir) && !o.resume)
        throw trainer::RunDirectoryError(run_dir.string() + " already holds a run; pass --resume");
      {
        std::lock_guard<std::mutex> lock(io);
        log("start " + name);
      }
      const int code = spawn_worker(self, job_file, root / "logs" / (name + ".log"), fs::exists(run_dir));
      if (!fs::exists(run_dir / "run.json"))
        throw std::runtime_error("worker exited with code " + std::to_string(code) + "; see logs/" + name + ".log");
    }
    const auto rec = trainer::read_run_record(run_dir);
    row.status = rec.status;
    row.final_fid = rec.final_fid;
    {
      std::lock_guard<std::mutex> lock(io);
      log("done " + name + " " + trainer::to_string(rec.status) + " fid " + fmt(rec.final_fid));
    }
    return row;
  };
  const auto table = trainer::sweep(jobs, runner, std::max(1, o.jobs));
  const std::string csv = table.csv();
  write_text(root / "sweep.csv", csv);
  std::cout << csv << "table " << (root / "sweep.csv").string() << '\n';

  if (o.plot) {
    std::vector<trainer::RunRecord> records;
    std::vector<std::string> labels;
    for (const auto& job : jobs) {
      const std::string name =
          sanitize(job.cell) + "-" + to_string(job.config.variant) + "-s" + std::to_string(job.config.seed);
      if (!fs::exists(root / "runs" / name / "run.json")) continue;
      records.push_back(trainer::read_run_record(root / "runs" / name));
      labels.push_back(to_string(job.config.variant) + " " + job.cell +
                       (seeds.size() > 1 ? " s" + std::to_string(job.config.seed) : ""));
    }
    const fs::path png = root / "sweep.png";
    if (grid_name == "alpha") {
      plot::write_plot(png, experiment::alpha_panels(records));
    } else {
      std::vector<std::pair<std::string, std::vector<std::pair<int64_t, double>>>> curves;
      for (size_t i = 0; i < records.size(); ++i) curves.emplace_back(labels[i], records[i].curve("fid"));
      plot::write_plot(png, {experiment::fid_panel(curves, "FID per sweep cell")}, 760, 420);
    }
    std::cout << "plot " << png.string() << '\n';
  }
  bool failed = false;
  for (const auto& r : table.rows) failed |= r.status != trainer::RunStatus::Completed;
  return failed ? kExitRunFailed : 0;
}

// ---------------------------------------------------------------- fid / sample

fs::path resolve_checkpoint(const fs::path& p) {
  if (fs::is_regular_file(p)) return p;
  if (fs::is_directory(p))
    if (auto c = trainer::latest_checkpoint(p)) return *c;
  throw std::runtime_error("no checkpoint at " + p.string());
}

trainer::TrainState load_state(const fs::path& ckpt) {
  const auto archive = checkpoint::load(ckpt);
  if (archive.manifest.value("kind", "") != "train_state")
    throw std::runtime_error(ckpt.string() + " is not a training checkpoint");
  const auto cfg = config_from_json(archive.manifest.at("config"));
  trainer::TrainState state(cfg, archive.manifest.at("labeled").get<bool>());
  state.load(archive);
  return state;
}

// Individual images of the configured size, splitting tiled grids.
TensorF read_png_images(const fs::path& dir, int64_t size, int64_t channels) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<float> pixels;
  int64_t n = 0;
  for (const auto& f : files) {
    const TensorF img = image::from_raster(image::read_png(f));
    const int64_t h = img.dim(0), w = img.dim(1), c = img.dim(2);
    if (c != channels) throw data::DataError(f.string() + " has " + std::to_string(c) + " channels");
    int64_t pad = 0;
    if (h % size == 0 && w % size == 0)
      pad = 0;
    else if ((h - 1) % (size + 1) == 0 && (w - 1) % (size + 1) == 0)
      pad = 1;
    else
      throw data::DataError(f.string() + " is not a grid of " + std::to_string(size) + "px images");
    for (int64_t y0 = pad; y0 + size <= h; y0 += size + pad)
      for (int64_t x0 = pad; x0 + size <= w; x0 += size + pad) {
        for (int64_t y = 0; y < size; ++y)
          for (int64_t x = 0; x < size; ++x)
            for (int64_t ch = 0; ch < c; ++ch) pixels.push_back(img[((y0 + y) * w + x0 + x) * c + ch]);
        ++n;
      }
  }
  if (n == 0) throw data::DataError("no PNG images in " + dir.string());
  TensorF out({n, size, size, channels});
  std::copy(pixels.begin(), pixels.end(), out.data());
  return out;
}

int cmd_fid(const CommonOptions& o, const std::string& real, const std::string& fake, int64_t n) {
  const Logger log{o.quiet};
  SsGANConfig cfg = resolve_config(o);
  std::string seed_col;
  std::optional<trainer::TrainState> state;
  if (!fs::is_directory(fake) || trainer::latest_checkpoint(fake)) {
    state.emplace(load_state(resolve_checkpoint(fake)));
    cfg.dataset = state->config.dataset;
    cfg.arch = state->config.arch;
    cfg.extractor = state->config.extractor;
    seed_col = std::to_string(state->config.seed);
  }
  const auto splits = experiment::load_splits(cfg);
  const auto extractor = experiment::cached_extractor(cfg, splits.train, log);
  TensorF real_images;
  if (real == "test_split" || real == "test")
    real_images = splits.test.images;
  else if (real == "train_split" || real == "train")
    real_images = splits.train.images;
  else if (fs::exists(fs::path(real) / "manifest.json"))
    real_images = data::load_dataset(real).images;
  else if (fs::is_directory(real))
    real_images = read_png_images(real, cfg.arch.image_size, cfg.arch.channels);
  else
    throw std::runtime_error("--real must be test_split, train_split, a dataset directory or a PNG directory");
  TensorF fake_images;
  std::string hash = config_hash(cfg);
  if (state) {
    hash = config_hash(state->config);
    fake_images = trainer::generate(*state, n > 0 ? n : cfg.eval.fid_samples, o.seed.value_or(0));
  } else if (fs::exists(fs::path(fake) / "manifest.json")) {
    fake_images = data::load_dataset(fake).images;
  } else {
    fake_images = read_png_images(fake, cfg.arch.image_size, cfg.arch.channels);
  }
  const auto r = metrics::compute_fid(real_images, fake_images, extractor);
  std::cout << "fid,n_real,n_fake,extractor_hash,config_hash,seed\n"
            << std::setprecision(8) << r.fid << ',' << r.n_real << ',' << r.n_fake << ',' << r.extractor_hash << ','
            << hash << ',' << seed_col << '\n';
  return 0;
}

int cmd_sample(const std::string& ckpt, int64_t n, uint64_t seed, const std::string& out) {
  const auto state = load_state(resolve_checkpoint(ckpt));
  const auto images = trainer::generate(state, n, seed);
  const auto cols = static_cast<int64_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  image::write_png(out, image::to_raster(image::tile(images, cols)));
  std::cout << "wrote " << n << " samples from step " << state.step << " to " << out << '\n';
  return 0;
}

int cmd_extractor(const CommonOptions& o) {
  const Logger log{o.quiet};
  const auto cfg = resolve_config(o);
  const auto splits = experiment::load_splits(cfg);
  const auto fx = experiment::cached_extractor(cfg, splits.train, log);
  std::cout << "extractor " << experiment::extractor_cache_path(cfg, splits.train).string() << " hash " << fx.hash()
            << " test_accuracy " << fx.accuracy(splits.test) << '\n';
  return 0;
}

// ---------------------------------------------------------------- probe

int cmd_probe(const CommonOptions& o, const std::vector<std::string>& inputs, const std::string& steps_filter,
              bool shuffle_labels) {
  const Logger log{o.quiet};
  json pj = read_json_file(o.config);
  json full = experiment::to_json(experiment::probe_config_from_json(pj));
  for (const auto& a : o.overrides) apply_override(full, a);
  const auto pcfg = experiment::probe_config_from_json(full);
  std::set<int64_t> wanted;
  for (const auto& s : split_list(steps_filter)) wanted.insert(std::stoll(s));

  std::vector<fs::path> ckpts;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_regular_file(p)) {
      ckpts.push_back(p);
    } else if (fs::is_directory(p / "checkpoints")) {
      for (const auto& e : fs::directory_iterator(p / "checkpoints"))
        if (e.path().extension() == ".ckpt") ckpts.push_back(e.path());
    } else {
      throw std::runtime_error("probe input " + in + " is neither a checkpoint nor a run directory");
    }
  }
  std::sort(ckpts.begin(), ckpts.end());
  if (ckpts.empty()) throw std::runtime_error("no checkpoints to probe");

  // Checkpoints sharing a variant and seed-free configuration are seeds of one group.
  struct Group {
    std::string variant, hash;
    std::map<uint64_t, std::vector<probes::ProbeResult>> per_seed;
  };
  std::map<std::string, Group> groups;
  std::map<std::string, experiment::Splits> data_cache;
  std::ostringstream per_seed_csv;
  per_seed_csv << "block,variant,seed,step,top1,validation_top1,lr,feature_dim,config_hash\n" << std::setprecision(6);
  for (const auto& ck : ckpts) {
    const auto archive = checkpoint::load(ck);
    SsGANConfig cfg = config_from_json(archive.manifest.at("config"));
    const int64_t step = archive.manifest.at("step").get<int64_t>();
    if (!wanted.empty() && !wanted.count(step)) continue;
    SsGANConfig seedless = cfg;
    seedless.seed = 0;
    const std::string group_hash = config_hash(seedless);
    const std::string data_key = to_json(cfg).at("dataset").dump() + std::to_string(cfg.arch.image_size);
    if (!data_cache.count(data_key)) data_cache.emplace(data_key, experiment::load_splits(cfg));
    auto splits = data_cache.at(data_key);
    if (shuffle_labels) {
      Rng rng(derive_seed(pcfg.seed, "shuffle-labels"));
      auto& l = splits.train.labels;
      for (size_t i = l.size(); i > 1; --i) std::swap(l[i - 1], l[static_cast<size_t>(rng.uniform_int(0, i - 1))]);
    }
    auto loaded = probes::load_discriminator(ck);
    log("probing " + ck.string());
    auto results = probes::probe_all_blocks(loaded.disc, splits.train, splits.test, pcfg, step);
    for (const auto& r : results)
      per_seed_csv << r.block << ',' << to_string(cfg.variant) << ',' << cfg.seed << ',' << r.step << ',' << r.top1
                   << ',' << r.validation_top1 << ',' << r.lr << ',' << r.feature_dim << ',' << loaded.config_hash
                   << '\n';
    auto& g = groups[to_string(cfg.variant) + "/" + group_hash];
    g.variant = to_string(cfg.variant);
    g.hash = group_hash;
    auto& dst = g.per_seed[cfg.seed];
    dst.insert(dst.end(), results.begin(), results.end());
  }
  std::vector<probes::ProbeRow> rows;
  for (const auto& [key, g] : groups) {
    std::vector<std::vector<probes::ProbeResult>> lists;
    std::vector<uint64_t> seeds;
    for (const auto& [seed, rs] : g.per_seed) {
      seeds.push_back(seed);
      lists.push_back(rs);
    }
    auto agg = probes::aggregate(lists, seeds, g.variant, g.hash);
    rows.insert(rows.end(), agg.begin(), agg.end());
  }
  const fs::path out = o.out.empty() ? experiment::run_root() / "probes" : fs::path(o.out);
  const std::string csv = probes::probe_csv(rows);
  write_text(out / "probes.csv", csv);
  write_text(out / "probes_per_seed.csv", per_seed_csv.str());
  std::cout << csv << "table " << (out / "probes.csv").string() << '\n';
  if (o.plot && !rows.empty()) {
    plot::write_plot(out / "probes.png", experiment::probe_panels(rows));
    std::cout << "plot " << (out / "probes.png").string() << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- forgetting

int cmd_forgetting(const CommonOptions& o) {
  const Logger log{o.quiet};
  json full = experiment::to_json(experiment::forgetting_spec_from_json(read_json_file(o.config)));
  for (const auto& a : o.overrides) apply_override(full, a);
  const auto spec = experiment::forgetting_spec_from_json(full);
  std::vector<forgetting::ClassifierVariant> variants;
  if (o.variant.empty() || o.variant == "both")
    variants = {forgetting::ClassifierVariant::Vanilla, forgetting::ClassifierVariant::WithSelfSup};
  else
    for (const auto& v : split_list(o.variant)) variants.push_back(forgetting::parse_classifier_variant(v));
  const auto seeds = resolve_seeds(o, spec.run.seed);

  experiment::Splits splits;
  if (spec.dataset.name == "shapes") {
    splits = experiment::shapes_splits(spec.dataset, spec.image_size);
  } else {
    SsGANConfig c;
    c.paths.data_root = spec.data_root;
    splits = experiment::load_splits(c);
  }
  const std::string hash = sha256_hex(full.dump()).substr(0, 16);
  const fs::path out = o.out.empty() ? experiment::run_root() / ("forgetting-" + hash) : fs::path(o.out);
  write_text(out / "config.json", full.dump(2));

  struct Job {
    forgetting::ClassifierVariant variant;
    uint64_t seed;
  };
  std::vector<Job> jobs;
  for (auto v : variants)
    for (uint64_t s : seeds) jobs.push_back({v, s});
  std::vector<forgetting::AccuracyTrace> traces(jobs.size());
  std::atomic<size_t> next{0};
  std::mutex io;
  auto worker = [&] {
    for (size_t i = next++; i < jobs.size(); i = next++) {
      auto cfg = spec.run;
      cfg.seed = jobs[i].seed;
      {
        std::lock_guard<std::mutex> lock(io);
        log("forgetting " + forgetting::to_string(jobs[i].variant) + " seed " + std::to_string(cfg.seed));
      }
      traces[i] = forgetting::run_forgetting_experiment(jobs[i].variant, splits.train, splits.test, cfg);
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::max(1, std::min<int>(o.jobs, static_cast<int>(jobs.size()))); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::ostringstream summary;
  summary << "variant,seed,config_hash,final_task_accuracy,mean_post_switch_accuracy,switches_at_or_below_0.6,"
             "switches,status\n"
          << std::setprecision(6);
  bool failed = false;
  for (const auto& t : traces) {
    const auto post = forgetting::post_switch_accuracy(t, spec.run.return_window);
    double mean = 0;
    int low = 0;
    for (double a : post) {
      mean += a / static_cast<double>(post.size());
      low += a <= 0.6;
    }
    failed |= t.aborted;
    summary << forgetting::to_string(t.variant) << ',' << t.seed << ',' << hash << ','
            << (t.aborted ? std::string() : fmt(forgetting::final_task_accuracy(t))) << ',' << mean << ',' << low
            << ',' << post.size() << ',' << (t.aborted ? "aborted: " + t.error : "completed") << '\n';
  }
  write_text(out / "trace.csv", forgetting::trace_csv(traces));
  write_text(out / "summary.csv", summary.str());
  std::cout << summary.str() << "trace " << (out / "trace.csv").string() << '\n';
  if (o.plot) {
    plot::write_plot(out / "forgetting.png", experiment::forgetting_panels(traces));
    std::cout << "plot " << (out / "forgetting.png").string() << '\n';
  }
  return failed ? kExitRunFailed : 0;
}

// ---------------------------------------------------------------- plot

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::map<std::string, size_t> header_index(const std::vector<std::string>& header,
                                           const std::vector<std::string>& required, const fs::path& path) {
  std::map<std::string, size_t> idx;
  for (size_t i = 0; i < header.size(); ++i) idx[header[i]] = i;
  for (const auto& r : required)
    if (!idx.count(r)) throw std::runtime_error(path.string() + " lacks column '" + r + "'");
  return idx;
}

int cmd_plot(const std::string& kind, const std::vector<std::string>& inputs, const std::string& out) {
  if (inputs.empty()) throw std::runtime_error("plot needs at least one input");
  std::vector<plot::Panel> panels;
  if (kind == "fid" || kind == "alpha") {
    std::vector<trainer::RunRecord> runs;
    for (const auto& in : inputs) runs.push_back(trainer::read_run_record(in));
    if (kind == "alpha") {
      panels = experiment::alpha_panels(runs);
    } else {
      std::vector<std::pair<std::string, std::vector<std::pair<int64_t, double>>>> curves;
      for (const auto& r : runs)
        curves.emplace_back(to_string(r.config.variant) + " s" + std::to_string(r.config.seed), r.curve("fid"));
      panels = {experiment::fid_panel(curves)};
    }
  } else if (kind == "forgetting") {
    const auto rows = read_csv(inputs.front());
    if (rows.empty()) throw std::runtime_error("empty trace " + inputs.front());
    const auto idx = header_index(rows[0], {"variant", "seed", "step", "task_id", "accuracy", "task_switch", "cycle_end"},
                                  inputs.front());
    std::map<std::pair<std::string, uint64_t>, forgetting::AccuracyTrace> traces;
    for (size_t i = 1; i < rows.size(); ++i) {
      const auto& r = rows[i];
      auto& t = traces[{r[idx.at("variant")], std::stoull(r[idx.at("seed")])}];
      t.variant = forgetting::parse_classifier_variant(r[idx.at("variant")]);
      t.seed = std::stoull(r[idx.at("seed")]);
      const int64_t step = std::stoll(r[idx.at("step")]);
      t.rows.push_back({step, std::stoi(r[idx.at("task_id")]), std::stod(r[idx.at("accuracy")])});
      if (r[idx.at("task_switch")] == "1") t.switch_steps.push_back(step);
      if (r[idx.at("cycle_end")] == "1") t.cycle_steps.push_back(step);
    }
    std::vector<forgetting::AccuracyTrace> list;
    for (auto& [k, t] : traces) list.push_back(std::move(t));
    panels = experiment::forgetting_panels(list);
  } else if (kind == "probe") {
    const auto rows = read_csv(inputs.front());
    if (rows.empty()) throw std::runtime_error("empty table " + inputs.front());
    const auto idx = header_index(rows[0], {"block", "variant", "step", "top1_mean"}, inputs.front());
    std::vector<probes::ProbeRow> pr;
    for (size_t i = 1; i < rows.size(); ++i) {
      probes::ProbeRow r;
      r.block = rows[i][idx.at("block")];
      r.variant = rows[i][idx.at("variant")];
      r.step = std::stoll(rows[i][idx.at("step")]);
      r.top1_mean = std::stod(rows[i][idx.at("top1_mean")]);
      pr.push_back(r);
    }
    panels = experiment::probe_panels(pr);
  } else {
    throw CLI::ValidationError("--kind", "expected fid, alpha, forgetting or probe");
  }
  if (panels.empty()) throw std::runtime_error("nothing to plot");
  plot::write_plot(out, panels);
  std::cout << "plot " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised GAN training, evaluation and analysis"};
  app.require_subcommand(1);
  CommonOptions o;
  std::optional<int64_t> stop_after;
  std::string grid, real = "test_split", fake, checkpoint_in, out_png = "samples.png", steps_filter, kind;
  std::vector<std::string> inputs;
  int64_t n = 0;
  uint64_t sample_seed = 0;
  bool shuffle_labels = false;

  auto* train = app.add_subcommand("train", "train one or more runs");
  add_config_flags(train, o);
  train->add_option("--seed", o.seed, "seed (overrides the config)");
  train->add_option("--seeds", o.seeds, "comma-separated seeds, one run each");
  train->add_option("--variant", o.variant, "variant or comma-separated variants");
  train->add_flag("--resume", o.resume, "continue from the latest checkpoint of an existing run");
  train->add_flag("--plot", o.plot, "write FID-vs-step curves");
  train->add_option("--out", o.out, "directory for multi-run tables and plots");
  train->add_option("--stop-after", stop_after, "stop (with a checkpoint) after this many generator steps");
  train->add_flag("--quiet", o.quiet, "no progress output");

  auto* sweep = app.add_subcommand("sweep", "robustness or alpha sweep in worker processes");
  add_config_flags(sweep, o);
  sweep->add_option("--grid", grid, "gp, sn or alpha")->required()->check(CLI::IsMember({"gp", "sn", "alpha"}));
  sweep->add_option("--seeds", o.seeds, "comma-separated seeds");
  sweep->add_option("--seed", o.seed, "single seed");
  sweep->add_option("--variant", o.variant, "comma-separated variants (default depends on the grid)");
  sweep->add_option("--jobs", o.jobs, "concurrent worker processes")->check(CLI::PositiveNumber);
  sweep->add_flag("--resume", o.resume, "resume unfinished cells");
  sweep->add_flag("--plot", o.plot, "write the sweep figure");
  sweep->add_option("--out", o.out, "sweep directory");
  sweep->add_flag("--quiet", o.quiet, "no progress output");

  auto* fid = app.add_subcommand("fid", "FID between a real and a fake image set");
  add_config_flags(fid, o);
  fid->add_option("--real", real, "test_split (default), train_split, dataset directory or PNG directory");
  fid->add_option("--fake", fake, "PNG directory, dataset directory, checkpoint or run directory")->required();
  fid->add_option("--n", n, "samples drawn from a checkpoint (default eval.fid_samples)");
  fid->add_option("--seed", o.seed, "sampling seed");
  fid->add_flag("--quiet", o.quiet, "no progress output");

  auto* probe = app.add_subcommand("probe", "linear probes on discriminator blocks");
  probe->add_option("inputs", inputs, "checkpoints or run directories")->required();
  probe->add_option("--config", o.config, "probe JSON config");
  probe->add_option("--set", o.overrides, "override a probe setting, key=value")->take_all();
  probe->add_option("--steps", steps_filter, "comma-separated checkpoint steps to probe");
  probe->add_flag("--shuffle-labels", shuffle_labels, "train probes on permuted labels (chance check)");
  probe->add_flag("--plot", o.plot, "write accuracy-vs-step panels");
  probe->add_option("--out", o.out, "output directory");
  probe->add_flag("--quiet", o.quiet, "no progress output");

  auto* forget = app.add_subcommand("forgetting", "online classifier under a cycling task schedule");
  forget->add_option("--config", o.config, "forgetting JSON config");
  forget->add_option("--set", o.overrides, "override a setting, key.path=value")->take_all();
  forget->add_option("--variant", o.variant, "vanilla, with_selfsup or both (default both)");
  forget->add_option("--seeds", o.seeds, "comma-separated seeds");
  forget->add_option("--seed", o.seed, "single seed");
  forget->add_option("--jobs", o.jobs, "concurrent runs")->check(CLI::PositiveNumber);
  forget->add_flag("--plot", o.plot, "write the two-panel trace");
  forget->add_option("--out", o.out, "output directory");
  forget->add_flag("--quiet", o.quiet, "no progress output");

  auto* sample = app.add_subcommand("sample", "sample grid from a checkpoint");
  sample->add_option("--checkpoint", checkpoint_in, "checkpoint or run directory")->required();
  sample->add_option("--n", n, "number of samples (default 64)");
  sample->add_option("--seed", sample_seed, "sampling seed");
  sample->add_option("--out", out_png, "PNG path");

  auto* extractor = app.add_subcommand("extractor", "train or look up the cached FID feature extractor");
  add_config_flags(extractor, o);
  extractor->add_flag("--quiet", o.quiet, "no progress output");

  auto* plot_cmd = app.add_subcommand("plot", "render a figure from stored results");
  plot_cmd->add_option("--kind", kind, "fid, alpha, forgetting or probe")->required();
  plot_cmd->add_option("inputs", inputs, "run directories or a CSV table")->required();
  plot_cmd->add_option("--out", out_png, "PNG path")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(o, stop_after);
    if (*sweep) return cmd_sweep(o, grid);
    if (*fid) return cmd_fid(o, real, fake, n);
    if (*probe) return cmd_probe(o, inputs, steps_filter, shuffle_labels);
    if (*forget) return cmd_forgetting(o);
    if (*sample) return cmd_sample(checkpoint_in, n > 0 ? n : 64, sample_seed, out_png);
    if (*extractor) return cmd_extractor(o);
    if (*plot_cmd) return cmd_plot(kind, inputs, out_png);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
