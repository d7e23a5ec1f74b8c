#include "ssgan/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "ssgan/image_io.hpp"
#include "ssgan/losses.hpp"
#include "ssgan/ops.hpp"
#include "ssgan/rotation.hpp"

namespace ssgan::trainer {

namespace fs = std::filesystem;
using nlohmann::json;
using VF = ag::VarF;

// ---------------------------------------------------------------- metrics

std::vector<std::pair<std::string, double>> StepMetrics::items(Variant v) const {
  std::vector<std::pair<std::string, double>> out;
  const bool rot = uses_rotation(v);
  if (v != Variant::RotationOnly) {
    out.insert(out.end(), {{"d_loss", d_loss}, {"d_source", d_source}});
    if (rot) out.emplace_back("d_rotation", d_rotation);
    out.insert(out.end(), {{"d_penalty", d_penalty}, {"g_loss", g_loss}, {"g_source", g_source}});
    if (rot) out.emplace_back("g_rotation", g_rotation);
    out.insert(out.end(), {{"real_logit", real_logit}, {"fake_logit", fake_logit}});
    if (rot) out.emplace_back("rot_acc_fake", rot_acc_fake);
  } else {
    out.insert(out.end(), {{"d_loss", d_loss}, {"d_rotation", d_rotation}});
  }
  if (rot) out.emplace_back("rot_acc_real", rot_acc_real);
  return out;
}

// ---------------------------------------------------------------- state

TrainState::TrainState(const SsGANConfig& cfg, bool labeled_dataset)
    : config(cfg),
      labeled(labeled_dataset),
      models(models::build_models<float>(cfg.model_config(labeled_dataset))),
      g_opt(models.generator.registry().parameters(), cfg.adam),
      d_opt(models.discriminator.registry().parameters(), cfg.adam) {
  cfg.validate();
}

namespace {

// Identity of a run for resumption: total_steps and paths may change.
std::string resume_key(SsGANConfig cfg) {
  cfg.total_steps = 0;
  return config_hash(cfg);
}

void put_state(checkpoint::Archive& a, const std::string& prefix, const std::map<std::string, TensorF>& state) {
  for (const auto& [k, v] : state) a.f32[prefix + k] = v;
}

std::map<std::string, TensorF> take_state(const checkpoint::Archive& a, const std::string& prefix) {
  std::map<std::string, TensorF> out;
  for (const auto& [k, v] : a.f32)
    if (k.compare(0, prefix.size(), prefix) == 0) out[k.substr(prefix.size())] = v;
  return out;
}

}  // namespace

checkpoint::Archive TrainState::save() const {
  checkpoint::Archive a;
  a.manifest = {{"kind", "train_state"},
                {"step", step},
                {"data_epoch", data_epoch},
                {"data_position", data_position},
                {"labeled", labeled},
                {"resume_key", resume_key(config)},
                {"config", to_json(config)}};
  checkpoint::store(a, models.generator.registry());
  checkpoint::store(a, models.discriminator.registry());
  put_state(a, "g_opt/", g_opt.state());
  put_state(a, "d_opt/", d_opt.state());
  return a;
}

void TrainState::load(const checkpoint::Archive& a) {
  if (a.manifest.value("kind", "") != "train_state") throw checkpoint::CheckpointError("not a training checkpoint");
  if (a.manifest.value("resume_key", "") != resume_key(config))
    throw checkpoint::CheckpointError("checkpoint was written by a different configuration");
  if (a.manifest.value("labeled", !labeled) != labeled)
    throw checkpoint::CheckpointError("checkpoint was written for a different dataset labeling");
  checkpoint::restore(a, models.generator.registry());
  checkpoint::restore(a, models.discriminator.registry());
  g_opt.load_state(take_state(a, "g_opt/"));
  d_opt.load_state(take_state(a, "d_opt/"));
  step = a.manifest.at("step").get<int64_t>();
  data_epoch = a.manifest.at("data_epoch").get<int64_t>();
  data_position = a.manifest.at("data_position").get<int64_t>();
}

// ---------------------------------------------------------------- step

namespace {

Labels random_labels(int64_t n, int64_t k, Rng& rng) {
  Labels out(static_cast<size_t>(n));
  for (auto& l : out) l = static_cast<int32_t>(rng.uniform_int(0, k - 1));
  return out;
}

double mean_of(const TensorF& t) {
  double s = 0;
  for (float v : t.span()) s += v;
  return t.size() ? s / static_cast<double>(t.size()) : 0.0;
}

void check_finite(const VF& loss, const char* phase, int64_t step, int64_t sub, const StepMetrics& m) {
  if (std::isfinite(loss.item())) return;
  json diag = {{"step", step},
               {"phase", phase},
               {"sub_step", sub},
               {"loss", std::isnan(loss.item()) ? "nan" : "inf"},
               {"last_values",
                {{"d_source", m.d_source},
                 {"d_rotation", m.d_rotation},
                 {"d_penalty", m.d_penalty},
                 {"real_logit", m.real_logit},
                 {"fake_logit", m.fake_logit}}}};
  throw TrainingAborted(std::string("non-finite ") + phase + " loss at step " + std::to_string(step), diag);
}

// ReLU maps NaN to 0, so a poisoned input can leave the loss finite while the
// gradients are not.
void check_finite_grads(const nn::ParamRegistry<float>& reg, const char* phase, int64_t step, int64_t sub) {
  for (const auto& p : reg.parameters()) {
    if (!p.var.has_grad()) continue;
    for (float g : p.var.grad().span())
      if (!std::isfinite(g)) {
        json diag = {{"step", step}, {"phase", phase}, {"sub_step", sub}, {"parameter", p.name}, {"loss", "finite"}};
        throw TrainingAborted(std::string("non-finite ") + phase + " gradient for " + p.name + " at step " +
                                  std::to_string(step),
                              diag);
      }
  }
}

}  // namespace

StepMetrics train_step(TrainState& s, const std::vector<data::Batch>& reals) {
  const SsGANConfig& cfg = s.config;
  const Variant variant = cfg.variant;
  const bool rot = uses_rotation(variant);
  const bool cond = uses_labels(variant);
  const bool rotation_only = variant == Variant::RotationOnly;
  const bool gp = cfg.regularizer == Regularizer::GradientPenalty;
  if (static_cast<int64_t>(reals.size()) != cfg.disc_iters)
    throw std::invalid_argument("train_step: expected " + std::to_string(cfg.disc_iters) + " real batches, got " +
                                std::to_string(reals.size()));
  for (const auto& b : reals) {
    if (cond && b.labels.empty()) throw ConfigError("variant pcgan needs labels for every real batch");
    if (rot && b.images.dim(0) % rotation::kNumRotations != 0)
      throw rotation::BatchSizeError("batch of " + std::to_string(b.images.dim(0)) +
                                     " images is not divisible by 4");
  }

  auto& G = s.models.generator;
  auto& D = s.models.discriminator;
  const int64_t k = cfg.arch.num_classes;
  Rng rng(derive_seed(cfg.seed, "step-" + std::to_string(s.step)));
  StepMetrics m;

  for (int64_t it = 0; it < cfg.disc_iters; ++it) {
    if (cfg.regularizer == Regularizer::SpectralNorm) D.update_spectral_norms();
    const data::Batch& batch = reals[static_cast<size_t>(it)];
    const int64_t n = batch.images.dim(0);
    const Labels* real_labels = cond ? &batch.labels : nullptr;

    VF rot_logits;
    std::vector<int32_t> rot_labels;
    if (rot) {
      auto rb = rotation::make_rotation_batch(batch.images, rotation::Source::Real);
      models::DiscriminatorRequest<float> req;
      req.rotation = true;
      rot_logits = D.forward(VF(rb.images), req).rotation;
      rot_labels = std::move(rb.labels);
      m.rot_acc_real = losses::rotation_accuracy(rot_logits.value(), rot_labels);
    }

    VF loss;
    if (rotation_only) {
      VF term = losses::rotation_term(rot_logits, rot_labels);
      m.d_rotation = term.item();
      loss = ops::scale(term, static_cast<float>(-cfg.weights.beta));
    } else {
      Labels fake_labels;
      if (cond) fake_labels = random_labels(n, k, rng);
      const TensorF z = G.sample_latent(n, rng);
      TensorF fake;
      {
        ag::NoGradGuard no_grad;
        fake = G.forward(VF(z), cond ? &fake_labels : nullptr).value();
      }
      models::DiscriminatorRequest<float> req_real, req_fake;
      req_real.labels = real_labels;
      req_fake.labels = cond ? &fake_labels : nullptr;
      VF real_src = D.forward(VF(batch.images), req_real).source;
      VF fake_src = D.forward(VF(fake), req_fake).source;
      m.real_logit = mean_of(real_src.value());
      m.fake_logit = mean_of(fake_src.value());
      m.d_source = losses::discriminator_source_loss(real_src, fake_src, cfg.loss).item();
      if (rot) m.d_rotation = losses::rotation_term(rot_logits, rot_labels).item();
      loss = losses::discriminator_loss(real_src, fake_src, rot_logits, rot_labels, cfg.weights, cfg.loss);
      if (gp) {
        std::vector<float> eps(static_cast<size_t>(n));
        for (auto& e : eps) e = static_cast<float>(rng.uniform());
        VF penalty = losses::interpolate_gradient_penalty(D, batch.images, fake, eps, cfg.weights.gp_lambda,
                                                          real_labels);
        m.d_penalty = penalty.item();
        loss = ops::add(loss, penalty);
      }
    }
    m.d_loss = loss.item();
    check_finite(loss, "discriminator", s.step, it, m);
    ag::backward(loss);
    check_finite_grads(D.registry(), "discriminator", s.step, it);
    s.d_opt.step();
    ++m.d_updates;
  }

  if (!rotation_only) {
    const int64_t n = reals.front().images.dim(0);
    Labels fake_labels;
    if (cond) fake_labels = random_labels(n, k, rng);
    const TensorF z = G.sample_latent(n, rng);
    VF fake = G.forward(VF(z), cond ? &fake_labels : nullptr);
    models::DiscriminatorRequest<float> req;
    req.labels = cond ? &fake_labels : nullptr;
    VF src = D.forward(fake, req).source;
    VF fake_rot;
    std::vector<int32_t> fake_rot_labels;
    if (rot) {
      const auto plan = rotation::rotation_plan(n);
      fake_rot_labels.assign(plan.turns.begin(), plan.turns.end());
      models::DiscriminatorRequest<float> rreq;
      rreq.rotation = true;
      fake_rot = D.forward(ops::rotate(ops::gather_rows(fake, plan.rows), plan.turns), rreq).rotation;
      m.g_rotation = losses::rotation_term(fake_rot, fake_rot_labels).item();
      m.rot_acc_fake = losses::rotation_accuracy(fake_rot.value(), fake_rot_labels);
    }
    m.g_source = losses::generator_source_loss(src, cfg.loss).item();
    VF loss = losses::generator_loss(src, fake_rot, fake_rot_labels, cfg.weights, cfg.loss);
    m.g_loss = loss.item();
    check_finite(loss, "generator", s.step, 0, m);
    ag::backward(loss);
    s.d_opt.zero_grad();
    check_finite_grads(G.registry(), "generator", s.step, 0);
    s.g_opt.step();
    m.generator_updated = true;
  }
  ++s.step;
  return m;
}

// ---------------------------------------------------------------- evaluation

FidReference FidReference::from_dataset(const metrics::FeatureExtractor& extractor, const data::Dataset& eval_split) {
  if (!extractor.frozen()) throw std::logic_error("FID reference needs a frozen feature extractor");
  FidReference ref;
  ref.extractor = &extractor;
  ref.stats = metrics::gaussian_stats(extractor.embed(eval_split.images));
  ref.n_real = eval_split.size();
  return ref;
}

TensorF generate(const TrainState& state, int64_t n, uint64_t seed) {
  const auto& G = state.models.generator;
  const auto& a = G.arch();
  const bool cond = G.norm_mode() == NormMode::LabelConditionalBn;
  const int64_t batch = std::max<int64_t>(state.config.batch_size, 2);
  Rng rng(seed);
  TensorF out({n, a.image_size, a.image_size, a.channels});
  const int64_t per = a.image_size * a.image_size * a.channels;
  ag::NoGradGuard no_grad;
  for (int64_t start = 0; start < n; start += batch) {
    Labels labels;
    if (cond) labels = random_labels(batch, a.num_classes, rng);
    const TensorF z = G.sample_latent(batch, rng);
    const TensorF x = G.forward(VF(z), cond ? &labels : nullptr).value();
    const int64_t take = std::min(batch, n - start);
    std::copy(x.data(), x.data() + take * per, out.data() + start * per);
  }
  return out;
}

std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Completed: return "completed";
    case RunStatus::Diverged: return "diverged";
    case RunStatus::Aborted: return "aborted";
  }
  return "?";
}

namespace {

RunStatus parse_status(const std::string& s) {
  for (RunStatus r : {RunStatus::Completed, RunStatus::Diverged, RunStatus::Aborted})
    if (to_string(r) == s) return r;
  throw std::invalid_argument("unknown run status '" + s + "'");
}

}  // namespace

std::vector<std::pair<int64_t, double>> RunRecord::curve(const std::string& metric) const {
  std::vector<std::pair<int64_t, double>> out;
  for (const auto& r : metrics)
    if (r.metric == metric) out.emplace_back(r.step, r.value);
  return out;
}

// ---------------------------------------------------------------- run directory

fs::path checkpoint_path(const fs::path& run_dir, int64_t step) {
  std::ostringstream name;
  name << "step_" << std::setw(7) << std::setfill('0') << step << ".ckpt";
  return run_dir / "checkpoints" / name.str();
}

std::optional<fs::path> latest_checkpoint(const fs::path& run_dir) {
  const fs::path dir = run_dir / "checkpoints";
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return std::nullopt;
  std::optional<fs::path> best;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("step_", 0) != 0 || e.path().extension() != ".ckpt") continue;
    if (!best || name > best->filename().string()) best = e.path();
  }
  return best;
}

namespace {

std::string metric_line(const MetricRow& r) {
  return json{{"step", r.step}, {"metric", r.metric}, {"value", r.value}}.dump();
}

MetricRow parse_metric_line(const std::string& line) {
  const json j = json::parse(line);
  MetricRow r;
  r.step = j.at("step").get<int64_t>();
  r.metric = j.at("metric").get<std::string>();
  r.value = j.at("value").is_null() ? std::nan("") : j.at("value").get<double>();
  return r;
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    out.flush();
    if (!out) throw RunDirectoryError("cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw RunDirectoryError("cannot write " + path.string() + ": " + ec.message());
}

class MetricsLog {
 public:
  MetricsLog(const fs::path& path, std::vector<MetricRow> kept) : path_(path), rows_(std::move(kept)) {
    std::string text;
    for (const auto& r : rows_) text += metric_line(r) + "\n";
    write_text(path_, text);
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw RunDirectoryError("cannot open " + path_.string());
  }

  void append(int64_t step, const std::string& metric, double value) {
    MetricRow r{step, metric, value};
    out_ << metric_line(r) << '\n';
    out_.flush();
    if (!out_) throw RunDirectoryError("cannot append to " + path_.string() + " (disk full?)");
    rows_.push_back(std::move(r));
  }

  const std::vector<MetricRow>& rows() const { return rows_; }

 private:
  fs::path path_;
  std::vector<MetricRow> rows_;
  std::ofstream out_;
};

json record_json(const RunRecord& r, const std::string& started) {
  json ckpts = json::array();
  for (const auto& c : r.checkpoints) ckpts.push_back(c.filename().string());
  return {{"config_hash", r.config_hash},
          {"seed", r.config.seed},
          {"variant", to_string(r.config.variant)},
          {"status", to_string(r.status)},
          {"final_step", r.final_step},
          {"final_fid", r.final_fid ? json(*r.final_fid) : json()},
          {"checkpoints", ckpts},
          {"started_at", started},
          {"wall_seconds", r.wall_seconds}};
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void prepare_run_dir(const fs::path& dir, bool resume) {
  if (dir.empty()) throw RunDirectoryError("no run directory given");
  std::error_code ec;
  for (const auto& sub : {dir, dir / "checkpoints", dir / "samples"}) {
    fs::create_directories(sub, ec);
    if (ec) throw RunDirectoryError("cannot create " + sub.string() + ": " + ec.message());
  }
  if (!resume && (fs::exists(dir / "metrics.jsonl") || latest_checkpoint(dir)))
    throw RunDirectoryError(dir.string() + " already holds a run; resume it or choose another directory");
  // Fail before any training work if the directory cannot take writes.
  const fs::path probe = dir / ".write_probe";
  {
    std::ofstream out(probe, std::ios::binary | std::ios::trunc);
    out << std::string(4096, '\0');
    out.flush();
    if (!out) throw RunDirectoryError("run directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

}  // namespace

bool DivergenceMonitor::record(double fid) {
  last_fid = fid;
  if (!initial_fid && std::isfinite(fid)) {
    initial_fid = fid;
    bad_evals = 0;
    return false;
  }
  const bool bad = !std::isfinite(fid) || (initial_fid && fid > kDivergenceFactor * *initial_fid);
  bad_evals = bad ? bad_evals + 1 : 0;
  return bad_evals >= kDivergencePatience;
}

json DivergenceMonitor::to_json() const {
  return {{"initial_fid", initial_fid ? json(*initial_fid) : json()},
          {"last_fid", last_fid ? json(*last_fid) : json()},
          {"bad_evals", bad_evals}};
}

DivergenceMonitor DivergenceMonitor::from_json(const json& j) {
  DivergenceMonitor h;
  if (j.contains("initial_fid") && !j["initial_fid"].is_null()) h.initial_fid = j["initial_fid"].get<double>();
  if (j.contains("last_fid") && !j["last_fid"].is_null()) h.last_fid = j["last_fid"].get<double>();
  h.bad_evals = j.value("bad_evals", 0);
  return h;
}

std::vector<MetricRow> read_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw RunDirectoryError("cannot read " + path.string());
  std::vector<MetricRow> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(parse_metric_line(line));
  return rows;
}

RunRecord read_run_record(const fs::path& run_dir) {
  std::ifstream in(run_dir / "run.json");
  if (!in) throw RunDirectoryError("no run.json in " + run_dir.string());
  const json j = json::parse(in);
  RunRecord r;
  r.config = load_config(run_dir / "config.json");
  r.config_hash = j.at("config_hash").get<std::string>();
  r.run_dir = run_dir;
  r.status = parse_status(j.at("status").get<std::string>());
  r.final_step = j.at("final_step").get<int64_t>();
  if (!j.at("final_fid").is_null()) r.final_fid = j.at("final_fid").get<double>();
  for (const auto& c : j.at("checkpoints")) r.checkpoints.push_back(run_dir / "checkpoints" / c.get<std::string>());
  r.wall_seconds = j.at("wall_seconds").get<double>();
  r.metrics = read_metrics(run_dir / "metrics.jsonl");
  return r;
}

// ---------------------------------------------------------------- train

RunRecord train(const SsGANConfig& config, const data::Dataset& dataset, const RunOptions& opt) {
  config.validate();
  const auto& arch = config.arch;
  if (dataset.size() == 0) throw data::DataError("training dataset is empty");
  if (dataset.image_size() != arch.image_size || dataset.channels() != arch.channels)
    throw ConfigError("dataset images are " + shape_str(dataset.image_shape()) + " but arch expects " +
                      std::to_string(arch.image_size) + "x" + std::to_string(arch.image_size) + "x" +
                      std::to_string(arch.channels));
  if (uses_labels(config.variant) && dataset.num_classes > arch.num_classes)
    throw ConfigError("dataset has more classes than arch.num_classes");
  if (opt.fid && (!opt.fid->extractor || !opt.fid->extractor->frozen()))
    throw std::logic_error("FID reference needs a frozen feature extractor");

  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = opt.run_dir;
  prepare_run_dir(dir, opt.resume);

  RunRecord rec;
  rec.config = config;
  rec.config_hash = config_hash(config);
  rec.run_dir = dir;
  const std::string started = utc_now();

  TrainState state(config, dataset.labeled());
  DivergenceMonitor history;
  std::vector<MetricRow> kept;
  std::optional<fs::path> resume_from = opt.resume ? latest_checkpoint(dir) : std::nullopt;
  if (resume_from) {
    const auto archive = checkpoint::load(*resume_from);
    state.load(archive);
    history = DivergenceMonitor::from_json(archive.manifest.value("eval_history", json::object()));
    if (fs::exists(dir / "metrics.jsonl"))
      for (auto& r : read_metrics(dir / "metrics.jsonl"))
        if (r.step <= state.step) kept.push_back(std::move(r));
    for (int64_t s = 0; s <= state.step; ++s)
      if (fs::exists(checkpoint_path(dir, s))) rec.checkpoints.push_back(checkpoint_path(dir, s));
    if (opt.log) *opt.log << "resuming " << dir.string() << " at step " << state.step << "\n";
  }
  write_text(dir / "config.json", to_json(config).dump(2) + "\n");
  MetricsLog log(dir / "metrics.jsonl", std::move(kept));

  data::BatchStream stream(dataset, config.batch_size, derive_seed(config.seed, "data"));
  stream.seek(state.data_epoch, state.data_position);
  const uint64_t eval_seed = derive_seed(config.seed, "eval");
  const uint64_t sample_seed = derive_seed(config.seed, "samples");
  const auto& ev = config.eval;

  auto save_checkpoint = [&]() {
    state.data_epoch = stream.epoch();
    state.data_position = stream.position();
    auto archive = state.save();
    archive.manifest["eval_history"] = history.to_json();
    const fs::path path = checkpoint_path(dir, state.step);
    checkpoint::save(archive, path);
    if (rec.checkpoints.empty() || rec.checkpoints.back() != path) rec.checkpoints.push_back(path);
  };
  auto evaluate = [&]() -> bool {
    if (!opt.fid) return false;
    const TensorF fake = generate(state, ev.fid_samples, eval_seed);
    double fid = std::nan("");
    bool finite = true;
    for (float v : fake.span()) finite = finite && std::isfinite(v);
    if (finite)
      fid = metrics::compute_fid(opt.fid->stats, opt.fid->n_real, fake, *opt.fid->extractor).fid;
    log.append(state.step, "fid", fid);
    if (opt.log) *opt.log << "step " << state.step << " fid " << fid << "\n";
    return history.record(fid);
  };
  auto write_samples = [&]() {
    const TensorF grid = generate(state, ev.sample_grid, sample_seed);
    const auto cols = static_cast<int64_t>(std::ceil(std::sqrt(static_cast<double>(ev.sample_grid))));
    std::ostringstream name;
    name << "step_" << std::setw(7) << std::setfill('0') << state.step << ".png";
    image::write_png(dir / "samples" / name.str(), image::to_raster(image::tile(grid, cols)));
  };
  auto finish = [&](RunStatus status) {
    rec.status = status;
    rec.final_step = state.step;
    rec.metrics = log.rows();
    rec.final_fid = history.last_fid;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text(dir / "run.json", record_json(rec, started).dump(2) + "\n");
    return rec;
  };

  if (!resume_from) {
    if (ev.sample_interval > 0 && ev.sample_grid > 0) write_samples();
    if (ev.interval > 0 && evaluate()) return finish(RunStatus::Diverged);
    save_checkpoint();
  }

  while (state.step < config.total_steps) {
    std::vector<data::Batch> reals;
    reals.reserve(static_cast<size_t>(config.disc_iters));
    for (int64_t i = 0; i < config.disc_iters; ++i) reals.push_back(stream.next());
    StepMetrics m;
    try {
      m = train_step(state, reals);
    } catch (const TrainingAborted& e) {
      json diag = e.diagnostics();
      diag["error"] = e.what();
      diag["config_hash"] = rec.config_hash;
      write_text(dir / "diagnostics.json", diag.dump(2) + "\n");
      if (opt.log) *opt.log << "aborted: " << e.what() << "\n";
      return finish(RunStatus::Aborted);
    }
    const int64_t t = state.step;
    if (t % ev.log_interval == 0)
      for (const auto& [name, value] : m.items(config.variant)) log.append(t, name, value);
    const bool last = t == config.total_steps;
    bool diverged = false;
    if (ev.interval > 0 && (t % ev.interval == 0 || last)) diverged = evaluate();
    if (ev.sample_interval > 0 && ev.sample_grid > 0 && (t % ev.sample_interval == 0 || last)) write_samples();
    const bool stop = opt.stop_after && t >= *opt.stop_after;
    if ((ev.checkpoint_interval > 0 && t % ev.checkpoint_interval == 0) || last || diverged || stop)
      save_checkpoint();
    if (diverged) {
      if (opt.log) *opt.log << "diverged at step " << t << "\n";
      return finish(RunStatus::Diverged);
    }
    if (stop) break;
  }
  return finish(RunStatus::Completed);
}

// ---------------------------------------------------------------- sweeps

namespace {

struct AdamSetting {
  const char* beta1;
  const char* beta2;
  int disc_iters;
};
constexpr AdamSetting kAdamSettings[] = {{"0", "0.9", 1}, {"0", "0.9", 2}, {"0.5", "0.999", 1}};

std::vector<std::string> adam_overrides(const AdamSetting& a) {
  return {std::string("adam.beta1=") + a.beta1, std::string("adam.beta2=") + a.beta2,
          "disc_iters=" + std::to_string(a.disc_iters)};
}

std::string adam_key(const AdamSetting& a) {
  return std::string("beta1=") + a.beta1 + ",beta2=" + a.beta2 + ",disc_iters=" + std::to_string(a.disc_iters);
}

}  // namespace

std::vector<SweepCell> sweep_grid(const std::string& name) {
  std::vector<SweepCell> grid;
  if (name == "gp") {
    for (const char* lambda : {"1", "10"})
      for (const auto& a : kAdamSettings) {
        SweepCell c{std::string("lambda=") + lambda + "," + adam_key(a), adam_overrides(a)};
        c.overrides.insert(c.overrides.end(),
                           {"regularizer=gradient_penalty", std::string("weights.gp_lambda=") + lambda});
        grid.push_back(std::move(c));
      }
  } else if (name == "sn") {
    for (const auto& a : kAdamSettings) {
      SweepCell c{adam_key(a), adam_overrides(a)};
      c.overrides.push_back("regularizer=spectral_norm");
      grid.push_back(std::move(c));
    }
  } else if (name == "alpha") {
    for (const char* alpha : {"0.2", "0.5", "1"})
      grid.push_back({std::string("alpha=") + alpha, {std::string("weights.alpha=") + alpha, "weights.beta=1"}});
  } else {
    throw ConfigError("unknown sweep grid '" + name + "' (expected gp, sn or alpha)");
  }
  return grid;
}

std::vector<Variant> sweep_variants(const std::string& name) {
  if (name == "alpha") return {Variant::SsGan};
  sweep_grid(name);
  return {Variant::SnGan, Variant::SsGan};
}

std::vector<SweepJob> expand_sweep(const SsGANConfig& base, const std::vector<SweepCell>& grid,
                                   const std::vector<Variant>& variants, const std::vector<uint64_t>& seeds) {
  if (grid.empty()) throw ConfigError("sweep grid is empty");
  if (variants.empty() || seeds.empty()) throw ConfigError("sweep needs at least one variant and one seed");
  std::vector<SweepJob> jobs;
  for (const auto& cell : grid)
    for (Variant v : variants)
      for (uint64_t seed : seeds) {
        auto overrides = cell.overrides;
        overrides.push_back("variant=" + to_string(v));
        overrides.push_back("seed=" + std::to_string(seed));
        overrides.push_back("paths.run_dir=\"\"");
        jobs.push_back({with_overrides(base, overrides), cell.key});
      }
  return jobs;
}

SweepTable sweep(const std::vector<SweepJob>& jobs, const SweepRunner& runner, int parallelism) {
  if (jobs.empty()) throw ConfigError("sweep has no jobs");
  SweepTable table;
  table.rows.resize(jobs.size());
  auto run_one = [&](size_t i) {
    const auto& job = jobs[i];
    SweepRow row;
    try {
      row = runner(job);
    } catch (const std::exception& e) {
      row.status = RunStatus::Aborted;
      row.error = e.what();
    }
    row.cell = job.cell;
    row.variant = job.config.variant;
    row.seed = job.config.seed;
    row.config_hash = config_hash(job.config);
    table.rows[i] = std::move(row);
  };
  const int workers = std::clamp(parallelism, 1, static_cast<int>(jobs.size()));
  if (workers == 1) {
    for (size_t i = 0; i < jobs.size(); ++i) run_one(i);
    return table;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (size_t i = next++; i < jobs.size(); i = next++) run_one(i);
    });
  for (auto& t : pool) t.join();
  return table;
}

std::string SweepTable::csv() const {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
  };
  std::ostringstream os;
  os << "cell,variant,seed,config_hash,status,final_fid,error\n";
  for (const auto& r : rows) {
    os << quote(r.cell) << ',' << to_string(r.variant) << ',' << r.seed << ',' << r.config_hash << ','
       << to_string(r.status) << ',';
    if (r.final_fid) os << std::setprecision(10) << *r.final_fid;
    os << ',' << quote(r.error) << '\n';
  }
  return os.str();
}

SeedSummary summarize_seeds(const std::vector<RunRecord>& runs) {
  SeedSummary out;
  for (const auto& r : runs)
    if (r.final_fid && std::isfinite(*r.final_fid) && (!out.best_final_fid || *r.final_fid < *out.best_final_fid)) {
      out.best_final_fid = r.final_fid;
      out.best_seed = r.config.seed;
    }
  if (runs.empty()) return out;
  std::map<int64_t, std::pair<double, size_t>> acc;
  for (const auto& r : runs) {
    std::map<int64_t, double> per_run;
    for (const auto& [step, v] : r.curve("fid")) per_run[step] = v;
    for (const auto& [step, v] : per_run) {
      auto& a = acc[step];
      a.first += v;
      ++a.second;
    }
  }
  for (const auto& [step, a] : acc)
    if (a.second == runs.size()) out.mean_curve.emplace_back(step, a.first / static_cast<double>(a.second));
  return out;
}

}  // namespace ssgan::trainer
