// Acceptance report: one status line per criterion.
//
// Exit status: 0 when every criterion ran as specified and passed, 1 when a
// criterion run as specified failed, 77 when the remaining non-passes are
// skips (missing CIFAR-10) or failures of a reduced-scale stand-in.

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

#include "gradient_fixture.hpp"
#include "ssgan/experiment.hpp"

namespace fs = std::filesystem;
using namespace ssgan;

namespace {

enum class Outcome { Pass, Fail, Skip };

struct Verdict {
  Outcome outcome = Outcome::Skip;
  bool reduced = false;  // ran a smaller stand-in for the specified setup
  std::string summary;
};

struct Context {
  fs::path out;
  std::optional<fs::path> cifar;
  int jobs = 1;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

void note(const std::string& line) { std::cout << "    " << line << '\n' << std::flush; }

Outcome pass_if(bool ok) { return ok ? Outcome::Pass : Outcome::Fail; }

// ---------------------------------------------------------------- 1

// Counter-clockwise quarter turn by index: out(i, j) = in(j, n - 1 - i).
TensorF turn_oracle(const TensorF& img) {
  const int64_t n = img.dim(0), c = img.dim(2);
  TensorF out(img.shape());
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j)
      for (int64_t k = 0; k < c; ++k) out[(i * n + j) * c + k] = img[(j * n + (n - 1 - i)) * c + k];
  return out;
}

Verdict rotation_suite(const Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  int64_t violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int64_t n = rng.uniform_int(1, 12), c = rng.uniform_int(0, 1) ? 3 : 1;
    const TensorF img = rng.normal_tensor<float>({n, n, c});
    std::array<TensorF, 4> turned;
    for (int k = 0; k < 4; ++k) turned[k] = rotation::rotate_image(img, k);
    violations += !(turned[0] == img);
    violations += !(turned[1] == turn_oracle(img));
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) violations += !(rotation::rotate_image(turned[a], b) == turned[(a + b) % 4]);
    TensorF four = img;
    for (int k = 0; k < 4; ++k) four = rotation::rotate_image(four, 1);
    violations += !(four == img);
    auto before = img.storage();
    std::sort(before.begin(), before.end());
    for (int k = 1; k < 4; ++k) {
      auto after = turned[k].storage();
      std::sort(after.begin(), after.end());
      violations += after != before;
    }
  }
  const double secs = seconds_since(t0);
  note("1000 images, " + std::to_string(violations) + " violations, " + num(secs, 3) + " s");
  return {pass_if(violations == 0 && secs < 1.0), false,
          "rotation group: composition table, 4-fold identity, pixel multiset"};
}

// ---------------------------------------------------------------- 2

Verdict ablation_identity(const Context&) {
  using VD = ag::VarD;
  const auto t0 = std::chrono::steady_clock::now();
  const losses::LossWeights zero{0.0, 0.0, 0.0};
  int64_t mismatches = 0;
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    auto ss_cfg = ssgan::testing::gradient_check_config(Variant::SsGan);
    auto sn_cfg = ssgan::testing::gradient_check_config(Variant::SnGan);
    ss_cfg.seed = sn_cfg.seed = 1000 + static_cast<uint64_t>(trial);
    auto ss = models::build_models<double>(ss_cfg);
    auto sn = models::build_models<double>(sn_cfg);
    ss.discriminator.update_spectral_norms();
    sn.discriminator.update_spectral_norms();
    const TensorD real = rng.uniform_tensor<double>({8, 8, 8, 1}, -1, 1);
    const TensorD z = ss.generator.sample_latent(8, rng);
    const auto rot = rotation::make_rotation_batch(real, rotation::Source::Real);
    models::DiscriminatorRequest<double> with_rot;
    with_rot.rotation = true;

    const VD ss_fake = ss.generator.forward(VD(z)), sn_fake = sn.generator.forward(VD(z));
    const VD ss_rot_logits = ss.discriminator.forward(VD(rot.images), with_rot).rotation;
    const double ss_d = losses::discriminator_loss(ss.discriminator.forward(VD(real)).source,
                                                   ss.discriminator.forward(ss_fake).source, ss_rot_logits,
                                                   rot.labels, zero)
                            .item();
    const double sn_d = losses::discriminator_loss(sn.discriminator.forward(VD(real)).source,
                                                   sn.discriminator.forward(sn_fake).source, VD(), rot.labels, zero)
                            .item();
    const double ss_g =
        losses::generator_loss(ss.discriminator.forward(ss_fake).source, ss_rot_logits, rot.labels, zero).item();
    const double sn_g = losses::generator_loss(sn.discriminator.forward(sn_fake).source, VD(), rot.labels, zero).item();
    mismatches += ss_d != sn_d;
    mismatches += ss_g != sn_g;
  }
  const double secs = seconds_since(t0);
  note("100 input sets, " + std::to_string(mismatches) + " loss values differ, " + num(secs, 3) + " s");
  return {pass_if(mismatches == 0 && secs < 1.0), false, "loss ablation identity at alpha = beta = 0"};
}

// ---------------------------------------------------------------- 3

Verdict gradient_check(const Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = ssgan::testing::check_loss_gradients(11, 1e-3);
  const double secs = seconds_since(t0);
  note("generator " + std::to_string(r.generator_params) + " params: " + num(100 * r.generator.fraction()) +
       "% within 1e-3 (worst " + num(r.generator.worst, 3) + ")");
  note("discriminator " + std::to_string(r.discriminator_params) + " params: " +
       num(100 * r.discriminator.fraction()) + "% within 1e-3 (worst " + num(r.discriminator.worst, 3) + "), " +
       num(secs, 3) + " s");
  const bool ok = r.generator_params <= 500 && r.discriminator_params <= 500 && r.generator.fraction() >= 0.99 &&
                  r.discriminator.fraction() >= 0.99 && secs < 30;
  return {pass_if(ok), false, "analytic vs central-difference gradients of L_G and L_D"};
}

// ---------------------------------------------------------------- 4

Eigen::MatrixXd random_spd(int n, Rng& rng) {
  Eigen::MatrixXd b(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) b(i, j) = rng.normal();
  return b * b.transpose() + 0.05 * Eigen::MatrixXd::Identity(n, n);
}

Verdict fid_closed_forms(const Context&) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(4);
  double self = 0, shift = 0, scale = 0, sqrt_err = 0;
  for (int n : {1, 2, 3, 8, 16, 31, 48, 64}) {
    const metrics::GaussianStats a{Eigen::VectorXd::Random(n), random_spd(n, rng)};
    self = std::max(self, std::abs(metrics::frechet_distance(a, a)));
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) d(i) = rng.normal();
    const metrics::GaussianStats i0{Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Identity(n, n)};
    const metrics::GaussianStats i1{d, Eigen::MatrixXd::Identity(n, n)};
    shift = std::max(shift, std::abs(metrics::frechet_distance(i0, i1) - d.squaredNorm()));
    const metrics::GaussianStats four{Eigen::VectorXd::Zero(n), 4 * Eigen::MatrixXd::Identity(n, n)};
    scale = std::max(scale, std::abs(metrics::frechet_distance(four, i0) - n));
    const Eigen::MatrixXd m = random_spd(n, rng);
    const Eigen::MatrixXd s = metrics::matrix_sqrt_spd(m);
    sqrt_err = std::max(sqrt_err, (s * s - m).norm() / m.norm());
  }
  const double secs = seconds_since(t0);
  note("self " + num(self, 3) + ", mean shift " + num(shift, 3) + ", 4I vs I " + num(scale, 3) + ", sqrt " +
       num(sqrt_err, 3) + ", " + num(secs, 3) + " s");
  return {pass_if(self <= 1e-6 && shift <= 1e-6 && scale <= 1e-6 && sqrt_err <= 1e-8 && secs < 10), false,
          "Frechet distance closed forms and SPD square root"};
}

// ---------------------------------------------------------------- 5

Verdict forgetting_reproduction(const Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  experiment::ForgettingSpec spec;
  const bool reduced = !ctx.cifar;
  experiment::Splits splits;
  if (reduced) {
    // Without CIFAR-10: procedural shapes at 16x16 and a narrower classifier.
    spec.dataset.name = "shapes";
    spec.image_size = 16;
    spec.run.width = 8;
    splits = experiment::shapes_splits(spec.dataset, spec.image_size);
  } else {
    spec.dataset.name = "cifar10";
    spec.data_root = ctx.cifar->string();
    spec.image_size = 32;
    SsGANConfig c;
    c.paths.data_root = spec.data_root;
    splits = experiment::load_splits(c);
  }
  note(std::string("data ") + (reduced ? "shapes 16x16, width 8" : "CIFAR-10 32x32, width 32") + ", " +
       std::to_string(spec.run.schedule.steps_per_task) + " steps per task, 3 seeds");
  std::vector<forgetting::AccuracyTrace> traces;
  for (auto variant : {forgetting::ClassifierVariant::Vanilla, forgetting::ClassifierVariant::WithSelfSup})
    for (uint64_t seed : {0, 1, 2}) {
      auto cfg = spec.run;
      cfg.seed = seed;
      traces.push_back(forgetting::run_forgetting_experiment(variant, splits.train, splits.test, cfg));
      if (traces.back().aborted) {
        note("run aborted: " + traces.back().error);
        return {Outcome::Fail, reduced, "forgetting reproduction"};
      }
    }
  fs::create_directories(ctx.out / "forgetting");
  std::ofstream(ctx.out / "forgetting" / "trace.csv") << forgetting::trace_csv(traces);
  plot::write_plot(ctx.out / "forgetting" / "forgetting.png", experiment::forgetting_panels(traces));

  std::vector<double> post(static_cast<size_t>(spec.run.schedule.num_classes), 0.0);
  double final_vanilla = 0, final_selfsup = 0;
  for (const auto& t : traces) {
    if (t.variant == forgetting::ClassifierVariant::Vanilla) {
      const auto p = forgetting::post_switch_accuracy(t, 100);
      for (size_t i = 0; i < std::min(p.size(), post.size()); ++i) post[i] += p[i] / 3.0;
      final_vanilla += forgetting::final_task_accuracy(t) / 3.0;
    } else {
      final_selfsup += forgetting::final_task_accuracy(t) / 3.0;
    }
  }
  const auto low = std::count_if(post.begin(), post.end(), [](double a) { return a <= 0.60; });
  std::string list;
  for (double a : post) list += (list.empty() ? "" : " ") + num(a, 3);
  note("vanilla post-switch accuracy (mean over seeds): " + list);
  note(std::to_string(low) + "/" + std::to_string(post.size()) + " switches at or below 0.60 (need >= 7)");
  note("final task accuracy: with_selfsup " + num(final_selfsup, 3) + ", vanilla " + num(final_vanilla, 3) +
       ", gap " + num(final_selfsup - final_vanilla, 3) + " (need >= 0.05)");
  note("trace and plot in " + (ctx.out / "forgetting").string() + ", " + num(seconds_since(t0), 4) + " s");
  return {pass_if(low >= 7 && final_selfsup - final_vanilla >= 0.05), reduced,
          "forgetting: vanilla collapses after switches, rotation loss keeps the final task"};
}

// ---------------------------------------------------------------- 6-8 (CIFAR-10)

SsGANConfig cifar_config(const Context& ctx, Variant v, uint64_t seed) {
  SsGANConfig cfg;
  cfg.variant = v;
  cfg.seed = seed;
  cfg.dataset.name = "cifar10";
  cfg.paths.data_root = ctx.cifar->string();
  return cfg;
}

struct CifarBench {
  experiment::Splits splits;
  metrics::FeatureExtractor extractor;
  trainer::FidReference reference;
};

CifarBench& cifar_bench(const Context& ctx) {
  static std::unique_ptr<CifarBench> bench;
  if (!bench) {
    const auto cfg = cifar_config(ctx, Variant::SsGan, 0);
    auto splits = experiment::load_splits(cfg);
    auto fx = experiment::cached_extractor(cfg, splits.train, note);
    bench.reset(new CifarBench{std::move(splits), std::move(fx), {}});
    bench->reference = trainer::FidReference::from_dataset(bench->extractor, bench->splits.test);
  }
  return *bench;
}

// Completed runs are reused; interrupted ones resume from their last checkpoint.
trainer::RunRecord train_or_reuse(const Context& ctx, SsGANConfig cfg) {
  auto& bench = cifar_bench(ctx);
  cfg.paths.run_dir = (ctx.out / "runs" / (to_string(cfg.variant) + "-s" + std::to_string(cfg.seed) + "-" + config_hash(cfg))).string();
  const fs::path dir = cfg.paths.run_dir;
  if (fs::exists(dir / "run.json")) {
    auto rec = trainer::read_run_record(dir);
    if (rec.status != trainer::RunStatus::Completed || rec.final_step >= cfg.total_steps) return rec;
  }
  trainer::RunOptions ro;
  ro.run_dir = dir;
  ro.fid = &bench.reference;
  ro.resume = fs::exists(dir);
  note("training " + dir.filename().string());
  return trainer::train(cfg, bench.splits.train, ro);
}

Verdict skip_without_cifar(const std::string& what) {
  note("CIFAR-10 not found; set SSGAN_CIFAR_ROOT to the directory holding the binary batches");
  return {Outcome::Skip, false, what};
}

Verdict generation_ordering(const Context& ctx) {
  const std::string what = "generation ordering SsGAN(sBN) <= SsGAN <= SN-GAN, best of 3 seeds";
  if (!ctx.cifar) return skip_without_cifar(what);
  auto& bench = cifar_bench(ctx);
  const int64_t half = bench.splits.test.size() / 2;
  std::vector<int64_t> first(static_cast<size_t>(half)), second(static_cast<size_t>(half));
  std::iota(first.begin(), first.end(), 0);
  std::iota(second.begin(), second.end(), half);
  const double floor = metrics::compute_fid(data::gather_images(bench.splits.test.images, first),
                                            data::gather_images(bench.splits.test.images, second), bench.extractor)
                           .fid;
  std::map<Variant, std::optional<double>> best;
  for (auto v : {Variant::SsGanSbn, Variant::SsGan, Variant::SnGan}) {
    std::vector<trainer::RunRecord> runs;
    for (uint64_t seed : {0, 1, 2}) runs.push_back(train_or_reuse(ctx, cifar_config(ctx, v, seed)));
    best[v] = trainer::summarize_seeds(runs).best_final_fid;
    note(to_string(v) + " best-of-3 FID " + (best[v] ? num(*best[v]) : "n/a"));
  }
  note("split-half FID floor " + num(floor));
  const auto sbn = best[Variant::SsGanSbn], ss = best[Variant::SsGan], sn = best[Variant::SnGan];
  const bool ok = sbn && ss && sn && *sbn + floor <= *ss && *ss + floor <= *sn;
  return {pass_if(ok), false, what};
}

Verdict robustness_ordering(const Context& ctx) {
  const std::string what = "robustness: max-over-settings FID of SsGAN <= SN-GAN (spectral norm)";
  if (!ctx.cifar) return skip_without_cifar(what);
  const auto jobs = trainer::expand_sweep(cifar_config(ctx, Variant::SsGan, 0), trainer::sweep_grid("sn"),
                                          {Variant::SnGan, Variant::SsGan}, {0});
  const auto table = trainer::sweep(
      jobs,
      [&](const trainer::SweepJob& job) {
        const auto rec = train_or_reuse(ctx, job.config);
        trainer::SweepRow row{job.cell, job.config.variant, job.config.seed, rec.config_hash, rec.status,
                              rec.final_fid, ""};
        return row;
      },
      ctx.jobs);
  fs::create_directories(ctx.out / "robustness");
  std::ofstream(ctx.out / "robustness" / "sweep.csv") << table.csv();
  std::map<Variant, double> worst{{Variant::SnGan, -1}, {Variant::SsGan, -1}};
  bool complete = true;
  for (const auto& r : table.rows) {
    if (!r.final_fid) {
      complete = false;
      continue;
    }
    worst[r.variant] = std::max(worst[r.variant], *r.final_fid);
  }
  note("max FID over settings: ssgan " + num(worst[Variant::SsGan]) + ", sn_gan " + num(worst[Variant::SnGan]));
  return {pass_if(complete && worst[Variant::SsGan] <= worst[Variant::SnGan]), false, what};
}

Verdict probe_ordering(const Context& ctx) {
  const std::string what = "probe ordering: final block SsGAN >= SN-GAN, rotation-only below SsGAN, shuffled at chance";
  if (!ctx.cifar) return skip_without_cifar(what);
  auto& bench = cifar_bench(ctx);
  const probes::ProbeConfig pcfg;
  auto final_block_top1 = [&](const trainer::RunRecord& rec, bool shuffle) {
    const auto loaded = probes::load_discriminator(rec.checkpoints.back());
    const std::string block = loaded.disc.block_names().back();
    const TensorF tr = probes::pool_features(
        probes::extract_block_features(loaded.disc, bench.splits.train.images, block), pcfg.target_dim);
    const TensorF te = probes::pool_features(
        probes::extract_block_features(loaded.disc, bench.splits.test.images, block), pcfg.target_dim);
    Labels labels = bench.splits.train.labels;
    if (shuffle) {
      Rng rng(derive_seed(pcfg.seed, "shuffle-labels"));
      for (size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[static_cast<size_t>(rng.uniform_int(0, i - 1))]);
    }
    return probes::fit_linear_probe(tr, labels, te, bench.splits.test.labels, 10, pcfg).result.top1;
  };
  std::map<Variant, double> mean;
  std::optional<trainer::RunRecord> ssgan_seed0;
  for (auto v : {Variant::SsGan, Variant::SnGan, Variant::RotationOnly}) {
    double acc = 0;
    for (uint64_t seed : {0, 1, 2}) {
      const auto rec = train_or_reuse(ctx, cifar_config(ctx, v, seed));
      acc += final_block_top1(rec, false) / 3.0;
      if (v == Variant::SsGan && seed == 0) ssgan_seed0 = rec;
    }
    mean[v] = acc;
    note(to_string(v) + " final-block top-1 (mean of 3 seeds) " + num(mean[v]));
  }
  const double shuffled = final_block_top1(*ssgan_seed0, true);
  const double se = std::sqrt(0.1 * 0.9 / static_cast<double>(bench.splits.test.size()));
  note("shuffled-label top-1 " + num(shuffled) + " (chance 0.1, 3 SE = " + num(3 * se, 3) + ")");
  const bool ok = mean[Variant::SsGan] >= mean[Variant::SnGan] && mean[Variant::RotationOnly] < mean[Variant::SsGan] &&
                  std::abs(shuffled - 0.1) <= 3 * se;
  return {pass_if(ok), false, what};
}

// ---------------------------------------------------------------- 9

SsGANConfig determinism_config(const fs::path& dir) {
  SsGANConfig c;
  c.arch.image_size = 16;
  c.arch.z_dim = 16;
  c.arch.g_width = 16;
  c.arch.d_width = 16;
  c.arch.sbn_hidden = 8;
  c.arch.num_classes = 10;
  c.batch_size = 32;
  c.total_steps = 40;
  c.seed = 5;
  c.dataset.name = "shapes";
  c.dataset.shapes_train = 2000;
  c.dataset.shapes_test = 500;
  c.eval = {10, 256, 10, 16, 10, 1};
  c.extractor = {8, 32, 1, 128, 1e-3};
  c.paths.run_dir = dir.string();
  return c;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_tensors(const fs::path& a, const fs::path& b) {
  const auto x = checkpoint::load(a), y = checkpoint::load(b);
  return x.f32 == y.f32 && x.f64 == y.f64;
}

Verdict determinism_suite(const Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path root = ctx.out / "determinism";
  fs::remove_all(root);
  const auto base = determinism_config(root / "a");
  const auto splits = experiment::shapes_splits(base.dataset, base.arch.image_size);
  metrics::ExtractorSpec spec{16, 3, 10, base.extractor.width, base.extractor.embed_dim, 0};
  metrics::FeatureExtractor fx(spec);
  fx.fit(splits.train, {base.extractor.epochs, base.extractor.batch_size, base.extractor.lr, 0});
  fx.freeze();
  const auto ref = trainer::FidReference::from_dataset(fx, splits.test);

  auto run = [&](const std::string& name, bool resume, std::optional<int64_t> stop) {
    auto cfg = determinism_config(root / name);
    trainer::RunOptions ro;
    ro.run_dir = cfg.paths.run_dir;
    ro.fid = &ref;
    ro.resume = resume;
    ro.stop_after = stop;
    return trainer::train(cfg, splits.train, ro);
  };
  const auto a = run("a", false, std::nullopt);
  run("b", false, std::nullopt);
  run("c", false, 20);
  const auto c = run("c", true, std::nullopt);

  const bool logs_ab = file_bytes(root / "a" / "metrics.jsonl") == file_bytes(root / "b" / "metrics.jsonl");
  const bool logs_ac = file_bytes(root / "a" / "metrics.jsonl") == file_bytes(root / "c" / "metrics.jsonl");
  const bool ckpt_ac = same_tensors(trainer::checkpoint_path(root / "a", 40), trainer::checkpoint_path(root / "c", 40));
  const bool fid_ac = a.final_fid && c.final_fid && *a.final_fid == *c.final_fid;
  const double secs = seconds_since(t0);
  note(std::string("identical config and seed -> identical metrics log: ") + (logs_ab ? "yes" : "no"));
  note(std::string("stop at 20 + resume -> identical metrics log: ") + (logs_ac ? "yes" : "no") +
       ", identical final checkpoint: " + (ckpt_ac ? "yes" : "no") + ", identical final FID: " + (fid_ac ? "yes" : "no"));
  note(std::to_string(a.metrics.size()) + " metric rows per run, " + num(secs, 3) + " s");
  return {pass_if(logs_ab && logs_ac && ckpt_ac && fid_ac && secs < 600), false,
          "determinism: resumed == uninterrupted, same seed == same log"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria report"};
  std::vector<int> only;
  std::string out = "acceptance";
  int jobs = 1;
  app.add_option("--criteria", only, "run only these criteria (1-9)")->delimiter(',');
  app.add_option("--out", out, "directory for traces, plots and training runs");
  app.add_option("--jobs", jobs, "parallel training runs for the robustness sweep");
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  ctx.out = fs::absolute(out);
  ctx.jobs = std::max(1, jobs);
  fs::create_directories(ctx.out);
  if (const char* root = std::getenv("SSGAN_CIFAR_ROOT"); root && *root) ctx.cifar = fs::path(root);
  if (!std::getenv(experiment::kRunRootEnv)) ::setenv(experiment::kRunRootEnv, ctx.out.c_str(), 1);

  using Fn = Verdict (*)(const Context&);
  const std::vector<std::pair<int, Fn>> criteria = {
      {1, rotation_suite},          {2, ablation_identity},   {3, gradient_check},
      {4, fid_closed_forms},        {5, forgetting_reproduction}, {6, generation_ordering},
      {7, robustness_ordering},     {8, probe_ordering},      {9, determinism_suite}};

  int failed_full = 0, not_passed = 0;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    std::cout << "criterion " << id << '\n' << std::flush;
    Verdict v;
    try {
      v = fn(ctx);
    } catch (const std::exception& e) {
      note(std::string("error: ") + e.what());
      v = {Outcome::Fail, false, "raised an exception"};
    }
    const char* tag = v.outcome == Outcome::Pass ? "PASS" : v.outcome == Outcome::Fail ? "FAIL" : "SKIP";
    std::cout << tag << ' ' << id << ' ' << v.summary << (v.reduced ? " [reduced scale]" : "") << '\n' << std::flush;
    failed_full += v.outcome == Outcome::Fail && !v.reduced;
    not_passed += v.outcome != Outcome::Pass;
  }
  if (failed_full) return 1;
  return not_passed ? 77 : 0;
}
