#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "ssgan/checkpoint.hpp"
#include "ssgan/probes.hpp"
#include "ssgan/trainer.hpp"
#include "test_support.hpp"
#include "trainer_fixture.hpp"

namespace ssgan::probes {
namespace {

ProbeConfig quick_config() {
  ProbeConfig c;
  c.epochs = 12;
  c.decay_every = 5;
  c.batch_size = 64;
  c.lr_candidates = {0.1};
  c.seed = 2;
  return c;
}

// Brute-force adaptive max pool with bins [floor(i*H/s), ceil((i+1)*H/s)).
TensorF reference_pool(const TensorF& x, int64_t s) {
  const int64_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  TensorF out({n, s * s * c});
  for (int64_t b = 0; b < n; ++b)
    for (int64_t i = 0; i < s; ++i)
      for (int64_t j = 0; j < s; ++j)
        for (int64_t k = 0; k < c; ++k) {
          const auto y0 = static_cast<int64_t>(std::floor(static_cast<double>(i * h) / s));
          const auto y1 = static_cast<int64_t>(std::ceil(static_cast<double>((i + 1) * h) / s));
          const auto x0 = static_cast<int64_t>(std::floor(static_cast<double>(j * w) / s));
          const auto x1 = static_cast<int64_t>(std::ceil(static_cast<double>((j + 1) * w) / s));
          float m = -INFINITY;
          for (int64_t y = y0; y < y1; ++y)
            for (int64_t xx = x0; xx < x1; ++xx) m = std::max(m, x.at({b, y, xx, k}));
          out[b * s * s * c + (i * s + j) * c + k] = m;
        }
  return out;
}

TEST(Pool, DeskScaleGridIsSixBySix) {
  EXPECT_EQ(pooled_grid(8, 8, 256, 9216), 6);
  TensorF x({2, 8, 8, 256});
  Rng rng(1);
  for (auto& v : x.span()) v = static_cast<float>(rng.normal());
  const auto p = pool_features(x, 9216);
  EXPECT_EQ(p.shape(), (Shape{2, 9216}));
}

TEST(Pool, OneByOnePassesThrough) {
  TensorF x({3, 1, 1, 5});
  std::iota(x.span().begin(), x.span().end(), 0.0f);
  const auto p = pool_features(x, 9216);
  ASSERT_EQ(p.shape(), (Shape{3, 5}));
  for (int64_t i = 0; i < x.size(); ++i) EXPECT_EQ(p[i], x[i]);
}

TEST(Pool, ConstantMapStaysConstant) {
  TensorF x({2, 7, 7, 3}, 0.25f);
  const auto p = pool_features(x, 12);
  EXPECT_EQ(p.shape(), (Shape{2, 12}));
  for (float v : p.span()) EXPECT_EQ(v, 0.25f);
}

TEST(Pool, MatchesBruteForceAdaptiveMaxPool) {
  Rng rng(3);
  for (auto [h, c, target] : std::vector<std::array<int64_t, 3>>{{5, 2, 8}, {7, 3, 27}, {8, 4, 40}, {9, 1, 16}}) {
    TensorF x({2, h, h, c});
    for (auto& v : x.span()) v = static_cast<float>(rng.normal());
    const int64_t s = pooled_grid(h, h, c, target);
    EXPECT_LE(s * s * c, target);
    EXPECT_GT((s + 1) * (s + 1) * c, target);
    const auto got = pool_features(x, target);
    const auto want = reference_pool(x, s);
    ASSERT_EQ(got.shape(), want.shape());
    for (int64_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i], want[i]);
  }
}

TEST(Pool, PooledDimensionNeverExceedsTarget) {
  for (int64_t h : {1, 2, 4, 8, 16})
    for (int64_t c : {1, 3, 16, 128})
      for (int64_t target : {128, 1000, 9216})
        if (target >= c) {
          const int64_t s = pooled_grid(h, h, c, target);
          EXPECT_LE(s * s * c, target);
          EXPECT_LE(s, h);
        }
}

TEST(Pool, RejectsTargetBelowChannels) { EXPECT_THROW(pooled_grid(4, 4, 256, 100), std::invalid_argument); }

class ProbeModel : public ::testing::Test {
 protected:
  ProbeModel() : disc_(testing::tiny_config().model_config(true)) {}
  models::Discriminator<float> disc_;
};

TEST_F(ProbeModel, BlockFeaturesHaveTheDeclaredShapes) {
  const auto ds = testing::tiny_shapes(10);
  for (const auto& info : disc_.block_info()) {
    const auto f = extract_block_features(disc_, ds.images, info.name, 4);
    EXPECT_EQ(f.shape(), (Shape{10, info.shape[0], info.shape[1], info.shape[2]})) << info.name;
  }
}

TEST_F(ProbeModel, FeaturesAreDeterministicAndBatchIndependent) {
  const auto ds = testing::tiny_shapes(12);
  const auto a = extract_block_features(disc_, ds.images, "block3", 5);
  const auto b = extract_block_features(disc_, ds.images, "block3", 12);
  ASSERT_EQ(a.shape(), b.shape());
  for (int64_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST_F(ProbeModel, UnknownBlockListsValidNames) {
  const auto ds = testing::tiny_shapes(4);
  try {
    extract_block_features(disc_, ds.images, "block9");
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("block0, block1, block2, block3"), std::string::npos);
  }
}

TEST_F(ProbeModel, ProbingNeverChangesTheDiscriminator) {
  const auto train = testing::tiny_shapes(200, 1);
  const auto test = testing::tiny_shapes(100, 2);
  const auto before = checkpoint::registry_hash(disc_.registry());
  auto cfg = quick_config();
  cfg.target_dim = 64;
  const auto results = probe_all_blocks(disc_, train, test, cfg, 0);
  EXPECT_EQ(checkpoint::registry_hash(disc_.registry()), before);
  ASSERT_EQ(results.size(), 4u);
  for (size_t i = 0; i < results.size(); ++i) {
    EXPECT_EQ(results[i].block, "block" + std::to_string(i));
    EXPECT_GE(results[i].top1, 0.0);
    EXPECT_LE(results[i].top1, 1.0);
    EXPECT_LE(results[i].feature_dim, 64);
  }
}

TEST(LinearProbe, SeparableTwoClassToyIsSolved) {
  Rng rng(5);
  const int64_t n = 400;
  TensorF x({n, 2});
  Labels y(n);
  for (int64_t i = 0; i < n; ++i) {
    y[i] = static_cast<int32_t>(i % 2);
    x[i * 2] = static_cast<float>((y[i] ? 2.0 : -2.0) + rng.uniform(-1, 1));
    x[i * 2 + 1] = static_cast<float>(rng.normal());
  }
  const auto fit = fit_linear_probe(x, y, x, y, 2, quick_config());
  EXPECT_EQ(fit.result.top1, 1.0);
}

TEST(LinearProbe, ShuffledLabelsLandAtChance) {
  Rng rng(6);
  const int64_t n_train = 2000, n_test = 4000, f = 20;
  auto make = [&](int64_t n, TensorF& x, Labels& y) {
    x = rng.normal_tensor<float>({n, f});
    y.resize(static_cast<size_t>(n));
    for (auto& l : y) l = static_cast<int32_t>(rng.uniform_int(0, 9));
  };
  TensorF xtr, xte;
  Labels ytr, yte;
  make(n_train, xtr, ytr);
  make(n_test, xte, yte);
  const auto fit = fit_linear_probe(xtr, ytr, xte, yte, 10, quick_config());
  const double se = std::sqrt(0.1 * 0.9 / n_test);
  EXPECT_NEAR(fit.result.top1, 0.1, 3 * se);
}

TEST(LinearProbe, SingleClassIsAnError) {
  TensorF x({10, 3}, 1.0f);
  Labels y(10, 4);
  EXPECT_THROW(fit_linear_probe(x, y, x, y, 10, quick_config()), std::invalid_argument);
}

TEST(LinearProbe, InvariantToAConsistentFeaturePermutation) {
  Rng rng(7);
  const int64_t n = 300, f = 12;
  TensorF x = rng.normal_tensor<float>({n, f});
  Labels y(n);
  for (int64_t i = 0; i < n; ++i) y[i] = x[i * f] + x[i * f + 3] > 0 ? 1 : (x[i * f + 5] > 0 ? 2 : 0);
  std::vector<int64_t> perm(f);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[2], perm[7]);
  TensorF xp({n, f});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < f; ++j) xp[i * f + j] = x[i * f + perm[j]];
  const auto a = fit_linear_probe(x, y, x, y, 3, quick_config());
  const auto b = fit_linear_probe(xp, y, xp, y, 3, quick_config());
  EXPECT_EQ(a.result.top1, b.result.top1);
  EXPECT_EQ(a.probe.predict(x), b.probe.predict(xp));
  for (int64_t j = 0; j < f; ++j)
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(a.probe.weight(perm[j], k), b.probe.weight(j, k), 1e-4);
}

TEST(LinearProbe, PicksTheLearningRateOnValidation) {
  Rng rng(8);
  TensorF x = rng.normal_tensor<float>({200, 4});
  Labels y(200);
  for (int64_t i = 0; i < 200; ++i) y[i] = x[i * 4] > 0;
  auto cfg = quick_config();
  cfg.lr_candidates = {0.0, 0.1};
  const auto fit = fit_linear_probe(x, y, x, y, 2, cfg);
  EXPECT_EQ(fit.result.lr, 0.1);
  EXPECT_GT(fit.result.validation_top1, 0.9);
}

TEST(ProbeTable, MeanAndSampleStd) {
  std::vector<std::vector<ProbeResult>> runs = {
      {{"block0", 0.5, 0, 0, 0, 10}, {"block3", 0.6, 0, 0, 0, 10}},
      {{"block0", 0.7, 0, 0, 0, 10}, {"block3", 0.6, 0, 0, 0, 10}},
  };
  const auto rows = aggregate(runs, {4, 5}, "ssgan", "abc");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].block, "block0");
  EXPECT_NEAR(rows[0].top1_mean, 0.6, 1e-12);
  EXPECT_NEAR(rows[0].top1_std, std::sqrt(0.02), 1e-12);
  EXPECT_EQ(rows[1].top1_std, 0.0);
  EXPECT_EQ(rows[0].seeds, 2);
  EXPECT_EQ(rows[0].seed_list, "4;5");
  const auto csv = probe_csv(rows);
  EXPECT_EQ(csv.rfind("block,variant,step,top1_mean,top1_std,seeds,seed_list,config_hash\n", 0), 0u);
}

TEST(LoadDiscriminator, RestoresTheTrainedWeights) {
  testing::TempDir dir;
  auto cfg = testing::tiny_config();
  cfg.total_steps = 2;
  cfg.eval.interval = 0;
  trainer::RunOptions o;
  o.run_dir = dir.path();
  const auto ds = testing::tiny_shapes();
  trainer::train(cfg, ds, o);
  const auto loaded = load_discriminator(trainer::checkpoint_path(dir.path(), 2));
  EXPECT_EQ(loaded.step, 2);
  EXPECT_EQ(loaded.variant, Variant::SsGan);
  EXPECT_EQ(loaded.config_hash, config_hash(cfg));
  const auto archive = checkpoint::load(trainer::checkpoint_path(dir.path(), 2));
  for (const auto& p : loaded.disc.registry().parameters()) EXPECT_EQ(p.var.value(), archive.tensor(p.name));
  EXPECT_THROW(load_discriminator(dir / "missing.ckpt"), checkpoint::CheckpointError);
}

}  // namespace
}  // namespace ssgan::probes
