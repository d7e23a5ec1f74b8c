#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssgan/data.hpp"
#include "ssgan/models.hpp"
#include "ssgan/tensor.hpp"

namespace ssgan::probes {

struct ProbeConfig {
  int64_t target_dim = 9216;
  double lr = 0.1;
  std::vector<double> lr_candidates{0.01, 0.1, 1.0};  // chosen on the validation split
  double momentum = 0.9;
  int64_t batch_size = 256;
  int64_t epochs = 100;
  int64_t decay_every = 30;
  double decay_factor = 0.1;
  double validation_fraction = 0.1;
  uint64_t seed = 0;
};

struct ProbeResult {
  std::string block;
  double top1 = 0;            // test split
  double validation_top1 = 0;  // held-out part of the training split, at the chosen lr
  double lr = 0;
  int64_t feature_dim = 0;
  int64_t step = 0;            // training step of the probed checkpoint
};

// [N, h, w, c] activations of one published block, computed without
// gradients. Throws std::invalid_argument naming the valid blocks.
TensorF extract_block_features(const models::Discriminator<float>& disc, const TensorF& images,
                               const std::string& block, int64_t batch = 200);

// Largest s with s*s*c <= target_dim, capped at the input's spatial size.
int64_t pooled_grid(int64_t h, int64_t w, int64_t c, int64_t target_dim);

// Adaptive max pooling to an s x s grid, flattened to [N, s*s*c].
TensorF pool_features(const TensorF& features, int64_t target_dim);

// Multinomial logistic regression.
struct LinearProbe {
  Eigen::MatrixXf weight;  // [F, K]
  Eigen::VectorXf bias;    // [K]
  Eigen::VectorXf mean, inv_std;  // training-feature standardization

  Eigen::MatrixXf logits(const TensorF& features) const;
  std::vector<int32_t> predict(const TensorF& features) const;
  double accuracy(const TensorF& features, const Labels& labels) const;
};

// Momentum SGD from zero weights on standardized features, with step decay.
// Used directly this trains at `lr` on every given row.
LinearProbe train_probe(const TensorF& features, const Labels& labels, int num_classes, const ProbeConfig& cfg,
                        double lr);

struct ProbeFit {
  LinearProbe probe;
  ProbeResult result;
};

// Picks lr from cfg.lr_candidates on a seeded held-out fraction of the
// training rows, retrains on all of them and scores on the test rows.
ProbeFit fit_linear_probe(const TensorF& train_features, const Labels& train_labels, const TensorF& test_features,
                          const Labels& test_labels, int num_classes, const ProbeConfig& cfg);

// One result per block, in block order.
std::vector<ProbeResult> probe_all_blocks(const models::Discriminator<float>& disc, const data::Dataset& train,
                                          const data::Dataset& test, const ProbeConfig& cfg, int64_t step = 0);

// Discriminator and metadata of a training checkpoint.
struct LoadedDiscriminator {
  models::Discriminator<float> disc;
  Variant variant;
  uint64_t seed;
  int64_t step;
  std::string config_hash;
};
LoadedDiscriminator load_discriminator(const std::filesystem::path& checkpoint);

struct ProbeRow {
  std::string block;
  std::string variant;
  int64_t step = 0;
  double top1_mean = 0;
  double top1_std = 0;
  int64_t seeds = 0;
  std::string seed_list;  // "0;1;2"
  std::string config_hash;
};

// Mean and sample standard deviation over runs (one result list per seed).
std::vector<ProbeRow> aggregate(const std::vector<std::vector<ProbeResult>>& per_seed,
                                const std::vector<uint64_t>& seeds, const std::string& variant,
                                const std::string& config_hash);
std::string probe_csv(const std::vector<ProbeRow>& rows);

}  // namespace ssgan::probes
