#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "ssgan/data.hpp"
#include "ssgan/layers.hpp"
#include "ssgan/tensor.hpp"

namespace ssgan::metrics {

struct GaussianStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};

// Column means and the unbiased covariance (divisor N - 1), symmetrized.
// Requires N >= 2.
GaussianStats gaussian_stats(const TensorD& features);

// Symmetry tolerance for matrix_sqrt_spd, relative to max(1, max|a_ij|).
inline constexpr double kSymmetryTolerance = 1e-8;

// Principal square root of a symmetric PSD matrix via eigendecomposition;
// negative eigenvalues are clamped to zero.
Eigen::MatrixXd matrix_sqrt_spd(const Eigen::MatrixXd& a);

// ||mu_x - mu_g||^2 + Tr(S_x + S_g) - 2 Tr((S_x^1/2 S_g S_x^1/2)^1/2).
// Results in (-1e-6, 0) are clamped to 0.
double frechet_distance(const GaussianStats& x, const GaussianStats& g);

struct ExtractorSpec {
  int64_t image_size = 32;
  int64_t channels = 3;
  int64_t num_classes = 10;
  int64_t width = 32;
  int64_t embed_dim = 256;
  uint64_t seed = 0;
};

struct ExtractorTraining {
  int64_t epochs = 8;
  int64_t batch_size = 128;
  double lr = 1e-3;
  uint64_t seed = 0;
};

// Small classifier CNN whose penultimate (post-ReLU) layer is the embedding.
// Stride-2 convolutions reduce the image to 4x4 before a dense layer.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(const ExtractorSpec& spec);

  using Progress = std::function<void(int64_t epoch, double loss, double accuracy)>;
  // Trains the classifier; throws once frozen.
  void fit(const data::Dataset& ds, const ExtractorTraining& cfg, const Progress& progress = {});
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  // [N, embed_dim] embeddings; rejects images outside [-1, 1] or of the wrong shape.
  TensorD embed(const TensorF& images, int64_t batch = 200) const;
  ag::VarF logits(const ag::VarF& x) const;
  double accuracy(const data::Dataset& ds) const;

  // Content hash over spec and parameters.
  std::string hash() const;
  const ExtractorSpec& spec() const { return spec_; }

  void save(const std::filesystem::path& path) const;
  static FeatureExtractor load(const std::filesystem::path& path);

 private:
  ag::VarF embedding(const ag::VarF& x) const;
  void check_images(const TensorF& images) const;

  ExtractorSpec spec_;
  nn::ParamRegistry<float> reg_;
  std::vector<nn::Conv2d<float>> convs_;
  std::vector<int64_t> strides_;
  nn::Linear<float> dense_, head_;
  bool frozen_ = false;
};

struct FidResult {
  double fid = 0;
  int64_t n_real = 0;
  int64_t n_fake = 0;
  std::string extractor_hash;
};

FidResult compute_fid(const TensorF& real, const TensorF& fake, const FeatureExtractor& extractor);
// Reuses precomputed real-side statistics.
FidResult compute_fid(const GaussianStats& real, int64_t n_real, const TensorF& fake, const FeatureExtractor& extractor);

}  // namespace ssgan::metrics
