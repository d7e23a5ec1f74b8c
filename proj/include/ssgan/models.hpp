#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssgan/layers.hpp"
#include "ssgan/random.hpp"

namespace ssgan {

enum class Variant { SnGan, PcGan, SsGan, SsGanSbn, RotationOnly };
enum class NormMode { PlainBn, SelfModulatedBn, LabelConditionalBn };
enum class Regularizer { SpectralNorm, GradientPenalty, None };

std::string to_string(Variant v);
std::string to_string(Regularizer r);
Variant parse_variant(const std::string& s);
Regularizer parse_regularizer(const std::string& s);

bool uses_rotation(Variant v);
bool uses_labels(Variant v);
NormMode norm_mode_for(Variant v);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Desk-scale ResNet dimensions.
struct ArchSpec {
  int64_t image_size = 32;
  int64_t channels = 3;
  int64_t z_dim = 128;
  int64_t g_width = 128;
  int64_t d_width = 128;
  int64_t sbn_hidden = 32;
  int64_t num_classes = 10;
};

struct ModelConfig {
  Variant variant = Variant::SsGan;
  Regularizer regularizer = Regularizer::SpectralNorm;
  ArchSpec arch;
  bool labeled_dataset = true;
  uint64_t seed = 0;
};

struct BlockInfo {
  std::string name;
  Shape shape;  // [h, w, c] per sample
};

namespace models {

template <typename T>
using V = ag::Var<T>;

// Batch norm whose per-channel scale/shift are learned constants, predicted
// from z by a one-hidden-layer MLP, or looked up by class label.
template <typename T>
class GeneratorNorm {
 public:
  GeneratorNorm() = default;
  GeneratorNorm(nn::ParamRegistry<T>& reg, const std::string& name, int64_t channels, NormMode mode,
                const ArchSpec& arch);

  V<T> operator()(const V<T>& h, const V<T>& z, const Labels* labels) const;

  // Exposed for tests of the modulation map.
  V<T> modulation_gamma(const V<T>& z) const;
  V<T> modulation_beta(const V<T>& z) const;

 private:
  NormMode mode_ = NormMode::PlainBn;
  int64_t num_classes_ = 0;
  V<T> gamma_, beta_;  // [C] for plain, [K, C] for label-conditional
  nn::Linear<T> hidden_, to_gamma_, to_beta_;
};

// h is batch-normalized, then scaled/shifted by gamma(z) = 1 + A(z) and
// beta(z) = B(z) where A, B share a ReLU hidden layer.
template <typename T>
V<T> self_modulated_bn(const V<T>& h, const V<T>& gamma, const V<T>& beta, T eps = T(1e-5));

template <typename T>
class Generator {
 public:
  explicit Generator(const ModelConfig& cfg);
  Generator(Generator&&) noexcept = default;
  Generator& operator=(Generator&&) noexcept = default;
  Generator(const Generator&) = delete;
  Generator& operator=(const Generator&) = delete;

  // z: [N, z_dim]; labels required for label-conditional norm. Output in [-1, 1].
  V<T> forward(const V<T>& z, const Labels* labels = nullptr) const;
  Tensor<T> sample_latent(int64_t n, Rng& rng) const;

  nn::ParamRegistry<T>& registry() { return reg_; }
  const nn::ParamRegistry<T>& registry() const { return reg_; }
  NormMode norm_mode() const { return mode_; }
  const ArchSpec& arch() const { return arch_; }

 private:
  struct UpBlock {
    GeneratorNorm<T> norm1, norm2;
    nn::Conv2d<T> conv1, conv2, shortcut;
  };

  ArchSpec arch_;
  NormMode mode_;
  nn::ParamRegistry<T> reg_;
  nn::Linear<T> input_;
  std::vector<UpBlock> blocks_;
  GeneratorNorm<T> final_norm_;
  nn::Conv2d<T> output_;
};

template <typename T>
struct DiscriminatorOutput {
  V<T> source;          // [N, 1]
  V<T> source_tangent;  // [N, 1]: directional derivative of `source` along the tangent
  V<T> rotation;        // [N, 4]
  V<T> features;        // [N, d_width] pooled trunk output
  std::vector<V<T>> blocks;
};

template <typename T>
struct DiscriminatorRequest {
  bool rotation = false;
  bool blocks = false;
  const Labels* labels = nullptr;
  // When set, also propagates this input tangent (same shape as x) to the
  // source logit; the result stays differentiable in the parameters.
  const Tensor<T>* tangent = nullptr;
};

// Projection discriminator logit: head(features) + <embedding[label], features>.
template <typename T>
V<T> pcgan_logit(const V<T>& features, const Labels& labels, const nn::Linear<T>& head, const V<T>& embedding);

template <typename T>
class Discriminator {
 public:
  static constexpr int kNumBlocks = 4;

  explicit Discriminator(const ModelConfig& cfg);
  Discriminator(Discriminator&&) noexcept = default;
  Discriminator& operator=(Discriminator&&) noexcept = default;
  Discriminator(const Discriminator&) = delete;
  Discriminator& operator=(const Discriminator&) = delete;

  DiscriminatorOutput<T> forward(const V<T>& x, const DiscriminatorRequest<T>& req = {}) const;

  // One power iteration for every spectrally normalized weight.
  void update_spectral_norms();

  bool has_rotation_head() const { return has_rotation_; }
  bool has_projection() const { return has_projection_; }
  std::vector<BlockInfo> block_info() const;
  std::vector<std::string> block_names() const;

  nn::ParamRegistry<T>& registry() { return reg_; }
  const nn::ParamRegistry<T>& registry() const { return reg_; }
  const ArchSpec& arch() const { return arch_; }

 private:
  struct Block {
    nn::Conv2d<T> conv1, conv2, shortcut;
    bool optimized = false;   // first block: no leading ReLU, pooled shortcut input
    bool downsample = false;
    bool learn_shortcut = false;
  };

  ArchSpec arch_;
  nn::ParamRegistry<T> reg_;
  std::vector<Block> blocks_;
  nn::Linear<T> source_head_, rotation_head_;
  nn::SpectralWeight<T> embedding_;
  bool has_rotation_ = false;
  bool has_projection_ = false;
};

template <typename T>
struct ModelPair {
  Generator<T> generator;
  Discriminator<T> discriminator;
};

// Throws ConfigError for a conditional variant without a labeled dataset or
// an image size the ResNet cannot tile.
template <typename T>
ModelPair<T> build_models(const ModelConfig& cfg);

void validate(const ModelConfig& cfg);

}  // namespace models
}  // namespace ssgan
