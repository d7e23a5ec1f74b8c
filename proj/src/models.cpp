#include "ssgan/models.hpp"

#include <stdexcept>

#include "ssgan/ops.hpp"
#include "ssgan/rotation.hpp"

namespace ssgan {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::SnGan: return "sn_gan";
    case Variant::PcGan: return "pcgan";
    case Variant::SsGan: return "ssgan";
    case Variant::SsGanSbn: return "ssgan_sbn";
    case Variant::RotationOnly: return "rotation_only";
  }
  return "?";
}

std::string to_string(Regularizer r) {
  switch (r) {
    case Regularizer::SpectralNorm: return "spectral_norm";
    case Regularizer::GradientPenalty: return "gradient_penalty";
    case Regularizer::None: return "none";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::SnGan, Variant::PcGan, Variant::SsGan, Variant::SsGanSbn, Variant::RotationOnly})
    if (to_string(v) == s) return v;
  throw ConfigError("unknown variant '" + s + "' (expected sn_gan, pcgan, ssgan, ssgan_sbn, rotation_only)");
}

Regularizer parse_regularizer(const std::string& s) {
  for (Regularizer r : {Regularizer::SpectralNorm, Regularizer::GradientPenalty, Regularizer::None})
    if (to_string(r) == s) return r;
  throw ConfigError("unknown regularizer '" + s + "' (expected spectral_norm, gradient_penalty, none)");
}

bool uses_rotation(Variant v) {
  return v == Variant::SsGan || v == Variant::SsGanSbn || v == Variant::RotationOnly;
}

bool uses_labels(Variant v) { return v == Variant::PcGan; }

NormMode norm_mode_for(Variant v) {
  switch (v) {
    case Variant::PcGan: return NormMode::LabelConditionalBn;
    case Variant::SsGanSbn: return NormMode::SelfModulatedBn;
    default: return NormMode::PlainBn;
  }
}

namespace models {

void validate(const ModelConfig& cfg) {
  const auto& a = cfg.arch;
  if (uses_labels(cfg.variant) && !cfg.labeled_dataset)
    throw ConfigError("variant pcgan needs a labeled dataset");
  if (a.image_size < 8 || a.image_size % 4 != 0)
    throw ConfigError("image_size must be a multiple of 4 and at least 8, got " + std::to_string(a.image_size));
  int64_t s = a.image_size / 4;
  while (s > 1 && s % 2 == 0) s /= 2;
  if (s != 1) throw ConfigError("image_size / 4 must be a power of two, got " + std::to_string(a.image_size));
  if (a.channels < 1 || a.z_dim < 1 || a.g_width < 1 || a.d_width < 1 || a.sbn_hidden < 1)
    throw ConfigError("architecture widths must be positive");
  if (uses_labels(cfg.variant) && a.num_classes < 2) throw ConfigError("pcgan needs num_classes >= 2");
}

template <typename T>
V<T> self_modulated_bn(const V<T>& h, const V<T>& gamma, const V<T>& beta, T eps) {
  return ops::channel_affine(ops::batch_norm(h, eps), gamma, beta);
}

template <typename T>
GeneratorNorm<T>::GeneratorNorm(nn::ParamRegistry<T>& reg, const std::string& name, int64_t channels, NormMode mode,
                                const ArchSpec& arch)
    : mode_(mode), num_classes_(arch.num_classes) {
  switch (mode) {
    case NormMode::PlainBn:
      gamma_ = reg.parameter(name + ".gamma", {channels}, nn::Init::Ones);
      beta_ = reg.parameter(name + ".beta", {channels}, nn::Init::Zeros);
      break;
    case NormMode::LabelConditionalBn:
      gamma_ = reg.parameter(name + ".gamma", {arch.num_classes, channels}, nn::Init::Ones);
      beta_ = reg.parameter(name + ".beta", {arch.num_classes, channels}, nn::Init::Zeros);
      break;
    case NormMode::SelfModulatedBn:
      hidden_ = nn::Linear<T>(reg, name + ".mod_hidden", arch.z_dim, arch.sbn_hidden, false);
      to_gamma_ = nn::Linear<T>(reg, name + ".mod_gamma", arch.sbn_hidden, channels, false);
      to_beta_ = nn::Linear<T>(reg, name + ".mod_beta", arch.sbn_hidden, channels, false);
      break;
  }
}

template <typename T>
V<T> GeneratorNorm<T>::modulation_gamma(const V<T>& z) const {
  return ops::add_scalar(to_gamma_(ops::relu(hidden_(z))), T{1});
}

template <typename T>
V<T> GeneratorNorm<T>::modulation_beta(const V<T>& z) const {
  return to_beta_(ops::relu(hidden_(z)));
}

template <typename T>
V<T> GeneratorNorm<T>::operator()(const V<T>& h, const V<T>& z, const Labels* labels) const {
  constexpr T eps = T(1e-5);
  switch (mode_) {
    case NormMode::PlainBn:
      return ops::channel_affine(ops::batch_norm(h, eps), gamma_, beta_);
    case NormMode::LabelConditionalBn: {
      if (!labels) throw std::invalid_argument("label-conditional batch norm needs labels");
      std::vector<int64_t> rows(labels->begin(), labels->end());
      for (int64_t r : rows)
        if (r < 0 || r >= num_classes_) throw std::out_of_range("class label " + std::to_string(r) + " out of range");
      return ops::channel_affine(ops::batch_norm(h, eps), ops::gather_rows(gamma_, rows),
                                 ops::gather_rows(beta_, rows));
    }
    case NormMode::SelfModulatedBn: {
      V<T> hidden = ops::relu(hidden_(z));
      return self_modulated_bn(h, ops::add_scalar(to_gamma_(hidden), T{1}), to_beta_(hidden), eps);
    }
  }
  return h;
}

template <typename T>
Generator<T>::Generator(const ModelConfig& cfg)
    : arch_(cfg.arch), mode_(norm_mode_for(cfg.variant)), reg_(derive_seed(cfg.seed, "generator")) {
  validate(cfg);
  const int64_t w = arch_.g_width;
  input_ = nn::Linear<T>(reg_, "g.input", arch_.z_dim, 4 * 4 * w, false);
  for (int64_t size = 4, i = 0; size < arch_.image_size; size *= 2, ++i) {
    const std::string p = "g.block" + std::to_string(i);
    UpBlock b;
    b.norm1 = GeneratorNorm<T>(reg_, p + ".norm1", w, mode_, arch_);
    b.conv1 = nn::Conv2d<T>(reg_, p + ".conv1", w, w, 3, 1, 1, false);
    b.norm2 = GeneratorNorm<T>(reg_, p + ".norm2", w, mode_, arch_);
    b.conv2 = nn::Conv2d<T>(reg_, p + ".conv2", w, w, 3, 1, 1, false);
    b.shortcut = nn::Conv2d<T>(reg_, p + ".shortcut", w, w, 1, 1, 0, false);
    blocks_.push_back(std::move(b));
  }
  final_norm_ = GeneratorNorm<T>(reg_, "g.final_norm", w, mode_, arch_);
  output_ = nn::Conv2d<T>(reg_, "g.output", w, arch_.channels, 3, 1, 1, false);
}

template <typename T>
V<T> Generator<T>::forward(const V<T>& z, const Labels* labels) const {
  if (z.value().rank() != 2 || z.dim(1) != arch_.z_dim)
    throw ShapeError("generator latent must be [N," + std::to_string(arch_.z_dim) + "], got " + shape_str(z.shape()));
  if (mode_ == NormMode::LabelConditionalBn && (!labels || static_cast<int64_t>(labels->size()) != z.dim(0)))
    throw std::invalid_argument("conditional generator needs one label per latent");
  const int64_t n = z.dim(0), w = arch_.g_width;
  V<T> x = ops::reshape(input_(z), {n, 4, 4, w});
  for (const auto& b : blocks_) {
    V<T> h = ops::relu(b.norm1(x, z, labels));
    h = b.conv1(ops::upsample2(h));
    h = b.conv2(ops::relu(b.norm2(h, z, labels)));
    x = ops::add(h, b.shortcut(ops::upsample2(x)));
  }
  return ops::tanh(output_(ops::relu(final_norm_(x, z, labels))));
}

template <typename T>
Tensor<T> Generator<T>::sample_latent(int64_t n, Rng& rng) const {
  return rng.normal_tensor<T>({n, arch_.z_dim});
}

template <typename T>
V<T> pcgan_logit(const V<T>& features, const Labels& labels, const nn::Linear<T>& head, const V<T>& embedding) {
  const int64_t k = embedding.dim(0);
  std::vector<int64_t> rows;
  rows.reserve(labels.size());
  for (int32_t l : labels) {
    if (l < 0 || l >= k)
      throw std::out_of_range("class label " + std::to_string(l) + " outside [0," + std::to_string(k) + ")");
    rows.push_back(l);
  }
  return ops::add(head(features), ops::rowwise_dot(ops::gather_rows(embedding, rows), features));
}

template <typename T>
Discriminator<T>::Discriminator(const ModelConfig& cfg)
    : arch_(cfg.arch), reg_(derive_seed(cfg.seed, "discriminator")) {
  validate(cfg);
  const bool sn = cfg.regularizer == Regularizer::SpectralNorm;
  const int64_t w = arch_.d_width;
  for (int i = 0; i < kNumBlocks; ++i) {
    const std::string p = "d.block" + std::to_string(i);
    const int64_t in = i == 0 ? arch_.channels : w;
    Block b;
    b.optimized = i == 0;
    b.downsample = i < 2;
    b.learn_shortcut = i < 2;
    b.conv1 = nn::Conv2d<T>(reg_, p + ".conv1", in, w, 3, 1, 1, sn);
    b.conv2 = nn::Conv2d<T>(reg_, p + ".conv2", w, w, 3, 1, 1, sn);
    if (b.learn_shortcut) b.shortcut = nn::Conv2d<T>(reg_, p + ".shortcut", in, w, 1, 1, 0, sn);
    blocks_.push_back(std::move(b));
  }
  source_head_ = nn::Linear<T>(reg_, "d.source_head", w, 1, sn);
  has_rotation_ = uses_rotation(cfg.variant);
  if (has_rotation_) rotation_head_ = nn::Linear<T>(reg_, "d.rotation_head", w, rotation::kNumRotations, sn);
  has_projection_ = uses_labels(cfg.variant);
  if (has_projection_) embedding_ = nn::SpectralWeight<T>(reg_, "d.embedding", {arch_.num_classes, w}, sn);
}

namespace {

// A value plus an optional tangent carried through piecewise-linear layers.
template <typename T>
struct Signal {
  V<T> x;
  V<T> dx;
  bool tangent() const { return dx.defined(); }
};

template <typename T>
Signal<T> conv(const nn::Conv2d<T>& c, const Signal<T>& s) {
  return {c(s.x), s.tangent() ? c.linear_part(s.dx) : V<T>()};
}

template <typename T>
Signal<T> relu(const Signal<T>& s) {
  return {ops::relu(s.x), s.tangent() ? ops::mul_const(s.dx, ops::relu_mask(s.x.value())) : V<T>()};
}

template <typename T>
Signal<T> pool(const Signal<T>& s) {
  return {ops::avg_pool2(s.x), s.tangent() ? ops::avg_pool2(s.dx) : V<T>()};
}

template <typename T>
Signal<T> add(const Signal<T>& a, const Signal<T>& b) {
  return {ops::add(a.x, b.x), a.tangent() ? ops::add(a.dx, b.dx) : V<T>()};
}

}  // namespace

template <typename T>
DiscriminatorOutput<T> Discriminator<T>::forward(const V<T>& x, const DiscriminatorRequest<T>& req) const {
  if (x.value().rank() != 4 || x.dim(1) != arch_.image_size || x.dim(2) != arch_.image_size ||
      x.dim(3) != arch_.channels)
    throw ShapeError("discriminator input must be [N," + std::to_string(arch_.image_size) + "," +
                     std::to_string(arch_.image_size) + "," + std::to_string(arch_.channels) + "], got " +
                     shape_str(x.shape()));
  Signal<T> s{x, V<T>()};
  if (req.tangent) {
    if (req.tangent->shape() != x.shape()) throw ShapeError("tangent shape must match the input");
    s.dx = V<T>(*req.tangent, false);
  }

  DiscriminatorOutput<T> out;
  for (const auto& b : blocks_) {
    Signal<T> h = b.optimized ? s : relu(s);
    h = conv(b.conv2, relu(conv(b.conv1, h)));
    Signal<T> sc = s;
    if (b.downsample) h = pool(h);
    if (b.optimized) {
      sc = conv(b.shortcut, pool(s));
    } else if (b.learn_shortcut) {
      sc = conv(b.shortcut, s);
      if (b.downsample) sc = pool(sc);
    }
    s = add(h, sc);
    if (req.blocks) out.blocks.push_back(s.x);
  }
  Signal<T> act = relu(s);
  out.features = ops::global_sum_pool(act.x);
  V<T> dfeat = s.tangent() ? ops::global_sum_pool(act.dx) : V<T>();

  if (has_projection_) {
    if (!req.labels) throw std::invalid_argument("projection discriminator needs labels");
    const V<T> emb = embedding_.effective();
    out.source = pcgan_logit(out.features, *req.labels, source_head_, emb);
    if (dfeat.defined()) {
      std::vector<int64_t> rows(req.labels->begin(), req.labels->end());
      out.source_tangent =
          ops::add(source_head_.linear_part(dfeat), ops::rowwise_dot(ops::gather_rows(emb, rows), dfeat));
    }
  } else {
    out.source = source_head_(out.features);
    if (dfeat.defined()) out.source_tangent = source_head_.linear_part(dfeat);
  }
  if (req.rotation) {
    if (!has_rotation_) throw std::logic_error("this discriminator has no rotation head");
    out.rotation = rotation_head_(out.features);
  }
  return out;
}

template <typename T>
void Discriminator<T>::update_spectral_norms() {
  for (auto& b : blocks_) {
    b.conv1.power_iteration();
    b.conv2.power_iteration();
    if (b.learn_shortcut) b.shortcut.power_iteration();
  }
  source_head_.power_iteration();
  if (has_rotation_) rotation_head_.power_iteration();
  if (has_projection_) embedding_.power_iteration();
}

template <typename T>
std::vector<BlockInfo> Discriminator<T>::block_info() const {
  std::vector<BlockInfo> info;
  int64_t size = arch_.image_size;
  for (int i = 0; i < kNumBlocks; ++i) {
    if (blocks_[i].downsample) size /= 2;
    info.push_back({"block" + std::to_string(i), {size, size, arch_.d_width}});
  }
  return info;
}

template <typename T>
std::vector<std::string> Discriminator<T>::block_names() const {
  std::vector<std::string> names;
  for (const auto& b : block_info()) names.push_back(b.name);
  return names;
}

template <typename T>
ModelPair<T> build_models(const ModelConfig& cfg) {
  validate(cfg);
  return ModelPair<T>{Generator<T>(cfg), Discriminator<T>(cfg)};
}

template class GeneratorNorm<float>;
template class GeneratorNorm<double>;
template V<float> self_modulated_bn(const V<float>&, const V<float>&, const V<float>&, float);
template V<double> self_modulated_bn(const V<double>&, const V<double>&, const V<double>&, double);
template class Generator<float>;
template class Generator<double>;
template V<float> pcgan_logit(const V<float>&, const Labels&, const nn::Linear<float>&, const V<float>&);
template V<double> pcgan_logit(const V<double>&, const Labels&, const nn::Linear<double>&, const V<double>&);
template class Discriminator<float>;
template class Discriminator<double>;
template ModelPair<float> build_models<float>(const ModelConfig&);
template ModelPair<double> build_models<double>(const ModelConfig&);

}  // namespace models
}  // namespace ssgan
