#include "ssgan/losses.hpp"

#include <algorithm>
#include <cmath>

#include "ssgan/ops.hpp"

namespace ssgan::losses {

void LossWeights::validate() const {
  if (alpha < 0) throw ConfigError("alpha must be nonnegative, got " + std::to_string(alpha));
  if (beta < 0) throw ConfigError("beta must be nonnegative, got " + std::to_string(beta));
  if (gp_lambda < 0) throw ConfigError("gp_lambda must be nonnegative, got " + std::to_string(gp_lambda));
}

std::string to_string(LossFamily f) { return f == LossFamily::Hinge ? "hinge" : "cross_entropy"; }

LossFamily parse_loss_family(const std::string& s) {
  if (s == "cross_entropy") return LossFamily::CrossEntropy;
  if (s == "hinge") return LossFamily::Hinge;
  throw ConfigError("unknown loss family '" + s + "' (expected cross_entropy or hinge)");
}

namespace {
template <typename T>
void require_nonempty(const V<T>& x, const char* what) {
  if (!x.defined() || x.size() == 0) throw std::invalid_argument(std::string(what) + ": empty batch");
}
}  // namespace

template <typename T>
V<T> gan_value(const V<T>& real_logits, const V<T>& fake_logits) {
  require_nonempty(real_logits, "gan_value");
  require_nonempty(fake_logits, "gan_value");
  return ops::add(ops::mean(ops::log_sigmoid(real_logits)), ops::mean(ops::log_sigmoid(ops::scale(fake_logits, T{-1}))));
}

template <typename T>
V<T> rotation_term(const V<T>& rot_logits, const std::vector<int32_t>& labels) {
  require_nonempty(rot_logits, "rotation_term");
  if (rot_logits.value().rank() != 2 || rot_logits.dim(1) != 4)
    throw ShapeError("rotation logits must be [N,4], got " + shape_str(rot_logits.shape()));
  for (int32_t l : labels)
    if (l < 0 || l > 3) throw std::out_of_range("rotation label " + std::to_string(l) + " outside 0..3");
  return ops::mean(ops::log_softmax_pick(rot_logits, labels));
}

template <typename T>
V<T> generator_source_loss(const V<T>& fake_logits, LossFamily family) {
  require_nonempty(fake_logits, "generator_source_loss");
  if (family == LossFamily::Hinge) return ops::scale(ops::mean(fake_logits), T{-1});
  return ops::scale(ops::mean(ops::log_sigmoid(fake_logits)), T{-1});
}

template <typename T>
V<T> discriminator_source_loss(const V<T>& real_logits, const V<T>& fake_logits, LossFamily family) {
  if (family == LossFamily::Hinge) {
    require_nonempty(real_logits, "discriminator_source_loss");
    require_nonempty(fake_logits, "discriminator_source_loss");
    V<T> real_term = ops::mean(ops::relu(ops::add_scalar(ops::scale(real_logits, T{-1}), T{1})));
    V<T> fake_term = ops::mean(ops::relu(ops::add_scalar(fake_logits, T{1})));
    return ops::add(real_term, fake_term);
  }
  return ops::scale(gan_value(real_logits, fake_logits), T{-1});
}

template <typename T>
V<T> generator_loss(const V<T>& fake_src_logits, const V<T>& fake_rot_logits,
                    const std::vector<int32_t>& fake_rot_labels, const LossWeights& weights, LossFamily family) {
  weights.validate();
  V<T> loss = generator_source_loss(fake_src_logits, family);
  if (!fake_rot_logits.defined()) return loss;
  return ops::sub(loss, ops::scale(rotation_term(fake_rot_logits, fake_rot_labels), static_cast<T>(weights.alpha)));
}

template <typename T>
V<T> discriminator_loss(const V<T>& real_src_logits, const V<T>& fake_src_logits, const V<T>& real_rot_logits,
                        const std::vector<int32_t>& real_rot_labels, const LossWeights& weights, LossFamily family) {
  weights.validate();
  V<T> loss = discriminator_source_loss(real_src_logits, fake_src_logits, family);
  if (!real_rot_logits.defined()) return loss;
  return ops::sub(loss, ops::scale(rotation_term(real_rot_logits, real_rot_labels), static_cast<T>(weights.beta)));
}

template <typename T>
V<T> gradient_penalty(const V<T>& grad_norms, double lambda) {
  if (lambda < 0) throw ConfigError("gradient penalty lambda must be nonnegative");
  require_nonempty(grad_norms, "gradient_penalty");
  return ops::scale(ops::mean(ops::square(ops::add_scalar(grad_norms, T{-1}))), static_cast<T>(lambda));
}

template <typename T>
V<T> interpolate_gradient_penalty(const models::Discriminator<T>& disc, const Tensor<T>& real, const Tensor<T>& fake,
                                  const std::vector<T>& eps, double lambda, const Labels* labels,
                                  Tensor<T>* norms_out) {
  if (real.shape() != fake.shape()) throw ShapeError("gradient penalty: real/fake shapes differ");
  const int64_t n = real.dim(0);
  if (static_cast<int64_t>(eps.size()) != n) throw ShapeError("gradient penalty: one mixing weight per sample");
  const int64_t per = real.size() / n;
  Tensor<T> mixed(real.shape());
  for (int64_t b = 0; b < n; ++b)
    for (int64_t i = 0; i < per; ++i)
      mixed[b * per + i] = eps[b] * real[b * per + i] + (T{1} - eps[b]) * fake[b * per + i];

  // Per-sample input gradients of the logit (samples do not interact in D).
  Tensor<T> input_grad;
  {
    V<T> x(mixed, true);
    models::DiscriminatorRequest<T> req;
    req.labels = labels;
    auto out = disc.forward(x, req);
    input_grad = ag::grad(ops::sum(out.source), {x})[0];
  }
  Tensor<T> direction(mixed.shape());
  Tensor<T> norms({n});
  for (int64_t b = 0; b < n; ++b) {
    double sq = 0;
    for (int64_t i = 0; i < per; ++i) sq += static_cast<double>(input_grad[b * per + i]) * input_grad[b * per + i];
    const double norm = std::sqrt(sq);
    norms[b] = static_cast<T>(norm);
    const double inv = norm > 1e-12 ? 1.0 / norm : 0.0;
    for (int64_t i = 0; i < per; ++i) direction[b * per + i] = static_cast<T>(input_grad[b * per + i] * inv);
  }
  if (norms_out) *norms_out = norms;

  models::DiscriminatorRequest<T> req;
  req.labels = labels;
  req.tangent = &direction;
  auto out = disc.forward(V<T>(mixed, false), req);
  return gradient_penalty(ops::reshape(out.source_tangent, {n}), lambda);
}

template <typename T>
double rotation_accuracy(const Tensor<T>& rot_logits, const std::vector<int32_t>& labels) {
  const int64_t n = rot_logits.dim(0), k = rot_logits.dim(1);
  if (n == 0) return 0.0;
  int64_t hits = 0;
  for (int64_t r = 0; r < n; ++r) {
    const T* row = rot_logits.data() + r * k;
    const int64_t best = std::max_element(row, row + k) - row;
    hits += best == labels[r];
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

#define SSGAN_INSTANTIATE_LOSSES(T)                                                                              \
  template V<T> gan_value(const V<T>&, const V<T>&);                                                             \
  template V<T> rotation_term(const V<T>&, const std::vector<int32_t>&);                                         \
  template V<T> generator_source_loss(const V<T>&, LossFamily);                                                  \
  template V<T> discriminator_source_loss(const V<T>&, const V<T>&, LossFamily);                                 \
  template V<T> generator_loss(const V<T>&, const V<T>&, const std::vector<int32_t>&, const LossWeights&,        \
                               LossFamily);                                                                      \
  template V<T> discriminator_loss(const V<T>&, const V<T>&, const V<T>&, const std::vector<int32_t>&,           \
                                   const LossWeights&, LossFamily);                                              \
  template V<T> gradient_penalty(const V<T>&, double);                                                           \
  template V<T> interpolate_gradient_penalty(const models::Discriminator<T>&, const Tensor<T>&, const Tensor<T>&, \
                                             const std::vector<T>&, double, const Labels*, Tensor<T>*);          \
  template double rotation_accuracy(const Tensor<T>&, const std::vector<int32_t>&);

SSGAN_INSTANTIATE_LOSSES(float)
SSGAN_INSTANTIATE_LOSSES(double)

}  // namespace ssgan::losses
