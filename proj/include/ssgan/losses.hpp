#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssgan/autograd.hpp"
#include "ssgan/models.hpp"

namespace ssgan::losses {

template <typename T>
using V = ag::Var<T>;

struct LossWeights {
  double alpha = 0.2;      // generator rotation weight
  double beta = 1.0;       // discriminator rotation weight
  double gp_lambda = 0.0;  // gradient penalty strength

  // Throws ConfigError on a negative weight.
  void validate() const;
};

enum class LossFamily { CrossEntropy, Hinge };

std::string to_string(LossFamily f);
LossFamily parse_loss_family(const std::string& s);

// mean(log sigmoid(real)) + mean(log(1 - sigmoid(fake))).
template <typename T>
V<T> gan_value(const V<T>& real_logits, const V<T>& fake_logits);

// Mean log-probability of the true rotation under softmax(rot_logits[N,4]).
template <typename T>
V<T> rotation_term(const V<T>& rot_logits, const std::vector<int32_t>& labels);

// Non-saturating generator objective -mean(log sigmoid(fake)), or -mean(fake) for hinge.
template <typename T>
V<T> generator_source_loss(const V<T>& fake_logits, LossFamily family = LossFamily::CrossEntropy);

// -V(G, D) for cross-entropy; mean(relu(1 - real)) + mean(relu(1 + fake)) for hinge.
template <typename T>
V<T> discriminator_source_loss(const V<T>& real_logits, const V<T>& fake_logits,
                               LossFamily family = LossFamily::CrossEntropy);

// Source loss - alpha * rotation_term on rotated fakes. An undefined
// fake_rot_logits means the rotation term is absent.
template <typename T>
V<T> generator_loss(const V<T>& fake_src_logits, const V<T>& fake_rot_logits,
                    const std::vector<int32_t>& fake_rot_labels, const LossWeights& weights,
                    LossFamily family = LossFamily::CrossEntropy);

// Source loss - beta * rotation_term on rotated reals.
template <typename T>
V<T> discriminator_loss(const V<T>& real_src_logits, const V<T>& fake_src_logits,
                        const V<T>& real_rot_logits, const std::vector<int32_t>& real_rot_labels,
                        const LossWeights& weights, LossFamily family = LossFamily::CrossEntropy);

// lambda * mean((norm - 1)^2).
template <typename T>
V<T> gradient_penalty(const V<T>& grad_norms, double lambda);

// Penalty on x_hat = eps * real + (1 - eps) * fake with one eps per sample.
// The input-gradient norm is obtained as the directional derivative of the
// logit along its own normalized input gradient, which keeps the penalty
// differentiable in the discriminator parameters.
template <typename T>
V<T> interpolate_gradient_penalty(const models::Discriminator<T>& disc, const Tensor<T>& real,
                                  const Tensor<T>& fake, const std::vector<T>& eps, double lambda,
                                  const Labels* labels = nullptr, Tensor<T>* norms_out = nullptr);

// Fraction of rows whose arg-max matches the label.
template <typename T>
double rotation_accuracy(const Tensor<T>& rot_logits, const std::vector<int32_t>& labels);

}  // namespace ssgan::losses
