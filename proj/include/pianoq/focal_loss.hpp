#pragma once

// Multi-class focal loss with inverse-frequency class weights.
//
//   FL(p_t) = -alpha_t * (1 - p_t)^gamma * ln(p_t)
//
// With one-hot targets the sum over classes reduces to the target term.
// gamma = 0 gives alpha-weighted cross-entropy.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "pianoq/error.hpp"

namespace pianoq {

inline constexpr double kProbabilityClamp = 1e-12;

/// Per-class weights in [0, 1] summing to one.
class ClassWeights {
 public:
  ClassWeights() = default;

  explicit ClassWeights(std::vector<double> alphas) : alphas_(std::move(alphas)) {
    if (alphas_.size() < 2) throw Error(ErrorCode::TooFewClasses, "need at least two classes");
    double sum = 0.0;
    for (double a : alphas_) {
      if (!(a >= 0.0 && a <= 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha outside [0, 1]");
      sum += a;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw Error(ErrorCode::InvalidArgument, "alphas must sum to 1");
  }

  static ClassWeights uniform(std::size_t k) { return ClassWeights(std::vector<double>(k, 1.0 / static_cast<double>(k))); }

  std::span<const double> alphas() const noexcept { return alphas_; }
  double operator[](std::size_t i) const { return alphas_.at(i); }
  std::size_t size() const noexcept { return alphas_.size(); }

 private:
  std::vector<double> alphas_;
};

/// alpha_i = (1 / s_i) / sum_j (1 / s_j)
inline ClassWeights compute_alphas(std::span<const std::size_t> counts) {
  if (counts.size() < 2) throw Error(ErrorCode::TooFewClasses, "need at least two classes");
  double inv_sum = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) throw Error(ErrorCode::ZeroCount, "every class needs at least one sample");
    inv_sum += 1.0 / static_cast<double>(c);
  }
  std::vector<double> alphas;
  alphas.reserve(counts.size());
  for (std::size_t c : counts) alphas.push_back((1.0 / static_cast<double>(c)) / inv_sum);
  return ClassWeights(std::move(alphas));
}

struct FocalLossConfig {
  ClassWeights weights;
  double gamma = 0.0;

  FocalLossConfig() = default;
  FocalLossConfig(ClassWeights w, double g) : weights(std::move(w)), gamma(g) {
    if (!(gamma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma must be non-negative");
  }
};

inline double focal_loss(double p_target, double alpha, double gamma) {
  const double p = std::max(p_target, kProbabilityClamp);
  return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
}

inline double focal_loss(std::span<const double> probs, std::size_t target, const FocalLossConfig& config) {
  if (target >= probs.size() || target >= config.weights.size()) {
    throw Error(ErrorCode::InvalidArgument, "target class out of range");
  }
  return focal_loss(probs[target], config.weights[target], config.gamma);
}

/// d FL / d p_t multiplied by p_t; zero inside the clamp region.
inline double focal_loss_dp_times_p(double p_target, double alpha, double gamma) {
  if (p_target < kProbabilityClamp) return 0.0;
  const double q = 1.0 - p_target;
  if (q <= 0.0) return gamma == 0.0 ? -alpha : 0.0;
  const double modulating = std::pow(q, gamma);
  double term = -modulating;
  if (gamma != 0.0) term += gamma * std::pow(q, gamma - 1.0) * p_target * std::log(p_target);
  return alpha * term;
}

/// Gradient of the focal loss with respect to the softmax logits.
inline void focal_loss_logit_grad(std::span<const double> probs, std::size_t target, const FocalLossConfig& config,
                                  std::span<double> grad_out) {
  const double g = focal_loss_dp_times_p(probs[target], config.weights[target], config.gamma);
  for (std::size_t j = 0; j < probs.size(); ++j) {
    grad_out[j] = g * ((j == target ? 1.0 : 0.0) - probs[j]);
  }
}

}  // namespace pianoq
