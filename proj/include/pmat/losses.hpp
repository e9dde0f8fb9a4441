#pragma once

#include <optional>
#include <span>
#include <vector>

#include "pmat/mlp.hpp"

namespace pmat {

// Floor applied to probabilities inside logarithms.
inline constexpr double kProbFloor = 1e-12;

// -log max(p_y, 1e-12). Throws InputError when y is outside [0, K).
double cross_entropy(std::span<const double> probs, int y);
// sum_k p_k log(p_k / max(q_k, 1e-12)); terms with p_k = 0 contribute 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);
// -log p_y - log(1 - max_{k != y} p_k), both logs floored.
double boosted_cross_entropy(std::span<const double> probs, int y);
// KL(p_adv || p_nat) * (1 - p_nat[y]).
double misclassification_aware_kl(std::span<const double> p_adv,
                                  std::span<const double> p_nat, int y);
// max_{k != y} z_k - z_y on logits.
double cw_margin_loss(std::span<const double> logits, int y);

// Scalar per-instance losses. "Adv" terms read the model at x + delta,
// "Nat" terms at x.
enum class LossTerm {
  kCrossEntropyAdv,
  kCrossEntropyNat,
  kKlAdvNat,                // KL(p(x + delta) || p(x))
  kCwMarginAdv,
  kBoostedCrossEntropyAdv,
  kMisclassAwareKl,         // KL(p(x + delta) || p(x)) * (1 - p_y(x))
  kConstant,                // contributes coef, zero gradient
};

struct WeightedTerm {
  LossTerm term;
  double coef = 1.0;
};

// A scalar loss as a weighted sum of terms for one (x, delta, y).
using LossDefinition = std::vector<WeightedTerm>;

struct GradBundle {
  ModelParams param_grads;          // same shape as the model
  std::vector<double> input_grad;   // d loss / d delta (equivalently d/dx for Adv terms)
};

struct LossEvaluation {
  double value = 0.0;
  ForwardResult adv;                 // outputs at x + delta
  std::optional<ForwardResult> nat;  // outputs at x, when some term needs them
  GradBundle grads;                  // empty members when not requested
};

struct GradRequest {
  bool params = false;
  bool input = false;
};

// Evaluates `loss` and, on request, its exact gradients. An empty `delta`
// means zero perturbation.
LossEvaluation evaluate_loss(const ModelParams& params, std::span<const double> x,
                             std::span<const double> delta, int y,
                             const LossDefinition& loss, GradRequest request);

// Parameter and input gradients of `loss`.
GradBundle backward(const ModelParams& params, std::span<const double> x,
                    std::span<const double> delta, int y, const LossDefinition& loss);

}  // namespace pmat
