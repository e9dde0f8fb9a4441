#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "pmat/attacks.hpp"
#include "pmat/losses.hpp"
#include "pmat/reweighting.hpp"

namespace pmat {

// kNatural is plain clean-data cross-entropy training (no attack).
enum class ObjectiveKind { kNatural, kAt, kTrades, kMart, kMailAt, kMailTrades, kMailMart };

std::string_view to_string(ObjectiveKind kind);

struct ObjectiveConfig {
  ObjectiveKind kind = ObjectiveKind::kMailAt;
  double tradeoff = 5.0;  // beta of the KL regularizer (TRADES / MART families)

  void validate() const;
  bool reweighted() const;
  bool uses_tradeoff() const;
  // Baseline the reweighted objective reduces to when all weights are one.
  ObjectiveKind baseline() const;
  // Perturbation style the objective trains against: KL ascent for TRADES,
  // cross-entropy ascent otherwise.
  GenerationStyle generation_style() const;
};

// Views into a mini-batch.
struct Batch {
  std::vector<std::span<const double>> inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

struct BatchLossReport {
  double total = 0.0;
  std::vector<double> per_instance;   // weighted contribution of each instance
  WeightVector weights_used;
  std::optional<ModelParams> param_grads;  // set when requested
};

// Per-instance loss of `kind` with instance weight `weight`. Weights scale
// the adversarial CE (AT), the KL term (TRADES) and the BCE term (MART).
LossDefinition instance_loss(ObjectiveKind kind, double tradeoff, double weight);

// -sum_i w_i log p_{y_i}(x_i + delta_i)
BatchLossReport mail_at_loss(const ModelParams& params, const Batch& batch,
                             std::span<const std::vector<double>> deltas,
                             const WeightVector& weights, bool with_grads = false);
// beta sum_i w_i KL(p(x_i + delta_i) || p(x_i)) + sum_i CE(p(x_i), y_i)
BatchLossReport mail_trades_loss(const ModelParams& params, const Batch& batch,
                                 std::span<const std::vector<double>> deltas,
                                 const WeightVector& weights, const ObjectiveConfig& cfg,
                                 bool with_grads = false);
// sum_i w_i BCE(x_i + delta_i, y_i) + beta sum_i MKL(x_i, delta_i)
BatchLossReport mail_mart_loss(const ModelParams& params, const Batch& batch,
                               std::span<const std::vector<double>> deltas,
                               const WeightVector& weights, const ObjectiveConfig& cfg,
                               bool with_grads = false);
// kAt, kTrades, kMart or kNatural with unit weights.
BatchLossReport baseline_loss(ObjectiveKind kind, const ModelParams& params, const Batch& batch,
                              std::span<const std::vector<double>> deltas,
                              const ObjectiveConfig& cfg, bool with_grads = false);

// Dispatch on cfg.kind. Baseline kinds ignore `weights`.
BatchLossReport evaluate_objective(const ModelParams& params, const ObjectiveConfig& cfg,
                                   const Batch& batch, std::span<const std::vector<double>> deltas,
                                   const WeightVector& weights, bool with_grads = false);

}  // namespace pmat
