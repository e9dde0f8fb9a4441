#include "pmat/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "pmat/errors.hpp"

namespace pmat {
namespace {

WeightVector unit_weights(std::size_t m) { return {std::vector<double>(m, 1.0), true, false}; }

BatchLossReport run(const ModelParams& params, ObjectiveKind kind, double tradeoff,
                    const Batch& batch, std::span<const std::vector<double>> deltas,
                    const WeightVector& weights, bool with_grads) {
  const std::size_t m = batch.size();
  if (batch.inputs.size() != m) throw InputError("batch inputs and labels differ in length");
  if (weights.weights.size() != m) {
    throw InputError("weight vector has " + std::to_string(weights.weights.size()) +
                     " entries for a batch of " + std::to_string(m));
  }
  if (kind != ObjectiveKind::kNatural && deltas.size() != m) {
    throw InputError("perturbation count does not match batch size");
  }
  BatchLossReport report;
  report.weights_used = weights;
  report.per_instance.reserve(m);
  if (with_grads) report.param_grads = ModelParams(params.dims(), params.hidden_activation());
  for (std::size_t i = 0; i < m; ++i) {
    const LossDefinition loss = instance_loss(kind, tradeoff, weights.weights[i]);
    std::span<const double> delta;
    if (kind != ObjectiveKind::kNatural) delta = deltas[i];
    LossEvaluation ev = evaluate_loss(params, batch.inputs[i], delta, batch.labels[i], loss,
                                      {with_grads, false});
    report.per_instance.push_back(ev.value);
    report.total += ev.value;
    if (with_grads) {
      auto acc = report.param_grads->values();
      auto g = ev.grads.param_grads.values();
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
    }
  }
  if (!std::isfinite(report.total)) throw NumericError("non-finite batch loss");
  return report;
}

}  // namespace

std::string_view to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kNatural: return "natural";
    case ObjectiveKind::kAt: return "at";
    case ObjectiveKind::kTrades: return "trades";
    case ObjectiveKind::kMart: return "mart";
    case ObjectiveKind::kMailAt: return "mail_at";
    case ObjectiveKind::kMailTrades: return "mail_trades";
    case ObjectiveKind::kMailMart: return "mail_mart";
  }
  return "unknown";
}

void ObjectiveConfig::validate() const {
  if (uses_tradeoff() && !(tradeoff > 0.0)) throw ConfigError("trade-off must be positive");
}

bool ObjectiveConfig::reweighted() const {
  return kind == ObjectiveKind::kMailAt || kind == ObjectiveKind::kMailTrades ||
         kind == ObjectiveKind::kMailMart;
}

bool ObjectiveConfig::uses_tradeoff() const {
  return kind == ObjectiveKind::kTrades || kind == ObjectiveKind::kMart ||
         kind == ObjectiveKind::kMailTrades || kind == ObjectiveKind::kMailMart;
}

ObjectiveKind ObjectiveConfig::baseline() const {
  switch (kind) {
    case ObjectiveKind::kMailAt: return ObjectiveKind::kAt;
    case ObjectiveKind::kMailTrades: return ObjectiveKind::kTrades;
    case ObjectiveKind::kMailMart: return ObjectiveKind::kMart;
    default: return kind;
  }
}

GenerationStyle ObjectiveConfig::generation_style() const {
  const ObjectiveKind base = baseline();
  return base == ObjectiveKind::kTrades ? GenerationStyle::kTradesStyle : GenerationStyle::kAtStyle;
}

LossDefinition instance_loss(ObjectiveKind kind, double tradeoff, double weight) {
  switch (kind) {
    case ObjectiveKind::kNatural:
      return {{LossTerm::kCrossEntropyAdv, weight}};
    case ObjectiveKind::kAt:
    case ObjectiveKind::kMailAt:
      return {{LossTerm::kCrossEntropyAdv, weight}};
    case ObjectiveKind::kTrades:
    case ObjectiveKind::kMailTrades:
      return {{LossTerm::kKlAdvNat, tradeoff * weight}, {LossTerm::kCrossEntropyNat, 1.0}};
    case ObjectiveKind::kMart:
    case ObjectiveKind::kMailMart:
      return {{LossTerm::kBoostedCrossEntropyAdv, weight}, {LossTerm::kMisclassAwareKl, tradeoff}};
  }
  throw ConfigError("unknown objective kind");
}

BatchLossReport mail_at_loss(const ModelParams& params, const Batch& batch,
                             std::span<const std::vector<double>> deltas,
                             const WeightVector& weights, bool with_grads) {
  return run(params, ObjectiveKind::kMailAt, 0.0, batch, deltas, weights, with_grads);
}

BatchLossReport mail_trades_loss(const ModelParams& params, const Batch& batch,
                                 std::span<const std::vector<double>> deltas,
                                 const WeightVector& weights, const ObjectiveConfig& cfg,
                                 bool with_grads) {
  return run(params, ObjectiveKind::kMailTrades, cfg.tradeoff, batch, deltas, weights, with_grads);
}

BatchLossReport mail_mart_loss(const ModelParams& params, const Batch& batch,
                               std::span<const std::vector<double>> deltas,
                               const WeightVector& weights, const ObjectiveConfig& cfg,
                               bool with_grads) {
  return run(params, ObjectiveKind::kMailMart, cfg.tradeoff, batch, deltas, weights, with_grads);
}

BatchLossReport baseline_loss(ObjectiveKind kind, const ModelParams& params, const Batch& batch,
                              std::span<const std::vector<double>> deltas,
                              const ObjectiveConfig& cfg, bool with_grads) {
  const WeightVector ones = unit_weights(batch.size());
  switch (kind) {
    case ObjectiveKind::kNatural:
      return run(params, ObjectiveKind::kNatural, 0.0, batch, deltas, ones, with_grads);
    case ObjectiveKind::kAt:
      return mail_at_loss(params, batch, deltas, ones, with_grads);
    case ObjectiveKind::kTrades:
      return mail_trades_loss(params, batch, deltas, ones, cfg, with_grads);
    case ObjectiveKind::kMart:
      return mail_mart_loss(params, batch, deltas, ones, cfg, with_grads);
    default:
      throw ConfigError("baseline_loss expects natural, at, trades or mart");
  }
}

BatchLossReport evaluate_objective(const ModelParams& params, const ObjectiveConfig& cfg,
                                   const Batch& batch, std::span<const std::vector<double>> deltas,
                                   const WeightVector& weights, bool with_grads) {
  switch (cfg.kind) {
    case ObjectiveKind::kMailAt:
      return mail_at_loss(params, batch, deltas, weights, with_grads);
    case ObjectiveKind::kMailTrades:
      return mail_trades_loss(params, batch, deltas, weights, cfg, with_grads);
    case ObjectiveKind::kMailMart:
      return mail_mart_loss(params, batch, deltas, weights, cfg, with_grads);
    default:
      return baseline_loss(cfg.kind, params, batch, deltas, cfg, with_grads);
  }
}

}  // namespace pmat
