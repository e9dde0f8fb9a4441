#include "pmat/margins.hpp"

#include <string>
#include <vector>

#include "pmat/errors.hpp"

namespace pmat {
namespace {

double top_other(std::span<const double> v, int y) {
  if (v.size() < 2) throw ConfigError("margins need at least two classes");
  if (y < 0 || static_cast<std::size_t>(y) >= v.size()) {
    throw InputError("label " + std::to_string(y) + " out of range");
  }
  bool seen = false;
  double best = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (static_cast<int>(k) == y) continue;
    if (!seen || v[k] > best) best = v[k];
    seen = true;
  }
  return best;
}

std::vector<double> shifted(std::span<const double> x, std::span<const double> delta) {
  if (delta.size() != x.size()) throw InputError("perturbation length does not match input");
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += delta[i];
  return out;
}

}  // namespace

std::string_view to_string(MarginKind kind) {
  switch (kind) {
    case MarginKind::kPmNat: return "pm_nat";
    case MarginKind::kPmAdv: return "pm_adv";
    case MarginKind::kPmDif: return "pm_dif";
    case MarginKind::kMm: return "mm";
    case MarginKind::kLps: return "lps";
  }
  return "unknown";
}

double pm(std::span<const double> probs, int y) {
  const double other = top_other(probs, y);
  return probs[y] - other;
}

double mm(std::span<const double> logits, int y) {
  const double other = top_other(logits, y);
  return logits[y] - other;
}

MarginScore pm_nat(const ModelParams& params, std::span<const double> x, int y,
                   std::size_t instance_id) {
  return {MarginKind::kPmNat, pm(forward(params, x).probs, y), instance_id};
}

MarginScore pm_adv(const ModelParams& params, std::span<const double> x,
                   std::span<const double> delta_final, int y, std::size_t instance_id) {
  return {MarginKind::kPmAdv, pm(forward(params, shifted(x, delta_final)).probs, y), instance_id};
}

MarginScore pm_dif(const ModelParams& params, std::span<const double> x,
                   std::span<const double> delta_at_lps, int y, std::size_t instance_id) {
  const auto clean = forward(params, x).probs;
  const auto attacked = forward(params, shifted(x, delta_at_lps)).probs;
  top_other(clean, y);
  return {MarginKind::kPmDif, clean[y] - attacked[y], instance_id};
}

MarginScore mm_adv(const ModelParams& params, std::span<const double> x,
                   std::span<const double> delta_final, int y, std::size_t instance_id) {
  return {MarginKind::kMm, mm(forward(params, shifted(x, delta_final)).logits, y), instance_id};
}

MarginScore lps(std::span<const TraceEntry> trace, std::size_t instance_id) {
  if (trace.empty()) throw InputError("LPS needs a non-empty attack trace");
  for (const auto& entry : trace) {
    if (entry.crossed) return {MarginKind::kLps, static_cast<double>(entry.step), instance_id};
  }
  return {MarginKind::kLps, static_cast<double>(trace.back().step), instance_id};
}

double margin_from_attack(MarginKind kind, const ModelParams& params, std::span<const double> x,
                          int y, const Perturbation& attack) {
  switch (kind) {
    case MarginKind::kPmNat: return pm_nat(params, x, y).value;
    case MarginKind::kPmAdv: return pm_adv(params, x, attack.delta, y).value;
    case MarginKind::kPmDif: return pm_dif(params, x, attack.delta_at_lps, y).value;
    case MarginKind::kMm: return mm_adv(params, x, attack.delta, y).value;
    case MarginKind::kLps: return lps(attack.trace).value;
  }
  throw ConfigError("unknown margin kind");
}

}  // namespace pmat
