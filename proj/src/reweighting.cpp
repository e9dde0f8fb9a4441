#include "pmat/reweighting.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "pmat/errors.hpp"

namespace pmat {

void WeightConfig::validate() const {
  if (!(slope >= 0.0)) throw ConfigError("weight slope must be non-negative");
  if (!(step_alpha >= 0.0 && step_alpha <= 1.0)) throw ConfigError("step alpha must lie in [0, 1]");
  if (burn_in_epochs < 0) throw ConfigError("burn-in epochs must be non-negative");
  if (margin_kind == MarginKind::kLps) {
    throw ConfigError("LPS is a measurement only; choose a PM variant or MM for weighting");
  }
}

double assign_unnormalized(double margin, const WeightConfig& cfg) {
  switch (cfg.assignment) {
    case Assignment::kSigmoid:
      return 1.0 / (1.0 + std::exp(cfg.slope * (margin - cfg.bias)));
    case Assignment::kHinge:
      return std::max(0.0, cfg.slope * (margin - cfg.bias));
    case Assignment::kStep:
      return margin > cfg.bias ? cfg.step_alpha : 1.0 - cfg.step_alpha;
  }
  throw ConfigError("unknown assignment function");
}

WeightVector normalize(std::span<const double> unnormalized) {
  WeightVector out;
  out.normalized = true;
  const std::size_t m = unnormalized.size();
  if (m == 0) return out;
  double sum = 0.0;
  for (double u : unnormalized) {
    if (!(u >= 0.0) || !std::isfinite(u)) throw InputError("unnormalized weights must be finite and >= 0");
    sum += u;
  }
  const bool uniform = std::all_of(unnormalized.begin(), unnormalized.end(),
                                   [&](double u) { return u == unnormalized[0]; });
  if (sum == 0.0) {
    std::cerr << "warning: all instance weights are zero; using uniform weights\n";
    out.fell_back_to_uniform = true;
    out.weights.assign(m, 1.0);
    return out;
  }
  if (uniform) {
    out.weights.assign(m, 1.0);
    return out;
  }
  out.weights.resize(m);
  const double scale = static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) out.weights[i] = scale * unnormalized[i] / sum;
  return out;
}

WeightVector effective_weights(std::span<const double> margins, const WeightConfig& cfg, int epoch) {
  if (epoch < 1) throw InputError("epochs are counted from 1");
  if (epoch <= cfg.burn_in_epochs) {
    return {std::vector<double>(margins.size(), 1.0), true, false};
  }
  std::vector<double> raw(margins.size());
  for (std::size_t i = 0; i < margins.size(); ++i) raw[i] = assign_unnormalized(margins[i], cfg);
  return normalize(raw);
}

}  // namespace pmat
