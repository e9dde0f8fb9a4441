#include "pmat/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pmat/errors.hpp"
#include "pmat/rng.hpp"

namespace pmat {
namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::vector<double> initial_delta(std::span<const double> x, const ThreatModel& threat,
                                  bool rand_init, std::uint64_t seed) {
  std::vector<double> delta(x.size(), 0.0);
  if (rand_init) {
    Engine engine(seed);
    for (double& d : delta) d = uniform(engine, -threat.epsilon, threat.epsilon);
  }
  project_in_place(delta, threat, x);
  return delta;
}

// Records the trace entry for the current delta and returns the input gradient
// when `with_grad` is set.
std::vector<double> observe(const ModelParams& params, std::span<const double> x, int y,
                            const std::vector<double>& delta, const LossDefinition& loss, int step,
                            bool with_grad, Perturbation& out) {
  LossEvaluation ev = evaluate_loss(params, x, delta, y, loss, {false, with_grad});
  TraceEntry entry{step, ev.value, ev.adv.prediction(), false};
  entry.crossed = entry.predicted != y;
  if (entry.crossed && !out.crossed_at) {
    out.crossed_at = step;
    out.delta_at_lps = delta;
  }
  out.trace.push_back(entry);
  return std::move(ev.grads.input_grad);
}

double loss_at(const ModelParams& params, std::span<const double> x, int y,
               const std::vector<double>& delta, const LossDefinition& loss) {
  return evaluate_loss(params, x, delta, y, loss, {}).value;
}

void finish(Perturbation& out, std::vector<double> delta) {
  if (!out.crossed_at) out.delta_at_lps = delta;
  out.delta = std::move(delta);
}

}  // namespace

void ThreatModel::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw ConfigError("epsilon must be finite and non-negative");
  }
  if (clamp_domain && !(clamp_domain->first < clamp_domain->second)) {
    throw ConfigError("clamp domain needs lo < hi");
  }
}

void AttackConfig::validate() const {
  if (steps < 1) throw ConfigError("attack needs at least one step");
  if (!(step_size > 0.0)) throw ConfigError("attack step size must be positive");
}

double LmPgdConfig::alpha_min(int iteration) const {
  if (alpha_min_schedule.empty()) return alpha_max;
  const std::size_t i = static_cast<std::size_t>(std::max(iteration, 1) - 1);
  return alpha_min_schedule[std::min(i, alpha_min_schedule.size() - 1)];
}

void LmPgdConfig::validate(int max_steps) const {
  if (max_steps < 1) throw ConfigError("lm-pgd needs at least one step");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (line_search_points < 1) throw ConfigError("line search grid is empty");
  if (!(alpha_max >= 0.0)) throw ConfigError("alpha_max must be non-negative");
  for (int t = 1; t <= max_steps; ++t) {
    const double lo = alpha_min(t);
    if (!(lo >= 0.0) || lo > alpha_max) {
      throw ConfigError("alpha_min at iteration " + std::to_string(t) +
                        " must lie in [0, alpha_max]");
    }
  }
}

LmPgdConfig LmPgdConfig::demo(double epsilon, int max_steps) {
  LmPgdConfig cfg;
  cfg.momentum = 0.8;
  cfg.alpha_max = 0.75 * epsilon;
  cfg.alpha_min_schedule.assign(static_cast<std::size_t>(std::max(max_steps, 1)), 0.0);
  for (std::size_t t = 0; t < cfg.alpha_min_schedule.size() && t < 15; ++t) {
    cfg.alpha_min_schedule[t] = 0.5 * epsilon;
  }
  return cfg;
}

LossDefinition attack_loss_definition(AttackLoss kind) {
  switch (kind) {
    case AttackLoss::kCrossEntropy:
      return {{LossTerm::kCrossEntropyAdv, 1.0}};
    case AttackLoss::kCwMargin:
      return {{LossTerm::kCwMarginAdv, 1.0}};
    case AttackLoss::kKl:
      return {{LossTerm::kKlAdvNat, 1.0}};
  }
  throw ConfigError("unknown attack loss");
}

void project_in_place(std::span<double> delta, const ThreatModel& threat,
                      std::span<const double> x) {
  const double eps = threat.epsilon;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    double d = std::clamp(delta[i], -eps, eps);
    if (threat.clamp_domain) {
      d = std::max(d, threat.clamp_domain->first - x[i]);
      d = std::min(d, threat.clamp_domain->second - x[i]);
    }
    delta[i] = d;
  }
}

std::vector<double> project(std::span<const double> delta, const ThreatModel& threat,
                            std::span<const double> x) {
  std::vector<double> out(delta.begin(), delta.end());
  project_in_place(out, threat, x);
  return out;
}

bool within_threat(std::span<const double> delta, const ThreatModel& threat,
                   std::span<const double> x) {
  for (std::size_t i = 0; i < delta.size(); ++i) {
    if (!(std::abs(delta[i]) <= threat.epsilon)) return false;
    if (threat.clamp_domain) {
      const double v = x[i] + delta[i];
      if (v < threat.clamp_domain->first || v > threat.clamp_domain->second) return false;
    }
  }
  return true;
}

Perturbation pgd(const ModelParams& params, std::span<const double> x, int y,
                 const ThreatModel& threat, const AttackConfig& cfg) {
  threat.validate();
  cfg.validate();
  const LossDefinition loss = attack_loss_definition(cfg.loss_kind);
  Perturbation out;
  out.trace.reserve(static_cast<std::size_t>(cfg.steps) + 1);
  std::vector<double> delta = initial_delta(x, threat, cfg.rand_init, cfg.seed);
  for (int t = 1; t <= cfg.steps; ++t) {
    std::vector<double> grad;
    try {
      grad = observe(params, x, y, delta, loss, t - 1, true, out);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at attack step " + std::to_string(t - 1));
    }
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += cfg.step_size * sign(grad[i]);
    project_in_place(delta, threat, x);
  }
  try {
    observe(params, x, y, delta, loss, cfg.steps, false, out);
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " at attack step " + std::to_string(cfg.steps));
  }
  finish(out, std::move(delta));
  return out;
}

Perturbation lm_pgd(const ModelParams& params, std::span<const double> x, int y,
                    const ThreatModel& threat, const LmPgdConfig& cfg, int max_steps) {
  threat.validate();
  cfg.validate(max_steps);
  const LossDefinition loss = attack_loss_definition(cfg.loss_kind);
  Perturbation out;
  out.trace.reserve(static_cast<std::size_t>(max_steps) + 1);
  std::vector<double> delta = initial_delta(x, threat, cfg.rand_init, cfg.seed);
  std::vector<double> velocity(x.size(), 0.0);
  std::vector<double> step(x.size());
  std::vector<double> candidate(x.size());

  for (int t = 1; t <= max_steps; ++t) {
    const std::vector<double> grad = observe(params, x, y, delta, loss, t - 1, true, out);
    std::vector<double> dir(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) dir[i] = sign(grad[i]);

    const double lo = cfg.alpha_min(t);
    const double hi = cfg.alpha_max;
    std::vector<double> grid;
    if (cfg.line_search_points == 1) {
      grid.push_back(hi);
    } else if (lo == hi) {
      grid.push_back(lo);
    } else {
      const int n = cfg.line_search_points;
      for (int k = 0; k < n; ++k) grid.push_back(lo + (hi - lo) * k / (n - 1));
    }

    double best_alpha = grid.front();
    if (grid.size() > 1) {
      double best_loss = -std::numeric_limits<double>::infinity();
      for (double alpha : grid) {
        for (std::size_t i = 0; i < delta.size(); ++i) {
          candidate[i] = delta[i] + (cfg.momentum * velocity[i] + alpha * dir[i]);
        }
        project_in_place(candidate, threat, x);
        const double value = loss_at(params, x, y, candidate, loss);
        if (value > best_loss) {
          best_loss = value;
          best_alpha = alpha;
        }
      }
    }
    for (std::size_t i = 0; i < delta.size(); ++i) {
      velocity[i] = cfg.momentum * velocity[i] + best_alpha * dir[i];
      delta[i] += velocity[i];
    }
    project_in_place(delta, threat, x);
  }
  observe(params, x, y, delta, loss, max_steps, false, out);
  finish(out, std::move(delta));
  return out;
}

AttackLoss loss_for_style(GenerationStyle style) {
  switch (style) {
    case GenerationStyle::kAtStyle:
      return AttackLoss::kCrossEntropy;
    case GenerationStyle::kTradesStyle:
      return AttackLoss::kKl;
    case GenerationStyle::kCwStyle:
      return AttackLoss::kCwMargin;
  }
  throw ConfigError("unknown generation style");
}

Perturbation generate_for_objective(const ModelParams& params, std::span<const double> x, int y,
                                    GenerationStyle style, const ThreatModel& threat,
                                    AttackConfig cfg) {
  cfg.loss_kind = loss_for_style(style);
  return pgd(params, x, y, threat, cfg);
}

}  // namespace pmat
