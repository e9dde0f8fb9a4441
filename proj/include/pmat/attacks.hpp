#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "pmat/losses.hpp"
#include "pmat/mlp.hpp"

namespace pmat {

// L-infinity ball of radius epsilon, optionally intersected with a box on x + delta.
struct ThreatModel {
  double epsilon = 8.0 / 255.0;
  std::optional<std::pair<double, double>> clamp_domain;

  // epsilon >= 0 (zero gives the clean evaluation), lo < hi.
  void validate() const;
};

enum class AttackLoss { kCrossEntropy, kCwMargin, kKl };

struct AttackConfig {
  int steps = 10;
  double step_size = 2.0 / 255.0;
  AttackLoss loss_kind = AttackLoss::kCrossEntropy;
  bool rand_init = true;
  std::uint64_t seed = 0;

  void validate() const;
};

// Nesterov-momentum PGD with a line-searched step size.
struct LmPgdConfig {
  double momentum = 0.8;
  // Lower bound of the step-size search at iteration t (1-based, entry t-1);
  // iterations past the end reuse the last entry.
  std::vector<double> alpha_min_schedule;
  double alpha_max = 6.0 / 255.0;
  int line_search_points = 8;
  AttackLoss loss_kind = AttackLoss::kCrossEntropy;
  bool rand_init = false;
  std::uint64_t seed = 0;

  double alpha_min(int iteration) const;
  void validate(int max_steps) const;

  // Momentum 0.8, alpha_max = 0.75 * epsilon, alpha_min = 0.5 * epsilon for
  // the first 15 iterations and 0 afterwards. With epsilon = 8/255 this is
  // 6/255 and 4/255.
  static LmPgdConfig demo(double epsilon, int max_steps = 50);
};

struct TraceEntry {
  int step = 0;            // t of delta^(t); 0 is the initial point
  double loss = 0.0;       // attack objective at x + delta^(t)
  int predicted = 0;
  bool crossed = false;    // predicted != y
};

struct Perturbation {
  std::vector<double> delta;          // delta^(T)
  std::vector<TraceEntry> trace;      // one entry per t = 0..T
  std::optional<int> crossed_at;      // first t with a wrong prediction
  std::vector<double> delta_at_lps;   // delta^(crossed_at), or delta^(T)
};

// Attack objective for a given loss kind.
LossDefinition attack_loss_definition(AttackLoss kind);

// Per-coordinate clamp to [-eps, eps], then to keep x + delta in the box.
std::vector<double> project(std::span<const double> delta, const ThreatModel& threat,
                            std::span<const double> x);
void project_in_place(std::span<double> delta, const ThreatModel& threat,
                      std::span<const double> x);

// True when delta respects the threat model exactly.
bool within_threat(std::span<const double> delta, const ThreatModel& threat,
                   std::span<const double> x);

// Signed-gradient ascent with projection after every step. Uses the input
// gradient of the chosen loss.
Perturbation pgd(const ModelParams& params, std::span<const double> x, int y,
                 const ThreatModel& threat, const AttackConfig& cfg);

Perturbation lm_pgd(const ModelParams& params, std::span<const double> x, int y,
                    const ThreatModel& threat, const LmPgdConfig& cfg, int max_steps);

// Perturbation generation styles used by the training objectives.
enum class GenerationStyle { kAtStyle, kTradesStyle, kCwStyle };

AttackLoss loss_for_style(GenerationStyle style);

Perturbation generate_for_objective(const ModelParams& params, std::span<const double> x, int y,
                                    GenerationStyle style, const ThreatModel& threat,
                                    AttackConfig cfg);

}  // namespace pmat
