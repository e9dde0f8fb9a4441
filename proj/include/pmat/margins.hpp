#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "pmat/attacks.hpp"
#include "pmat/mlp.hpp"

namespace pmat {

enum class MarginKind { kPmNat, kPmAdv, kPmDif, kMm, kLps };

std::string_view to_string(MarginKind kind);

struct MarginScore {
  MarginKind kind = MarginKind::kPmAdv;
  double value = 0.0;  // LPS is stored as an integer-valued double
  std::size_t instance_id = 0;
};

// p_y - max_{j != y} p_j. Throws ConfigError when K < 2, InputError on a bad label.
double pm(std::span<const double> probs, int y);

// z_y - max_{j != y} z_j on raw logits.
double mm(std::span<const double> logits, int y);

MarginScore pm_nat(const ModelParams& params, std::span<const double> x, int y,
                   std::size_t instance_id = 0);
MarginScore pm_adv(const ModelParams& params, std::span<const double> x,
                   std::span<const double> delta_final, int y, std::size_t instance_id = 0);
// p_y(x) - p_y(x + delta), with delta the perturbation at the instance's LPS.
MarginScore pm_dif(const ModelParams& params, std::span<const double> x,
                   std::span<const double> delta_at_lps, int y, std::size_t instance_id = 0);
MarginScore mm_adv(const ModelParams& params, std::span<const double> x,
                   std::span<const double> delta_final, int y, std::size_t instance_id = 0);

// Least PGD steps: the first iteration index whose iterate is misclassified
// (0 when the initial point already is), or T when the attack never succeeds.
// Throws InputError on an empty trace.
MarginScore lps(std::span<const TraceEntry> trace, std::size_t instance_id = 0);

// Dispatch for the margin kinds that feed weight assignment.
double margin_from_attack(MarginKind kind, const ModelParams& params, std::span<const double> x,
                          int y, const Perturbation& attack);

}  // namespace pmat
