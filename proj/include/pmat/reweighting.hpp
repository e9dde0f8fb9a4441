#pragma once

#include <span>
#include <string>
#include <vector>

#include "pmat/margins.hpp"

namespace pmat {

enum class Assignment { kSigmoid, kHinge, kStep };

struct WeightConfig {
  Assignment assignment = Assignment::kSigmoid;
  double slope = 10.0;       // gamma
  double bias = -0.5;        // beta
  double step_alpha = 0.2;   // weight above beta for kStep
  int burn_in_epochs = 74;
  MarginKind margin_kind = MarginKind::kPmAdv;

  void validate() const;
};

struct WeightVector {
  std::vector<double> weights;
  bool normalized = false;
  // Set when normalization had to fall back to uniform weights.
  bool fell_back_to_uniform = false;
};

// sigmoid:  1 / (1 + exp(gamma (m - beta)))
// hinge:    max(0, gamma (m - beta))
// step:     alpha if m > beta, else 1 - alpha
double assign_unnormalized(double margin, const WeightConfig& cfg);

// w_i = m * u_i / sum_j u_j, so the weights average to one. An all-zero
// input falls back to uniform weights and sets fell_back_to_uniform.
WeightVector normalize(std::span<const double> unnormalized);

// All ones while epoch <= burn_in_epochs, otherwise assigned and normalized.
WeightVector effective_weights(std::span<const double> margins, const WeightConfig& cfg, int epoch);

}  // namespace pmat
