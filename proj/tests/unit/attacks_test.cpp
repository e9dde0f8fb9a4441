#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "pmat/attacks.hpp"
#include "pmat/errors.hpp"
#include "test_support.hpp"

namespace pmat {
namespace {

// Two-class linear model with logit_1 = x_1 and logit_0 = 0.
ModelParams axis_classifier() {
  ModelParams params({2, 2});
  params.weights(0)[2] = 1.0;
  return params;
}

// Sign-step recurrence on the first coordinate, independent of the attack code.
int brute_force_crossing(double x1, double eps, double step, int steps) {
  double d = 0.0;
  for (int t = 1; t <= steps; ++t) {
    d = std::max(-eps, d - step);
    if (x1 + d < 0.0) return t;
  }
  return -1;
}

AttackConfig deterministic(int steps, double step_size, AttackLoss loss = AttackLoss::kCrossEntropy) {
  AttackConfig cfg;
  cfg.steps = steps;
  cfg.step_size = step_size;
  cfg.loss_kind = loss;
  cfg.rand_init = false;
  return cfg;
}

TEST(Pgd, AxisClassifierCrossesAtStepTwo) {
  const auto params = axis_classifier();
  const std::vector<double> x{0.05, 0.0};
  const ThreatModel threat{0.1, std::nullopt};
  const auto result = pgd(params, x, 1, threat, deterministic(10, 0.03));
  ASSERT_TRUE(result.crossed_at.has_value());
  EXPECT_EQ(*result.crossed_at, brute_force_crossing(0.05, 0.1, 0.03, 10));
  EXPECT_EQ(*result.crossed_at, 2);
  EXPECT_NEAR(result.delta_at_lps[0], -0.06, 1e-15);
  EXPECT_NEAR(result.delta[0], -0.1, 1e-15);
  EXPECT_EQ(result.trace.size(), 11u);
  EXPECT_FALSE(result.trace[1].crossed);
  EXPECT_TRUE(result.trace[2].crossed);
}

TEST(Pgd, TraceLossIsNonDecreasingOnLinearModel) {
  const auto params = axis_classifier();
  const std::vector<double> x{0.05, 0.0};
  const auto result = pgd(params, x, 1, ThreatModel{0.1, std::nullopt}, deterministic(10, 0.03));
  for (std::size_t t = 1; t < result.trace.size(); ++t) {
    EXPECT_GE(result.trace[t].loss, result.trace[t - 1].loss);
  }
}

TEST(Pgd, MisclassifiedStartCrossesAtZeroUnderCw) {
  const auto params = axis_classifier();
  const std::vector<double> x{-0.5, 0.0};
  const auto result =
      pgd(params, x, 1, ThreatModel{0.1, std::nullopt}, deterministic(5, 0.03, AttackLoss::kCwMargin));
  EXPECT_GT(result.trace[0].loss, 0.0);
  ASSERT_TRUE(result.crossed_at.has_value());
  EXPECT_EQ(*result.crossed_at, 0);
}

TEST(Pgd, KlFromZeroStartHasZeroInitialLoss) {
  const auto params = ModelParams::random_init({3, 8, 3}, 4);
  const std::vector<double> x{0.2, -0.1, 0.4};
  const auto result = pgd(params, x, 0, ThreatModel{0.1, std::nullopt}, deterministic(5, 0.02, AttackLoss::kKl));
  EXPECT_EQ(result.trace[0].loss, 0.0);
}

TEST(Pgd, CrossEntropyAndKlGiveDifferentPerturbations) {
  const auto params = ModelParams::random_init({3, 8, 3}, 4);
  const std::vector<double> x{0.2, -0.1, 0.4};
  AttackConfig ce = deterministic(5, 0.02);
  ce.rand_init = true;
  ce.seed = 3;
  AttackConfig kl = ce;
  kl.loss_kind = AttackLoss::kKl;
  const ThreatModel threat{0.1, std::nullopt};
  EXPECT_NE(pgd(params, x, 0, threat, ce).delta, pgd(params, x, 0, threat, kl).delta);
}

TEST(Pgd, DeterministicForFixedSeed) {
  const auto params = ModelParams::random_init({3, 8, 3}, 4);
  const std::vector<double> x{0.2, -0.1, 0.4};
  AttackConfig cfg = deterministic(10, 0.02);
  cfg.rand_init = true;
  cfg.seed = 99;
  const ThreatModel threat{0.1, std::pair{-1.0, 1.0}};
  const auto a = pgd(params, x, 1, threat, cfg);
  const auto b = pgd(params, x, 1, threat, cfg);
  EXPECT_EQ(a.delta, b.delta);
  EXPECT_EQ(a.crossed_at, b.crossed_at);
  cfg.seed = 100;
  EXPECT_NE(pgd(params, x, 1, threat, cfg).trace[0].loss, a.trace[0].loss);
}

TEST(Pgd, StaysInsideThreatForTinyRadius) {
  const auto params = ModelParams::random_init({3, 8, 3}, 4);
  const std::vector<double> x{0.2, -0.1, 0.4};
  AttackConfig cfg = deterministic(10, 0.02);
  cfg.rand_init = true;
  const ThreatModel threat{1e-12, std::nullopt};
  const auto result = pgd(params, x, 1, threat, cfg);
  for (double d : result.delta) EXPECT_LE(std::abs(d), 1e-12);
  EXPECT_TRUE(within_threat(result.delta, threat, x));
}

TEST(Pgd, RejectsBadConfig) {
  const auto params = axis_classifier();
  const std::vector<double> x{0.05, 0.0};
  EXPECT_THROW(pgd(params, x, 1, ThreatModel{-0.1, std::nullopt}, deterministic(1, 0.01)), ConfigError);
  EXPECT_THROW(pgd(params, x, 1, ThreatModel{0.1, std::nullopt}, deterministic(0, 0.01)), ConfigError);
  EXPECT_THROW(pgd(params, x, 1, ThreatModel{0.1, std::nullopt}, deterministic(1, -0.01)), ConfigError);
  EXPECT_THROW(pgd(params, x, 1, ThreatModel{0.1, std::pair{1.0, 0.0}}, deterministic(1, 0.01)),
               ConfigError);
}

TEST(Project, ClampsPerCoordinate) {
  const std::vector<double> x{0.5, 0.5};
  const std::vector<double> delta{0.1, -0.05};
  const auto out = project(delta, ThreatModel{8.0 / 255.0, std::nullopt}, x);
  EXPECT_EQ(out[0], 8.0 / 255.0);
  EXPECT_EQ(out[1], -8.0 / 255.0);
}

TEST(Project, DomainBindsFirst) {
  const std::vector<double> x{0.99};
  const std::vector<double> delta{0.05};
  const auto out = project(delta, ThreatModel{0.1, std::pair{0.0, 1.0}}, x);
  EXPECT_NEAR(out[0], 0.01, 1e-15);
}

TEST(Project, Idempotent) {
  Engine engine(5);
  const ThreatModel threat{0.1, std::pair{0.0, 1.0}};
  for (int i = 0; i < 200; ++i) {
    const auto x = testing::random_vector(engine, 4, 0.0, 1.0);
    const auto d = testing::random_vector(engine, 4, -0.5, 0.5);
    const auto once = project(d, threat, x);
    EXPECT_EQ(project(once, threat, x), once);
    EXPECT_TRUE(within_threat(once, threat, x));
  }
}

TEST(LmPgd, ReducesToPgdWithoutMomentumAndSingleStepSize) {
  const auto params = ModelParams::random_init({3, 8, 3}, 11);
  const std::vector<double> x{0.3, 0.1, -0.2};
  const ThreatModel threat{0.1, std::nullopt};
  LmPgdConfig lm;
  lm.momentum = 0.0;
  lm.alpha_max = 0.02;
  lm.alpha_min_schedule = {0.02};
  lm.line_search_points = 1;
  const auto a = lm_pgd(params, x, 2, threat, lm, 12);
  const auto b = pgd(params, x, 2, threat, deterministic(12, 0.02));
  EXPECT_EQ(a.delta, b.delta);
  EXPECT_EQ(a.crossed_at, b.crossed_at);
}

TEST(LmPgd, RejectsEmptyGrid) {
  LmPgdConfig lm = LmPgdConfig::demo(0.1);
  lm.line_search_points = 0;
  EXPECT_THROW(lm.validate(50), ConfigError);
}

TEST(LmPgd, DemoSchedule) {
  const auto lm = LmPgdConfig::demo(8.0 / 255.0);
  EXPECT_EQ(lm.momentum, 0.8);
  EXPECT_NEAR(lm.alpha_max, 6.0 / 255.0, 1e-15);
  EXPECT_NEAR(lm.alpha_min(1), 4.0 / 255.0, 1e-15);
  EXPECT_NEAR(lm.alpha_min(15), 4.0 / 255.0, 1e-15);
  EXPECT_EQ(lm.alpha_min(16), 0.0);
  EXPECT_EQ(lm.alpha_min(50), 0.0);
}

TEST(LmPgd, StaysInsideThreat) {
  const auto params = ModelParams::random_init({3, 8, 3}, 11);
  const std::vector<double> x{0.3, 0.1, 0.8};
  const ThreatModel threat{0.1, std::pair{0.0, 1.0}};
  const auto result = lm_pgd(params, x, 0, threat, LmPgdConfig::demo(0.1), 50);
  EXPECT_TRUE(within_threat(result.delta, threat, x));
  EXPECT_EQ(result.trace.size(), 51u);
}

}  // namespace
}  // namespace pmat
