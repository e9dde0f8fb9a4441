#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "pmat/errors.hpp"
#include "pmat/objectives.hpp"
#include "test_support.hpp"

namespace pmat {
namespace {

class ObjectiveFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    Engine engine(41);
    for (int i = 0; i < 6; ++i) {
      xs.push_back(testing::random_vector(engine, 3, -1.0, 1.0));
      deltas.push_back(testing::random_vector(engine, 3, -0.2, 0.2));
      zeros.emplace_back(3, 0.0);
      batch.labels.push_back(i % 3);
    }
    for (const auto& x : xs) batch.inputs.emplace_back(x);
    weights.weights = {0.5, 1.5, 0.8, 1.2, 0.3, 1.7};
    weights.normalized = true;
  }

  static WeightVector ones(std::size_t m) { return WeightVector{std::vector<double>(m, 1.0), true, false}; }

  ModelParams params = ModelParams::random_init({3, 7, 3}, 5);
  std::vector<std::vector<double>> xs;
  std::vector<std::vector<double>> deltas;
  std::vector<std::vector<double>> zeros;
  Batch batch;
  WeightVector weights;
};

ObjectiveConfig objective(ObjectiveKind kind, double tradeoff) { return ObjectiveConfig{kind, tradeoff}; }

TEST_F(ObjectiveFixture, UnitWeightsMatchBaselinesBitwise) {
  const std::pair<ObjectiveKind, ObjectiveKind> pairs[] = {
      {ObjectiveKind::kMailAt, ObjectiveKind::kAt},
      {ObjectiveKind::kMailTrades, ObjectiveKind::kTrades},
      {ObjectiveKind::kMailMart, ObjectiveKind::kMart}};
  for (auto [mail, base] : pairs) {
    const auto a = evaluate_objective(params, objective(mail, 5.0), batch, deltas, ones(6), true);
    const auto b = evaluate_objective(params, objective(base, 5.0), batch, deltas, weights, true);
    EXPECT_EQ(a.total, b.total);
    EXPECT_EQ(a.per_instance, b.per_instance);
    EXPECT_EQ(*a.param_grads, *b.param_grads);
  }
}

TEST_F(ObjectiveFixture, SingleInstanceDoubleWeightDoubles) {
  Batch one;
  one.inputs = {batch.inputs[0]};
  one.labels = {batch.labels[0]};
  const std::vector<std::vector<double>> d{deltas[0]};
  const auto w1 = mail_at_loss(params, one, d, WeightVector{{1.0}, true, false}, true);
  const auto w2 = mail_at_loss(params, one, d, WeightVector{{2.0}, true, false}, true);
  EXPECT_EQ(w2.total, 2.0 * w1.total);
  for (std::size_t k = 0; k < params.num_params(); ++k) {
    EXPECT_EQ(w2.param_grads->values()[k], 2.0 * w1.param_grads->values()[k]);
  }
}

TEST_F(ObjectiveFixture, HomogeneousInWeights) {
  WeightVector doubled = weights;
  for (double& w : doubled.weights) w *= 2.0;
  const auto a = mail_at_loss(params, batch, deltas, weights);
  const auto b = mail_at_loss(params, batch, deltas, doubled);
  EXPECT_NEAR(b.total, 2.0 * a.total, 1e-12 * std::abs(a.total));
}

TEST_F(ObjectiveFixture, WeightedTermsAreLinearInWeights) {
  // For TRADES and MART only part of the total is weighted, so the total is
  // affine: L(w_a + w_b) = L(w_a) + L(w_b) - L(0).
  WeightVector a = weights;
  WeightVector b{{0.9, 0.1, 1.1, 0.4, 2.0, 0.7}, true, false};
  WeightVector sum = a;
  for (std::size_t i = 0; i < 6; ++i) sum.weights[i] += b.weights[i];
  const WeightVector none{std::vector<double>(6, 0.0), true, false};
  for (ObjectiveKind kind : {ObjectiveKind::kMailTrades, ObjectiveKind::kMailMart}) {
    const auto cfg = objective(kind, 6.0);
    auto total = [&](const WeightVector& w) { return evaluate_objective(params, cfg, batch, deltas, w).total; };
    EXPECT_NEAR(total(sum), total(a) + total(b) - total(none), 1e-10);
  }
}

TEST_F(ObjectiveFixture, TradesWithoutPerturbationIsNaturalCrossEntropy) {
  const auto trades = mail_trades_loss(params, batch, zeros, weights, objective(ObjectiveKind::kMailTrades, 5.0));
  const auto natural = baseline_loss(ObjectiveKind::kAt, params, batch, zeros, objective(ObjectiveKind::kAt, 5.0));
  EXPECT_NEAR(trades.total, natural.total, 1e-12);
}

TEST_F(ObjectiveFixture, AtOnCleanBatchIsCrossEntropySum) {
  const auto at = baseline_loss(ObjectiveKind::kAt, params, batch, zeros, objective(ObjectiveKind::kAt, 5.0));
  double expected = 0.0;
  for (std::size_t i = 0; i < 6; ++i) expected += cross_entropy(forward(params, xs[i]).probs, batch.labels[i]);
  EXPECT_NEAR(at.total, expected, 1e-12);
}

TEST_F(ObjectiveFixture, TotalGradientsMatchFiniteDifferences) {
  for (ObjectiveKind kind : {ObjectiveKind::kMailAt, ObjectiveKind::kMailTrades, ObjectiveKind::kMailMart,
                             ObjectiveKind::kNatural}) {
    const auto cfg = objective(kind, 6.0);
    const auto report = evaluate_objective(params, cfg, batch, deltas, weights, true);
    const std::vector<double> theta(params.values().begin(), params.values().end());
    const auto fd = testing::central_difference(
        [&](std::span<const double> values) {
          ModelParams p = params;
          std::copy(values.begin(), values.end(), p.values().begin());
          return evaluate_objective(p, cfg, batch, deltas, weights).total;
        },
        theta);
    EXPECT_LT(testing::max_relative_error(report.param_grads->values(), fd), 1e-5) << to_string(kind);
  }
}

TEST_F(ObjectiveFixture, RejectsLengthMismatch) {
  WeightVector short_weights{{1.0, 1.0}, true, false};
  EXPECT_THROW(mail_at_loss(params, batch, deltas, short_weights), InputError);
  const std::vector<std::vector<double>> short_deltas(2, std::vector<double>(3, 0.0));
  EXPECT_THROW(mail_at_loss(params, batch, short_deltas, weights), InputError);
}

TEST(ObjectiveConfig, Validation) {
  EXPECT_THROW(objective(ObjectiveKind::kMailTrades, 0.0).validate(), ConfigError);
  EXPECT_NO_THROW(objective(ObjectiveKind::kMailAt, 0.0).validate());
  EXPECT_EQ(objective(ObjectiveKind::kMailMart, 6.0).baseline(), ObjectiveKind::kMart);
  EXPECT_EQ(objective(ObjectiveKind::kTrades, 6.0).generation_style(), GenerationStyle::kTradesStyle);
  EXPECT_EQ(objective(ObjectiveKind::kMailAt, 6.0).generation_style(), GenerationStyle::kAtStyle);
}

}  // namespace
}  // namespace pmat
