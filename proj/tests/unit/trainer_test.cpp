#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "pmat/config.hpp"
#include "pmat/data.hpp"
#include "pmat/errors.hpp"
#include "pmat/trainer.hpp"

namespace pmat {
namespace {

namespace fs = std::filesystem;

Dataset small_moons(std::size_t n_per_class = 40) {
  return generate(SyntheticSpec{SyntheticKind::kTwoMoons, n_per_class, 0.1, 3, 2});
}

TrainConfig quick(ObjectiveKind kind, int epochs) {
  TrainConfig cfg = TrainConfig::desk(kind);
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.hidden_layers = {8};
  cfg.weight.burn_in_epochs = 1;
  cfg.lr_drops = {{3, 10.0}};
  cfg.seed = 5;
  return cfg;
}

TEST(SgdStep, PlainGradientDescent) {
  TrainConfig cfg = quick(ObjectiveKind::kNatural, 1);
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  TrainState state = init_state(cfg, 2, 2);
  const ModelParams before = state.params;
  ModelParams g(state.params.dims());
  for (std::size_t k = 0; k < g.num_params(); ++k) g.values()[k] = 0.001 * static_cast<double>(k) - 0.02;
  sgd_step(state, g, cfg, 1);
  for (std::size_t k = 0; k < g.num_params(); ++k) {
    EXPECT_EQ(state.params.values()[k], before.values()[k] - cfg.lr * g.values()[k]);
  }
}

TEST(SgdStep, ZeroGradientKeepsParameters) {
  TrainConfig cfg = quick(ObjectiveKind::kNatural, 1);
  cfg.weight_decay = 0.0;
  TrainState state = init_state(cfg, 2, 2);
  const ModelParams before = state.params;
  const ModelParams zero(state.params.dims());
  for (int i = 0; i < 5; ++i) sgd_step(state, zero, cfg, 1);
  EXPECT_EQ(state.params, before);
}

TEST(SgdStep, TwoStepMomentumUnroll) {
  TrainConfig cfg = quick(ObjectiveKind::kNatural, 1);
  cfg.momentum = 0.9;
  cfg.weight_decay = 0.01;
  cfg.lr = 0.1;
  TrainState state = init_state(cfg, 2, 2);
  const double theta0 = state.params.values()[0];
  ModelParams g1(state.params.dims());
  ModelParams g2(state.params.dims());
  g1.values()[0] = 0.5;
  g2.values()[0] = -0.25;
  sgd_step(state, g1, cfg, 1);
  sgd_step(state, g2, cfg, 1);
  const double v1 = 0.5 + 0.01 * theta0;
  const double theta1 = theta0 - 0.1 * v1;
  const double v2 = 0.9 * v1 + (-0.25) + 0.01 * theta1;
  const double theta2 = theta1 - 0.1 * v2;
  EXPECT_DOUBLE_EQ(state.params.values()[0], theta2);
  EXPECT_DOUBLE_EQ(state.velocity.values()[0], v2);
}

TEST(TrainConfig, LearningRateSchedule) {
  const TrainConfig cfg = TrainConfig::full(ObjectiveKind::kMailAt);
  EXPECT_EQ(cfg.lr_at(1), 0.01);
  EXPECT_EQ(cfg.lr_at(74), 0.01);
  EXPECT_NEAR(cfg.lr_at(75), 0.001, 1e-18);
  EXPECT_NEAR(cfg.lr_at(89), 0.001, 1e-18);
  EXPECT_NEAR(cfg.lr_at(90), 0.0001, 1e-18);
  EXPECT_EQ(cfg.momentum, 0.9);
  EXPECT_EQ(cfg.weight.burn_in_epochs, 74);
  EXPECT_EQ(cfg.batch_size, 128u);
}

TEST(TrainConfig, ObjectiveDefaults) {
  const auto at = TrainConfig::full(ObjectiveKind::kMailAt);
  EXPECT_EQ(at.weight.slope, 10.0);
  EXPECT_EQ(at.weight.bias, -0.5);
  const auto trades = TrainConfig::full(ObjectiveKind::kMailTrades);
  EXPECT_EQ(trades.weight.slope, 2.0);
  EXPECT_EQ(trades.weight.bias, 0.0);
  EXPECT_EQ(trades.objective.tradeoff, 5.0);
  EXPECT_EQ(TrainConfig::full(ObjectiveKind::kMailMart).objective.tradeoff, 6.0);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.lr = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(TrainEpoch, SingleFullBatchStepMatchesHandStep) {
  const Dataset data = small_moons(10);
  TrainConfig cfg = quick(ObjectiveKind::kNatural, 1);
  cfg.batch_size = data.size();
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  const TrainState start = init_state(cfg, data.dim(), data.num_classes);
  const TrainState after = train_epoch(start, cfg, data);

  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), 0);
  const Batch batch = data.batch(rows);
  const auto report = evaluate_objective(start.params, cfg.objective, batch, {}, WeightVector{}, true);
  for (std::size_t k = 0; k < start.params.num_params(); ++k) {
    const double expected = start.params.values()[k] - cfg.lr * report.param_grads->values()[k];
    EXPECT_NEAR(after.params.values()[k], expected, 1e-12);
  }
  EXPECT_EQ(after.epoch, 1);
  ASSERT_EQ(after.history.size(), 1u);
  EXPECT_TRUE(std::isnan(after.history[0].robust_acc));
}

TEST(TrainEpoch, ZeroSlopeMailAtMatchesAt) {
  const Dataset data = small_moons();
  TrainConfig mail = quick(ObjectiveKind::kMailAt, 3);
  mail.weight.slope = 0.0;
  TrainConfig at = mail;
  at.objective.kind = ObjectiveKind::kAt;
  const TrainState a = train(mail, data);
  const TrainState b = train(at, data);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(training_log_csv(a.history), training_log_csv(b.history));
}

TEST(TrainEpoch, BurnInBoundaryInWeightStats) {
  const Dataset data = small_moons();
  TrainConfig cfg = quick(ObjectiveKind::kMailAt, 3);
  cfg.weight.burn_in_epochs = 2;
  const TrainState state = train(cfg, data);
  for (int e = 0; e < 2; ++e) {
    EXPECT_EQ(state.history[e].weights.min, 1.0);
    EXPECT_EQ(state.history[e].weights.max, 1.0);
    EXPECT_EQ(state.history[e].weights.burn_in_fraction, 1.0);
  }
  EXPECT_LT(state.history[2].weights.min, state.history[2].weights.max);
  EXPECT_EQ(state.history[2].weights.burn_in_fraction, 0.0);
  EXPECT_NEAR(state.history[2].weights.mean, 1.0, 1e-9);
}

TEST(TrainEpoch, Deterministic) {
  const Dataset data = small_moons();
  const TrainConfig cfg = quick(ObjectiveKind::kMailTrades, 3);
  const TrainState a = train(cfg, data);
  const TrainState b = train(cfg, data);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.history, b.history);
  TrainConfig other = cfg;
  other.seed = 6;
  EXPECT_NE(train(other, data).params, a.params);
}

TEST(TrainEpoch, NoThreatViolations) {
  Dataset data = small_moons();
  TrainConfig cfg = quick(ObjectiveKind::kMailMart, 2);
  const TrainState state = train(cfg, data);
  for (const auto& r : state.history) EXPECT_EQ(r.threat_violations, 0u);
}

TEST(TrainEpoch, NonFiniteLossNamesEpoch) {
  const Dataset data = small_moons(10);
  TrainConfig cfg = quick(ObjectiveKind::kNatural, 1);
  TrainState state = init_state(cfg, data.dim(), data.num_classes);
  state.params.values()[0] = std::numeric_limits<double>::infinity();
  try {
    train_epoch(state, cfg, data);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
  }
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / "pmat_checkpoint_test";
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  fs::path dir;
};

TEST_F(CheckpointTest, RoundTrip) {
  const Dataset data = small_moons();
  const TrainState state = train(quick(ObjectiveKind::kMailAt, 2), data);
  checkpoint(state, dir / "s.ckpt");
  EXPECT_TRUE(fs::exists(dir / "s.ckpt.json"));
  const TrainState back = restore(dir / "s.ckpt");
  EXPECT_EQ(back.params, state.params);
  EXPECT_EQ(back.velocity, state.velocity);
  EXPECT_EQ(back.epoch, state.epoch);
  EXPECT_EQ(back.rng, state.rng);
  EXPECT_EQ(back.history, state.history);
}

TEST_F(CheckpointTest, ResumeMatchesUninterrupted) {
  const Dataset data = small_moons();
  const TrainConfig cfg = quick(ObjectiveKind::kMailTrades, 4);
  const TrainState full = train(cfg, data);
  TrainState part = init_state(cfg, data.dim(), data.num_classes);
  part = train_epoch(std::move(part), cfg, data);
  part = train_epoch(std::move(part), cfg, data);
  checkpoint(part, dir / "mid.ckpt");
  TrainState resumed = restore(dir / "mid.ckpt");
  resumed = train_epoch(std::move(resumed), cfg, data);
  resumed = train_epoch(std::move(resumed), cfg, data);
  EXPECT_EQ(resumed.params, full.params);
  EXPECT_EQ(training_log_csv(resumed.history), training_log_csv(full.history));
}

TEST_F(CheckpointTest, ArchitectureMismatch) {
  const TrainState state = init_state(quick(ObjectiveKind::kAt, 1), 2, 2);
  checkpoint(state, dir / "a.ckpt");
  const std::vector<std::size_t> other{2, 16, 2};
  EXPECT_THROW(restore(dir / "a.ckpt", other), LoadError);
  const std::vector<std::size_t> same{2, 8, 2};
  EXPECT_NO_THROW(restore(dir / "a.ckpt", same));
}

TEST_F(CheckpointTest, Malformed) {
  const TrainState state = init_state(quick(ObjectiveKind::kAt, 1), 2, 2);
  checkpoint(state, dir / "m.ckpt");
  const auto size = fs::file_size(dir / "m.ckpt");
  fs::resize_file(dir / "m.ckpt", size - 3);
  EXPECT_THROW(restore(dir / "m.ckpt"), LoadError);
  std::ofstream(dir / "junk.ckpt") << "NOTACKPT";
  try {
    restore(dir / "junk.ckpt");
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(TrainingLog, Columns) {
  EXPECT_EQ(training_log_header(),
            "epoch,lr,mean_loss,natural_acc,robust_acc,w_min,w_mean,w_max,w_std,burn_in_fraction");
  EpochRecord r;
  r.epoch = 3;
  r.lr = 0.01;
  const std::string row = training_log_row(r);
  EXPECT_EQ(row.substr(0, 7), "3,0.01,");
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 9);
}

TEST(ConfigJson, RoundTrip) {
  TrainConfig cfg = TrainConfig::desk(ObjectiveKind::kMailMart);
  cfg.generation = AttackLoss::kCwMargin;
  cfg.weight.assignment = Assignment::kStep;
  cfg.weight.margin_kind = MarginKind::kMm;
  cfg.threat.clamp_domain = std::pair{0.0, 1.0};
  const auto j = to_json(cfg);
  const TrainConfig back = train_config_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(back.lr_drops, cfg.lr_drops);
  EXPECT_EQ(back.generation, cfg.generation);
}

TEST(ConfigJson, PartialOverridesAndErrors) {
  const auto cfg = train_config_from_json(nlohmann::json::parse(R"({"epochs": 3, "lr_drops": [[2, 5]],
      "objective": {"kind": "trades"}})"));
  EXPECT_EQ(cfg.epochs, 3);
  EXPECT_EQ(cfg.lr_drops, (std::vector<LrDrop>{{2, 5.0}}));
  EXPECT_EQ(cfg.objective.kind, ObjectiveKind::kTrades);
  EXPECT_THROW(train_config_from_json(nlohmann::json::parse(R"({"epoch": 3})")), ConfigError);
  EXPECT_THROW(train_config_from_json(nlohmann::json::parse(R"({"objective": {"kind": "sgd"}})")),
               ConfigError);
  EXPECT_THROW(train_config_from_json(nlohmann::json::parse(R"({"epochs": "three"})")), ConfigError);
}

TEST(ConfigJson, SyntheticSpecRoundTrip) {
  SyntheticSpec spec{SyntheticKind::kConcentricRings, 77, 0.05, 12, 2};
  const SyntheticSpec back = synthetic_spec_from_json(to_json(spec));
  EXPECT_EQ(to_json(back), to_json(spec));
  EXPECT_EQ(parse_synthetic_kind("moons"), SyntheticKind::kTwoMoons);
}

}  // namespace
}  // namespace pmat
