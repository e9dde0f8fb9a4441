#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pmat/attacks.hpp"
#include "pmat/data.hpp"
#include "pmat/objectives.hpp"
#include "pmat/reweighting.hpp"
#include "pmat/rng.hpp"

namespace pmat {

struct LrDrop {
  int epoch = 0;         // first epoch trained at the reduced rate
  double divisor = 10.0;

  friend bool operator==(const LrDrop&, const LrDrop&) = default;
};

struct TrainConfig {
  int epochs = 100;
  std::size_t batch_size = 128;
  double lr = 0.01;
  std::vector<LrDrop> lr_drops = {{75, 10.0}, {90, 10.0}};
  double momentum = 0.9;
  double weight_decay = 3.5e-3;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden_layers = {16, 16};
  ThreatModel threat;
  AttackConfig attack;
  // Perturbation loss; unset means the objective's own (KL for TRADES, CE otherwise).
  std::optional<AttackLoss> generation;
  WeightConfig weight;
  ObjectiveConfig objective;

  void validate() const;
  double lr_at(int epoch) const;
  AttackLoss attack_loss() const;

  // Full-scale schedule (100 epochs, drops at 75 and 90, burn-in 74,
  // eps 8/255, alpha 2/255, 10 steps) with objective-specific weight and
  // trade-off defaults.
  static TrainConfig full(ObjectiveKind kind);
  // Desk-scale two-moons schedule: 30 epochs, burn-in 15, drops at 23 and 27,
  // eps 0.15, alpha 0.03, 10 steps, no domain clamp, batch 32, lr 0.001 on
  // summed batch losses.
  static TrainConfig desk(ObjectiveKind kind);
  // Slope/bias and trade-off used for each objective family.
  void apply_objective_defaults(ObjectiveKind kind);
};

struct WeightStats {
  double min = 1.0;
  double mean = 1.0;
  double max = 1.0;
  double std = 0.0;
  double burn_in_fraction = 1.0;  // fraction of batches inside the burn-in window

  friend bool operator==(const WeightStats&, const WeightStats&) = default;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  double natural_acc = 0.0;  // percent, pre-step predictions on training batches
  double robust_acc = 0.0;   // percent, under the train-time attack (NaN without one)
  WeightStats weights;
  std::uint64_t threat_violations = 0;
  std::uint64_t uniform_fallbacks = 0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainState {
  ModelParams params;
  ModelParams velocity;
  int epoch = 0;  // completed epochs
  Engine rng;     // drives the per-epoch shuffle
  std::vector<EpochRecord> history;
};

TrainState init_state(const TrainConfig& config, std::size_t input_dim, std::size_t num_classes);

// v <- mu v + g + lambda theta; theta <- theta - eta_t v, with eta_t taken
// from the schedule at `epoch`.
void sgd_step(TrainState& state, const ModelParams& grads, const TrainConfig& config, int epoch);

// One pass over `data`: attack, margin, weights, one SGD step per batch.
// Throws NumericError (state untouched) when a batch loss is non-finite.
TrainState train_epoch(TrainState state, const TrainConfig& config, const Dataset& data);

TrainState train(const TrainConfig& config, const Dataset& data);

// Training log CSV.
std::string training_log_header();
std::string training_log_row(const EpochRecord& record);
std::string training_log_csv(std::span<const EpochRecord> history);

// Binary checkpoint ("PMATCKP1"): the model block in the checkpoint format of
// the network, then velocity, epoch, RNG state and history. Written
// atomically, with a JSON sidecar.
void checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState restore(const std::filesystem::path& path);
// Also rejects a checkpoint whose layer widths differ from `expected_dims`.
TrainState restore(const std::filesystem::path& path, std::span<const std::size_t> expected_dims);

}  // namespace pmat
