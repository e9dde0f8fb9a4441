#include "pmat/trainer.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "pmat/binary_io.hpp"
#include "pmat/errors.hpp"
#include "pmat/file_util.hpp"
#include "pmat/margins.hpp"

namespace pmat {
namespace {

constexpr char kCheckpointMagic[8] = {'P', 'M', 'A', 'T', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::string fmt(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  for (const auto& drop : lr_drops) {
    if (drop.epoch < 1 || !(drop.divisor > 0.0)) throw ConfigError("invalid lr drop");
  }
  for (std::size_t h : hidden_layers) {
    if (h == 0) throw ConfigError("hidden layer widths must be positive");
  }
  threat.validate();
  attack.validate();
  weight.validate();
  objective.validate();
}

double TrainConfig::lr_at(int epoch) const {
  double rate = lr;
  for (const auto& drop : lr_drops) {
    if (epoch >= drop.epoch) rate /= drop.divisor;
  }
  return rate;
}

AttackLoss TrainConfig::attack_loss() const {
  return generation ? *generation : loss_for_style(objective.generation_style());
}

void TrainConfig::apply_objective_defaults(ObjectiveKind kind) {
  objective.kind = kind;
  const ObjectiveKind base = objective.baseline();
  if (base == ObjectiveKind::kTrades) {
    objective.tradeoff = 5.0;
  } else if (base == ObjectiveKind::kMart) {
    objective.tradeoff = 6.0;
  }
  if (base == ObjectiveKind::kAt || base == ObjectiveKind::kNatural) {
    weight.slope = 10.0;
    weight.bias = -0.5;
  } else {
    weight.slope = 2.0;
    weight.bias = 0.0;
  }
}

TrainConfig TrainConfig::full(ObjectiveKind kind) {
  TrainConfig cfg;
  cfg.apply_objective_defaults(kind);
  cfg.threat.clamp_domain = std::pair{0.0, 1.0};
  return cfg;
}

TrainConfig TrainConfig::desk(ObjectiveKind kind) {
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.lr_drops = {{23, 10.0}, {27, 10.0}};
  cfg.weight.burn_in_epochs = 15;
  cfg.batch_size = 32;
  cfg.lr = 0.001;
  cfg.weight_decay = 5e-4;
  cfg.threat.epsilon = 0.15;
  cfg.threat.clamp_domain.reset();
  cfg.attack.steps = 10;
  cfg.attack.step_size = 0.03;
  cfg.apply_objective_defaults(kind);
  return cfg;
}

TrainState init_state(const TrainConfig& config, std::size_t input_dim, std::size_t num_classes) {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), config.hidden_layers.begin(), config.hidden_layers.end());
  dims.push_back(num_classes);
  TrainState state;
  state.params = ModelParams::random_init(dims, derive_seed(config.seed, {0}));
  state.velocity = ModelParams(dims);
  state.rng.seed(derive_seed(config.seed, {1}));
  return state;
}

void sgd_step(TrainState& state, const ModelParams& grads, const TrainConfig& config, int epoch) {
  if (!grads.same_shape(state.params)) throw InputError("gradient shape does not match model");
  const double eta = config.lr_at(epoch);
  auto theta = state.params.values();
  auto v = state.velocity.values();
  const auto g = grads.values();
  for (std::size_t k = 0; k < theta.size(); ++k) {
    v[k] = config.momentum * v[k] + g[k] + config.weight_decay * theta[k];
    theta[k] -= eta * v[k];
  }
}

TrainState train_epoch(TrainState state, const TrainConfig& config, const Dataset& data) {
  config.validate();
  data.validate();
  if (data.dim() != state.params.input_dim() || data.num_classes != state.params.num_classes()) {
    throw ConfigError("dataset shape does not match the model");
  }
  const int epoch = state.epoch + 1;
  const bool adversarial = config.objective.kind != ObjectiveKind::kNatural;
  const bool reweighted = config.objective.reweighted();
  const bool burn_in = epoch <= config.weight.burn_in_epochs;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle<std::size_t>(order, state.rng);

  AttackConfig attack = config.attack;
  attack.loss_kind = config.attack_loss();

  EpochRecord record;
  record.epoch = epoch;
  record.lr = config.lr_at(epoch);
  double loss_sum = 0.0;
  std::size_t nat_correct = 0;
  std::size_t adv_correct = 0;
  std::vector<double> all_weights;
  all_weights.reserve(data.size());
  std::size_t batches = 0;
  std::size_t gated_batches = 0;

  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t stop = std::min(order.size(), start + config.batch_size);
    const std::span<const std::size_t> rows(order.data() + start, stop - start);
    const Batch batch = data.batch(rows);
    const std::size_t m = rows.size();
    ++batches;

    std::vector<std::vector<double>> deltas(m);
    std::vector<double> margins;
    const bool need_margins = reweighted && !burn_in;
    if (need_margins) margins.resize(m);

    const auto where = [&] {
      return " (epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches) +
             ", first row " + std::to_string(rows.front()) + ")";
    };

    try {
      for (std::size_t i = 0; i < m; ++i) {
        const auto x = batch.inputs[i];
        const int y = batch.labels[i];
        if (forward(state.params, x).prediction() == y) ++nat_correct;
        if (!adversarial) continue;
        attack.seed = derive_seed(config.seed, {static_cast<std::uint64_t>(epoch), rows[i]});
        Perturbation p = pgd(state.params, x, y, config.threat, attack);
        if (!within_threat(p.delta, config.threat, x)) ++record.threat_violations;
        if (!p.trace.back().crossed) ++adv_correct;
        if (need_margins) margins[i] = margin_from_attack(config.weight.margin_kind, state.params, x, y, p);
        deltas[i] = std::move(p.delta);
      }
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + where());
    }

    WeightVector weights;
    if (reweighted) {
      weights = effective_weights(margins.empty() ? std::vector<double>(m, 0.0) : margins,
                                  config.weight, epoch);
      if (weights.fell_back_to_uniform) ++record.uniform_fallbacks;
    } else {
      weights = {std::vector<double>(m, 1.0), true, false};
    }
    if (burn_in) ++gated_batches;
    all_weights.insert(all_weights.end(), weights.weights.begin(), weights.weights.end());

    BatchLossReport report;
    try {
      report = evaluate_objective(state.params, config.objective, batch, deltas, weights, true);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + where());
    }
    for (double g : report.param_grads->values()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient" + where());
    }
    loss_sum += report.total;
    sgd_step(state, *report.param_grads, config, epoch);
  }

  const double n = static_cast<double>(data.size());
  record.mean_loss = loss_sum / n;
  record.natural_acc = 100.0 * static_cast<double>(nat_correct) / n;
  record.robust_acc = adversarial ? 100.0 * static_cast<double>(adv_correct) / n
                                  : std::numeric_limits<double>::quiet_NaN();
  auto& ws = record.weights;
  ws.min = *std::min_element(all_weights.begin(), all_weights.end());
  ws.max = *std::max_element(all_weights.begin(), all_weights.end());
  double sum = 0.0;
  for (double w : all_weights) sum += w;
  ws.mean = sum / static_cast<double>(all_weights.size());
  double sq = 0.0;
  for (double w : all_weights) sq += (w - ws.mean) * (w - ws.mean);
  ws.std = std::sqrt(sq / static_cast<double>(all_weights.size()));
  ws.burn_in_fraction = static_cast<double>(gated_batches) / static_cast<double>(batches);

  state.epoch = epoch;
  state.history.push_back(record);
  return state;
}

TrainState train(const TrainConfig& config, const Dataset& data) {
  TrainState state = init_state(config, data.dim(), data.num_classes);
  while (state.epoch < config.epochs) state = train_epoch(std::move(state), config, data);
  return state;
}

std::string training_log_header() {
  return "epoch,lr,mean_loss,natural_acc,robust_acc,w_min,w_mean,w_max,w_std,burn_in_fraction";
}

std::string training_log_row(const EpochRecord& r) {
  std::string row = std::to_string(r.epoch);
  for (double v : {r.lr, r.mean_loss, r.natural_acc, r.robust_acc, r.weights.min, r.weights.mean,
                   r.weights.max, r.weights.std, r.weights.burn_in_fraction}) {
    row += ',';
    row += fmt(v);
  }
  return row;
}

std::string training_log_csv(std::span<const EpochRecord> history) {
  std::string out = training_log_header() + "\n";
  for (const auto& r : history) out += training_log_row(r) + "\n";
  return out;
}

void checkpoint(const TrainState& state, const std::filesystem::path& path) {
  write_atomic(path, true, [&](std::ostream& out) {
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    binary::put_u32(out, kCheckpointVersion);
    write_model(out, state.params);
    for (double v : state.velocity.values()) binary::put_f64(out, v);
    binary::put_u64(out, static_cast<std::uint64_t>(state.epoch));
    std::ostringstream rng;
    rng << state.rng;
    const std::string rng_text = rng.str();
    binary::put_u64(out, rng_text.size());
    out.write(rng_text.data(), static_cast<std::streamsize>(rng_text.size()));
    binary::put_u64(out, state.history.size());
    for (const auto& r : state.history) {
      binary::put_u64(out, static_cast<std::uint64_t>(r.epoch));
      for (double v : {r.lr, r.mean_loss, r.natural_acc, r.robust_acc, r.weights.min,
                       r.weights.mean, r.weights.max, r.weights.std, r.weights.burn_in_fraction}) {
        binary::put_f64(out, v);
      }
      binary::put_u64(out, r.threat_violations);
      binary::put_u64(out, r.uniform_fallbacks);
    }
  });
  nlohmann::json side;
  side["format"] = "PMATCKP1";
  side["version"] = kCheckpointVersion;
  side["epoch"] = state.epoch;
  side["model"] = nlohmann::json::parse(model_header_json(state.params));
  side["history_records"] = state.history.size();
  auto sidecar = path;
  sidecar += ".json";
  write_atomic(sidecar, false, [&](std::ostream& out) { out << side.dump(2) << '\n'; });
}

namespace {

TrainState restore_impl(const std::filesystem::path& path,
                        std::optional<std::span<const std::size_t>> expected_dims) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string(), 0);
  binary::Reader reader(in, 0);
  char magic[8];
  reader.bytes(magic, sizeof magic, "checkpoint magic");
  if (!std::equal(magic, magic + 8, kCheckpointMagic)) throw LoadError("bad checkpoint magic", 0);
  if (reader.u32("checkpoint version") != kCheckpointVersion) {
    throw LoadError("unsupported checkpoint version", 8);
  }
  const std::size_t model_at = reader.offset();
  TrainState state;
  state.params = read_model(in, model_at);
  if (expected_dims && !std::equal(expected_dims->begin(), expected_dims->end(),
                                   state.params.dims().begin(), state.params.dims().end())) {
    throw LoadError("checkpoint architecture does not match the configured model", model_at + 8);
  }
  // Resynchronise the reader past the model block.
  const std::size_t model_bytes = 8 + 4 * (state.params.dims().size() + 3) + 8 * state.params.num_params();
  binary::Reader rest(in, model_at + model_bytes);
  state.velocity = ModelParams(state.params.dims(), state.params.hidden_activation());
  for (double& v : state.velocity.values()) v = rest.f64("velocity");
  const std::size_t epoch_at = rest.offset();
  const std::uint64_t epoch = rest.u64("epoch");
  if (epoch > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) {
    throw LoadError("implausible epoch", epoch_at);
  }
  state.epoch = static_cast<int>(epoch);
  const std::size_t rng_at = rest.offset();
  const std::uint64_t rng_len = rest.u64("rng length");
  if (rng_len > (1u << 20)) throw LoadError("implausible rng state length", rng_at);
  std::string rng_text(rng_len, '\0');
  rest.bytes(rng_text.data(), rng_len, "rng state");
  std::istringstream rng_in(rng_text);
  rng_in >> state.rng;
  if (!rng_in) throw LoadError("malformed rng state", rng_at + 8);
  const std::size_t hist_at = rest.offset();
  const std::uint64_t records = rest.u64("history count");
  if (records != epoch) throw LoadError("history length disagrees with epoch", hist_at);
  for (std::uint64_t i = 0; i < records; ++i) {
    EpochRecord r;
    r.epoch = static_cast<int>(rest.u64("record epoch"));
    r.lr = rest.f64("lr");
    r.mean_loss = rest.f64("mean loss");
    r.natural_acc = rest.f64("natural acc");
    r.robust_acc = rest.f64("robust acc");
    r.weights.min = rest.f64("weight min");
    r.weights.mean = rest.f64("weight mean");
    r.weights.max = rest.f64("weight max");
    r.weights.std = rest.f64("weight std");
    r.weights.burn_in_fraction = rest.f64("burn-in fraction");
    r.threat_violations = rest.u64("threat violations");
    r.uniform_fallbacks = rest.u64("uniform fallbacks");
    state.history.push_back(r);
  }
  if (in.peek() != std::ifstream::traits_type::eof()) {
    throw LoadError("trailing bytes after checkpoint", rest.offset());
  }
  return state;
}

}  // namespace

TrainState restore(const std::filesystem::path& path) { return restore_impl(path, std::nullopt); }

TrainState restore(const std::filesystem::path& path, std::span<const std::size_t> expected_dims) {
  return restore_impl(path, expected_dims);
}

}  // namespace pmat
