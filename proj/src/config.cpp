#include "pmat/config.hpp"

#include <set>

#include "pmat/errors.hpp"

namespace pmat {
namespace {

using nlohmann::json;

template <typename T>
void read(const json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

std::string read_string(const json& j, const char* key) {
  try {
    return j.at(key).get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

AttackLoss parse_attack_loss(std::string_view s) {
  if (s == "ce" || s == "pgd") return AttackLoss::kCrossEntropy;
  if (s == "cw") return AttackLoss::kCwMargin;
  if (s == "kl") return AttackLoss::kKl;
  throw ConfigError("unknown attack loss '" + std::string(s) + "' (ce, cw, kl)");
}

std::string_view to_string(AttackLoss loss) {
  switch (loss) {
    case AttackLoss::kCrossEntropy: return "ce";
    case AttackLoss::kCwMargin: return "cw";
    case AttackLoss::kKl: return "kl";
  }
  return "unknown";
}

Assignment parse_assignment(std::string_view s) {
  if (s == "sigmoid") return Assignment::kSigmoid;
  if (s == "hinge") return Assignment::kHinge;
  if (s == "step") return Assignment::kStep;
  throw ConfigError("unknown assignment '" + std::string(s) + "' (sigmoid, hinge, step)");
}

std::string_view to_string(Assignment a) {
  switch (a) {
    case Assignment::kSigmoid: return "sigmoid";
    case Assignment::kHinge: return "hinge";
    case Assignment::kStep: return "step";
  }
  return "unknown";
}

MarginKind parse_margin_kind(std::string_view s) {
  for (MarginKind k : {MarginKind::kPmNat, MarginKind::kPmAdv, MarginKind::kPmDif, MarginKind::kMm,
                       MarginKind::kLps}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown margin kind '" + std::string(s) + "'");
}

ObjectiveKind parse_objective_kind(std::string_view s) {
  for (ObjectiveKind k : {ObjectiveKind::kNatural, ObjectiveKind::kAt, ObjectiveKind::kTrades,
                          ObjectiveKind::kMart, ObjectiveKind::kMailAt, ObjectiveKind::kMailTrades,
                          ObjectiveKind::kMailMart}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown objective '" + std::string(s) + "'");
}

SyntheticKind parse_synthetic_kind(std::string_view s) {
  if (s == "gaussian_blobs" || s == "blobs") return SyntheticKind::kGaussianBlobs;
  if (s == "two_moons" || s == "moons") return SyntheticKind::kTwoMoons;
  if (s == "concentric_rings" || s == "rings") return SyntheticKind::kConcentricRings;
  throw ConfigError("unknown synthetic dataset '" + std::string(s) + "'");
}

std::string_view to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::kGaussianBlobs: return "gaussian_blobs";
    case SyntheticKind::kTwoMoons: return "two_moons";
    case SyntheticKind::kConcentricRings: return "concentric_rings";
  }
  return "unknown";
}

json to_json(const TrainConfig& cfg) {
  json j;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["lr"] = cfg.lr;
  j["lr_drops"] = json::array();
  for (const auto& d : cfg.lr_drops) j["lr_drops"].push_back({{"epoch", d.epoch}, {"divisor", d.divisor}});
  j["momentum"] = cfg.momentum;
  j["weight_decay"] = cfg.weight_decay;
  j["seed"] = cfg.seed;
  j["hidden_layers"] = cfg.hidden_layers;
  j["threat"]["epsilon"] = cfg.threat.epsilon;
  j["threat"]["clamp_domain"] =
      cfg.threat.clamp_domain ? json::array({cfg.threat.clamp_domain->first, cfg.threat.clamp_domain->second})
                              : json(nullptr);
  j["attack"] = {{"steps", cfg.attack.steps},
                 {"step_size", cfg.attack.step_size},
                 {"rand_init", cfg.attack.rand_init}};
  j["generation"] = cfg.generation ? json(std::string(to_string(*cfg.generation))) : json(nullptr);
  j["weight"] = {{"assignment", std::string(to_string(cfg.weight.assignment))},
                 {"slope", cfg.weight.slope},
                 {"bias", cfg.weight.bias},
                 {"step_alpha", cfg.weight.step_alpha},
                 {"burn_in_epochs", cfg.weight.burn_in_epochs},
                 {"margin_kind", std::string(to_string(cfg.weight.margin_kind))}};
  j["objective"] = {{"kind", std::string(to_string(cfg.objective.kind))},
                    {"tradeoff", cfg.objective.tradeoff}};
  return j;
}

TrainConfig train_config_from_json(const json& j, TrainConfig cfg) {
  reject_unknown(j,
                 {"epochs", "batch_size", "lr", "lr_drops", "momentum", "weight_decay", "seed",
                  "hidden_layers", "threat", "attack", "generation", "weight", "objective"},
                 "train config");
  read(j, "epochs", cfg.epochs);
  read(j, "batch_size", cfg.batch_size);
  read(j, "lr", cfg.lr);
  if (j.contains("lr_drops")) {
    cfg.lr_drops.clear();
    for (const auto& d : j.at("lr_drops")) {
      LrDrop drop;
      if (d.is_array() && d.size() == 2) {
        drop.epoch = d[0].get<int>();
        drop.divisor = d[1].get<double>();
      } else {
        reject_unknown(d, {"epoch", "divisor"}, "lr_drops entry");
        read(d, "epoch", drop.epoch);
        read(d, "divisor", drop.divisor);
      }
      cfg.lr_drops.push_back(drop);
    }
  }
  read(j, "momentum", cfg.momentum);
  read(j, "weight_decay", cfg.weight_decay);
  read(j, "seed", cfg.seed);
  read(j, "hidden_layers", cfg.hidden_layers);
  if (j.contains("threat")) {
    const auto& t = j.at("threat");
    reject_unknown(t, {"epsilon", "clamp_domain"}, "threat");
    read(t, "epsilon", cfg.threat.epsilon);
    if (t.contains("clamp_domain")) {
      const auto& box = t.at("clamp_domain");
      if (box.is_null()) {
        cfg.threat.clamp_domain.reset();
      } else if (box.is_array() && box.size() == 2) {
        cfg.threat.clamp_domain = std::pair{box[0].get<double>(), box[1].get<double>()};
      } else {
        throw ConfigError("threat.clamp_domain must be null or [lo, hi]");
      }
    }
  }
  if (j.contains("attack")) {
    const auto& a = j.at("attack");
    reject_unknown(a, {"steps", "step_size", "rand_init"}, "attack");
    read(a, "steps", cfg.attack.steps);
    read(a, "step_size", cfg.attack.step_size);
    read(a, "rand_init", cfg.attack.rand_init);
  }
  if (j.contains("generation")) {
    const auto& g = j.at("generation");
    if (g.is_null() || (g.is_string() && g.get<std::string>() == "auto")) {
      cfg.generation.reset();
    } else {
      cfg.generation = parse_attack_loss(read_string(j, "generation"));
    }
  }
  if (j.contains("weight")) {
    const auto& w = j.at("weight");
    reject_unknown(w, {"assignment", "slope", "bias", "step_alpha", "burn_in_epochs", "margin_kind"},
                   "weight");
    if (w.contains("assignment")) cfg.weight.assignment = parse_assignment(read_string(w, "assignment"));
    read(w, "slope", cfg.weight.slope);
    read(w, "bias", cfg.weight.bias);
    read(w, "step_alpha", cfg.weight.step_alpha);
    read(w, "burn_in_epochs", cfg.weight.burn_in_epochs);
    if (w.contains("margin_kind")) cfg.weight.margin_kind = parse_margin_kind(read_string(w, "margin_kind"));
  }
  if (j.contains("objective")) {
    const auto& o = j.at("objective");
    reject_unknown(o, {"kind", "tradeoff"}, "objective");
    if (o.contains("kind")) cfg.objective.kind = parse_objective_kind(read_string(o, "kind"));
    read(o, "tradeoff", cfg.objective.tradeoff);
  }
  cfg.validate();
  return cfg;
}

json to_json(const SyntheticSpec& spec) {
  return {{"kind", std::string(to_string(spec.kind))},
          {"n_per_class", spec.n_per_class},
          {"noise", spec.noise},
          {"seed", spec.seed},
          {"num_classes", spec.num_classes}};
}

SyntheticSpec synthetic_spec_from_json(const json& j, SyntheticSpec spec) {
  reject_unknown(j, {"kind", "n_per_class", "noise", "seed", "num_classes"}, "synthetic spec");
  if (j.contains("kind")) spec.kind = parse_synthetic_kind(read_string(j, "kind"));
  read(j, "n_per_class", spec.n_per_class);
  read(j, "noise", spec.noise);
  read(j, "seed", spec.seed);
  read(j, "num_classes", spec.num_classes);
  spec.validate();
  return spec;
}

}  // namespace pmat
