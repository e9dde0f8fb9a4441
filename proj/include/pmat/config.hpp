#pragma once

#include <string>
#include <string_view>

#include "json.hpp"
#include "pmat/trainer.hpp"

namespace pmat {

// Enum spellings shared by the JSON config and the command line.
AttackLoss parse_attack_loss(std::string_view s);
std::string_view to_string(AttackLoss loss);
Assignment parse_assignment(std::string_view s);
std::string_view to_string(Assignment a);
MarginKind parse_margin_kind(std::string_view s);
ObjectiveKind parse_objective_kind(std::string_view s);
SyntheticKind parse_synthetic_kind(std::string_view s);
std::string_view to_string(SyntheticKind kind);

// TrainConfig <-> JSON, one key per field. Unknown keys are rejected with
// ConfigError; missing keys keep the values already in `base`.
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j, SyntheticSpec base = {});

}  // namespace pmat
