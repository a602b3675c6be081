#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "echomil/dataset.hpp"
#include "echomil/metrics.hpp"
#include "echomil/model.hpp"
#include "echomil/train_config.hpp"

namespace echomil {

// JSON conversion for configuration types. Readers start from defaults,
// accept any subset of keys and reject unknown keys with a ConfigError that
// names the offending key path.

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& where = "model");

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& where = "train");

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j, const std::string& where = "synth");

nlohmann::json to_json(const MetricsReport& report);
nlohmann::json to_json(const MeanStd& value);

/// Throws ConfigError naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                         const std::string& where);

}  // namespace echomil
