#pragma once

#include "cas/dataio.hpp"
#include "cas/finetune.hpp"
#include "cas/network.hpp"
#include "cas/pretrain.hpp"

#include <json.hpp>

namespace cas {

// nlohmann::json conversions. Parsing rejects unknown keys so that typos in
// config files surface as validation errors.

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);
void to_json(nlohmann::json& j, const PretrainConfig& c);
void from_json(const nlohmann::json& j, PretrainConfig& c);
void to_json(nlohmann::json& j, const FinetuneConfig& c);
void from_json(const nlohmann::json& j, FinetuneConfig& c);
void to_json(nlohmann::json& j, const SyntheticConfig& c);
void from_json(const nlohmann::json& j, SyntheticConfig& c);

}  // namespace cas
