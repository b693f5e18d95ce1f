#pragma once

#include <cstdint>
#include <filesystem>

#include "json.hpp"
#include "pickt/core/params.hpp"
#include "pickt/data/features.hpp"
#include "pickt/model/config.hpp"

namespace pickt::model {

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

nlohmann::json vocab_to_json(const data::Vocabularies& vocab);
data::Vocabularies vocab_from_json(const nlohmann::json& j);

struct Checkpoint {
  ModelConfig config;
  data::Vocabularies vocab;
  ParamStore params;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  nlohmann::json extra = nlohmann::json::object();
};

/// "PICKTCKPT", version byte 1, u32 JSON length, JSON metadata, u32 tensor
/// count, then per tensor u16 name length, name, u8 rank, u32 dims, float32
/// little-endian values. Byte-identical for identical inputs.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Validates magic, version and every length; DataError on mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pickt::model
