#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "convformer/model.hpp"

namespace convformer {

inline constexpr int kCheckpointVersion = 1;

/// FNV-1a, 64 bit.
std::uint64_t fnv1a64(std::string_view bytes);

/// JSON document holding the model config, every parameter tensor (name,
/// shape, trainable flag, values) and a checksum of the canonical dump of
/// everything else. Identical states give identical bytes.
std::string serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(const std::string& text, const std::string& source = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace convformer
