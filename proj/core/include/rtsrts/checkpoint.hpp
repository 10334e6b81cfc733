#pragma once

// RTSC1 checkpoint: "RTSC1", u32 format version, u32 length + network config
// JSON, u32 parameter count, then per parameter (store order) u32 name
// length, name bytes, u32 rank, rank x u64 dims, f32 values; trailing CRC32
// of everything before it. All integers and floats little-endian.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rtsrts/network.hpp"

namespace rtsrts::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

std::string network_config_json(const network::NetworkConfig& cfg);
network::NetworkConfig network_config_from_json(const std::string& text);

std::vector<std::uint8_t> serialize(const network::ModelState<float>& model);
// `source` names the origin in error messages.
network::ModelState<float> deserialize(std::span<const std::uint8_t> bytes, const std::string& source);

void save(const std::filesystem::path& path, const network::ModelState<float>& model);
network::ModelState<float> load(const std::filesystem::path& path);

}  // namespace rtsrts::checkpoint
