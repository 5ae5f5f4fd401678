#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "dr2s/regressor/net.hpp"

namespace dr2s::regressor {

// Binary checkpoint, little-endian:
//   char[8]  magic "DR2SNET\0"
//   u32      version (1)
//   u32      input channels
//   u32      block count (4)
//   u32 x 3  per block: in channels, out channels, stride
//   u64      parameter count
//   f64[n]   parameters in store order
//   u64      FNV-1a 64 of every preceding byte
//
// Metadata (config, seed, loss trace, ...) lives in a JSON file next to it,
// same stem with extension ".json".
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const RegressorNet& net,
                     const nlohmann::json& meta = nlohmann::json::object());

/// Throws IoError when unreadable and IntegrityError (naming the file) on a
/// bad magic, version, layout or checksum.
RegressorNet load_checkpoint(const std::filesystem::path& path);

/// Sidecar metadata; empty object when the sidecar is missing.
nlohmann::json load_checkpoint_meta(const std::filesystem::path& path);

std::filesystem::path checkpoint_meta_path(const std::filesystem::path& path);

}  // namespace dr2s::regressor
