#pragma once

#include <cstdint>
#include <filesystem>

#include "abanet/model.hpp"

namespace abanet {

// File layout, all integers little-endian:
//   "ABACKPT\0" | u32 version | u64 config digest | u64 payload checksum |
//   u64 manifest bytes | JSON manifest | raw f64 parameter data
// The manifest records the config, both vocabularies and {name, shape,
// offset} for every canonical parameter. The checksum covers manifest and
// data.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const AbaNet& model, const ParamStore& store);

struct LoadedCheckpoint {
  AbaNet model;
  ParamStore params;
  std::uint64_t config_digest = 0;
};

// Rebuilds the model recorded in the file. With `expected`, its architecture
// must produce the recorded config digest. Corruption and mismatches raise
// DataError mentioning "digest".
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

// FNV-1a over the whole file.
std::uint64_t file_digest(const std::filesystem::path& path);

}  // namespace abanet
