#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "synforge/model.hpp"

namespace synforge {

inline constexpr int kCheckpointVersion = 1;

// Layout: 8 magic bytes "SYNFCKPT", u32 format version, u64 manifest length,
// the JSON manifest, then every tensor as little-endian float32 in manifest
// order (row-major). The manifest carries the grammar text and vocabulary so a
// checkpoint is self-contained.
void save_checkpoint(const Model& model, const std::filesystem::path& path, const nlohmann::json& extra = {});

struct LoadedCheckpoint {
  Model model;
  nlohmann::json manifest;
};

// Throws CheckpointError on bad magic, version mismatch, hash or shape
// mismatch. With `expected` set, the stored grammar hash must match it.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const Grammar* expected = nullptr);

// Rounds every parameter through float32, so a saved model decodes exactly
// like the in-memory one.
void round_to_float32(nn::ParamSet& params);

}  // namespace synforge
