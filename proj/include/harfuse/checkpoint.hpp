#ifndef HARFUSE_CHECKPOINT_HPP
#define HARFUSE_CHECKPOINT_HPP

#include <filesystem>
#include <memory>
#include <optional>

#include "harfuse/model.hpp"
#include "harfuse/optim.hpp"

namespace harfuse {

inline constexpr int kCheckpointVersion = 1;

/// Directory layout: params.json (version, config, ordered {name, shape}),
/// params.bin (little-endian float64 in that order), and optimizer.bin when
/// an optimizer state is given (m then v for each trainable entry).
void save_checkpoint(FusionModel& model, const std::filesystem::path& dir, const AdamState* optimizer = nullptr);

struct LoadedCheckpoint {
  std::unique_ptr<FusionModel> model;
  std::optional<AdamState> optimizer;
};

/// Throws LoadError on version mismatch, malformed metadata, shape
/// disagreement or a size mismatch in any binary file. Nothing is returned
/// unless every tensor was read.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);
/// Also rejects a checkpoint whose stored config differs from `expected`.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir, const ModelConfig& expected);

}  // namespace harfuse

#endif  // HARFUSE_CHECKPOINT_HPP
