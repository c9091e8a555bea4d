#ifndef HARFUSE_SERIALIZE_HPP
#define HARFUSE_SERIALIZE_HPP

#include <filesystem>
#include <json.hpp>
#include <vector>

#include "harfuse/data.hpp"
#include "harfuse/model.hpp"
#include "harfuse/optim.hpp"

namespace harfuse {

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const PreprocessOptions& o);
void from_json(const nlohmann::json& j, PreprocessOptions& o);

/// Raw little-endian float64 payload of `tensors`, back to back.
void write_tensor_file(const std::filesystem::path& path, const std::vector<const Tensor*>& tensors);
/// Fills pre-shaped `targets`; LoadError unless the file holds exactly their bytes.
void read_tensor_file(const std::filesystem::path& path, const std::vector<Tensor*>& targets);

}  // namespace harfuse

#endif  // HARFUSE_SERIALIZE_HPP
