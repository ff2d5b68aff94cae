#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "odm/model.hpp"

namespace odm {

inline constexpr char kCheckpointMagic[4] = {'O', 'D', 'M', 'Q'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Little-endian layout:
///   "ODMQ", u32 version,
///   u32 length + config text (key=value lines),
///   u32 count + tensor records (u32 name length, name, 4 x i32 shape, f32 payload),
///   u32 count + activation QuantParams (i32 layer, f32 alpha_l, f32 alpha_u, i32 bits),
///   u32 count + frozen weight QuantParams (same layout),
///   u32 length + offset plan text,
///   u32 count + OffsetParams (i32 layer, u8 kind, i32 bits, f32 alpha_l, f32 alpha_u,
///                             u32 channels, f32 values).
std::string serialize_checkpoint(const SRModel& model);
SRModel deserialize_checkpoint(const std::string& bytes);

/// Writes to a temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const SRModel& model);
SRModel load_checkpoint(const std::filesystem::path& path);

/// key=value text of the model configuration, and its inverse.
std::string model_config_text(const SRModelConfig& config, bool quantized);
SRModelConfig parse_model_config_text(const std::string& text, bool* quantized = nullptr);

/// Writes `contents` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace odm
