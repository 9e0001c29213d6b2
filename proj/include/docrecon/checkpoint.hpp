#pragma once

#include <filesystem>

#include "docrecon/pairnet.hpp"
#include "docrecon/tensor.hpp"

namespace docrecon {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary container of named shaped arrays; layout in docs/checkpoint.md.
// f32 storage round-trips bit-exactly; f16 stores binary16 values.
void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path,
                     Precision precision = Precision::f32);
ModelParams<float> load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_checkpoint(const ModelParams<float>& params, Precision precision = Precision::f32);
ModelParams<float> decode_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace docrecon
