#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace mergelab {

// Storage dtypes of the checkpoint container. All arithmetic happens in
// f32 after decode; f16/bf16 exist only at the storage boundary.
enum class DType { f32, f16, bf16 };

std::size_t dtype_width(DType d);
std::string_view dtype_name(DType d); // "F32", "F16", "BF16"
std::optional<DType> dtype_from_name(std::string_view name);

// Scalar conversions, round-to-nearest-even on the narrowing side.
float f16_to_f32(std::uint16_t h);
std::uint16_t f32_to_f16(float f);
float bf16_to_f32(std::uint16_t h);
std::uint16_t f32_to_bf16(float f);

// Buffer <-> f32 array. byte length must be a multiple of dtype_width.
Eigen::ArrayXf decode_to_f32(const std::uint8_t* data, std::size_t nbytes, DType d);
std::vector<std::uint8_t> encode_from_f32(const Eigen::ArrayXf& values, DType d);

} // namespace mergelab
