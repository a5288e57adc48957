#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pathgrad/model.h"

namespace pathgrad {

/// PGRD weight file.
///
///   "PGRD"  u32 version
///   repeated until end of file:
///     u32 name length, UTF-8 name, u32 rank, u64 extents[rank],
///     f64 payload[product(extents)]
///
/// All integers and floats are little-endian. The architecture travels as
/// three records ("model.input_shape", "model.layers" [L, 4] with rows
/// {kind, in, out, kernel}, "model.tap"), followed by one record per stored
/// tensor named "<layer>.<param>".
inline constexpr std::uint32_t kWeightFormatVersion = 1;

/// Records named "meta.*" ride along and are ignored when loading.
using WeightMetadata = std::vector<std::pair<std::string, Tensor>>;

std::vector<std::uint8_t> EncodeWeights(const Model& model, const WeightMetadata& metadata = {});
/// Throws Error naming the byte offset of the first malformed field.
Model DecodeWeights(const std::vector<std::uint8_t>& bytes);

void SaveWeights(const Model& model, const std::filesystem::path& path,
                 const WeightMetadata& metadata = {});
Model LoadWeights(const std::filesystem::path& path);

}  // namespace pathgrad
