#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pathgrad/tensor.h"

namespace pathgrad {

/// Binary PGM (P5, one channel) or PPM (P6, three channels), maxval 255.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;  // row-major, channels interleaved
};

/// Optional comment lines go into the header after the magic.
std::vector<std::uint8_t> EncodePnm(const Image& image, const std::vector<std::string>& comments = {});
Image DecodePnm(const std::vector<std::uint8_t>& bytes);
void WritePnm(const Image& image, const std::filesystem::path& path,
              const std::vector<std::string>& comments = {});
Image ReadPnm(const std::filesystem::path& path);

/// Grayscale image of a [H, W] or [1, H, W] tensor with values in [0, 1].
Image GrayFromTensor(const Tensor& t);
/// [1, H, W] tensor with values v / 255.
Tensor TensorFromGray(const Image& image);

/// |score| scaled so the largest magnitude maps to 255.
Image MagnitudeHeatmap(const Tensor& scores);
/// Negative scores in the red channel, positive in green, scaled by max |score|.
Image SignedHeatmap(const Tensor& scores);

/// Binary mask from a PGM: nonzero pixels are 1.
Tensor MaskFromGray(const Image& image);

}  // namespace pathgrad
