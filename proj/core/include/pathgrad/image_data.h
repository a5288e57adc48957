#pragma once

#include <cstdint>
#include <vector>

#include "pathgrad/train.h"

namespace pathgrad {

/// Two-class 16x16 field: class 0 is a filled disc at the centre ("blob"),
/// class 1 an annulus ("ring"). Off-pattern pixels sit at `field`, pattern
/// pixels at `intensity`. Pattern centres jitter by up to `jitter` pixels and
/// every pixel gets Gaussian noise; values are clamped to [0, 1] and quantized
/// to multiples of 1/255 so they survive a PGM round trip.
struct ImageSpec {
  std::size_t n_samples = 400;
  std::size_t side = 16;
  std::uint64_t seed = 0;
  double field = 0.0;
  double intensity = 0.8;
  double noise = 0.1;
  int jitter = 1;
  double blob_radius = 3.0;
  double ring_inner = 4.5;
  double ring_outer = 6.5;

  void Validate() const;
};

struct ImageDataset {
  /// Inputs shaped [1, side, side]; labels are class indices.
  Dataset data;
  /// Pattern pixels of each sample, shaped like the input.
  std::vector<Tensor> masks;
};

ImageDataset GenImages(const ImageSpec& spec);

/// Rounds into [0, 1] on the 1/255 lattice.
double QuantizePixel(double v);

}  // namespace pathgrad
