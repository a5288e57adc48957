#include "pathgrad/image_data.h"

#include <algorithm>
#include <cmath>
#include <random>

namespace pathgrad {

void ImageSpec::Validate() const {
  if (n_samples == 0) throw Error("image spec needs at least one sample");
  if (side < 8) throw Error("image side must be at least 8");
  if (!(noise >= 0.0) || !(intensity > 0.0 && intensity <= 1.0))
    throw Error("image noise must be >= 0 and intensity in (0, 1]");
  if (!(field >= 0.0 && field < intensity)) throw Error("image field level must lie in [0, intensity)");
  if (jitter < 0) throw Error("image jitter must be >= 0");
  if (!(blob_radius > 0.0 && ring_inner < ring_outer && blob_radius < ring_inner))
    throw Error("image radii must satisfy 0 < blob < inner < outer");
  if (ring_outer + jitter > static_cast<double>(side) / 2.0)
    throw Error("ring does not fit inside the image");
}

double QuantizePixel(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

ImageDataset GenImages(const ImageSpec& spec) {
  spec.Validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<int> shift(-spec.jitter, spec.jitter);
  const std::size_t s = spec.side;
  ImageDataset out;
  for (std::size_t r = 0; r < s; ++r)
    for (std::size_t c = 0; c < s; ++c)
      out.data.feature_names.push_back("p" + std::to_string(r) + "_" + std::to_string(c));
  for (std::size_t n = 0; n < spec.n_samples; ++n) {
    const double label = static_cast<double>(n % 2);
    const double cy = static_cast<double>(s - 1) / 2.0 + shift(rng);
    const double cx = static_cast<double>(s - 1) / 2.0 + shift(rng);
    Tensor img({1, s, s});
    Tensor mask({1, s, s});
    for (std::size_t r = 0; r < s; ++r)
      for (std::size_t c = 0; c < s; ++c) {
        const double d = std::hypot(static_cast<double>(r) - cy, static_cast<double>(c) - cx);
        const bool on = label == 0.0 ? d <= spec.blob_radius
                                     : d >= spec.ring_inner && d <= spec.ring_outer;
        const double v = (on ? spec.intensity : spec.field) + spec.noise * noise(rng);
        img[r * s + c] = QuantizePixel(v);
        mask[r * s + c] = on ? 1.0 : 0.0;
      }
    out.data.inputs.push_back(std::move(img));
    out.data.labels.push_back(label);
    out.masks.push_back(std::move(mask));
  }
  return out;
}

}  // namespace pathgrad
