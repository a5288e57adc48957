#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "pathgrad/image_data.h"
#include "pathgrad/model.h"
#include "pathgrad/train.h"
#include "pathgrad_cli/io.h"

namespace pathgrad::testing {

struct TrainedTabular {
  Dataset data;
  cli::Split split;
  Model model;

  std::vector<Tensor> Heldout(std::size_t n) const;
  std::vector<Tensor> Train(std::size_t n) const;
};

/// XAI-bench data (1000 samples) and the 5-64-16-1 MLP trained the way the
/// train command trains it.
TrainedTabular TrainXaiMlp(std::uint64_t data_seed, std::uint64_t model_seed);
/// Shared instance: data seed 7, model seed 1.
const TrainedTabular& XaiMlp();

struct TrainedImages {
  ImageDataset images;
  cli::Split split;
  Model model;
};

/// Blob/ring images (400 samples, seed 7) and the tiny CNN (seed 0).
const TrainedImages& ImageCnn();

Tensor UniformTensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0);

}  // namespace pathgrad::testing
