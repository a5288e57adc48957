#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pathgrad/model.h"

namespace pathgrad {

/// Inputs with class indices or scalar targets (stored as doubles).
struct Dataset {
  std::vector<Tensor> inputs;
  std::vector<double> labels;
  std::vector<std::string> feature_names;

  std::size_t size() const { return inputs.size(); }
  /// Throws unless lengths agree and every input has the same shape.
  void Validate() const;
  /// Stacks the selected inputs into [n, ...input_shape].
  Tensor Stack(std::span<const std::size_t> indices) const;
  Tensor StackAll() const;
  Dataset Subset(std::span<const std::size_t> indices) const;
};

enum class Loss { kMeanSquaredError, kCrossEntropy };

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 100;
  double momentum = 0.0;
  std::uint64_t seed = 0;
  Loss loss = Loss::kMeanSquaredError;
  /// 0 selects full batch for up to 2048 samples, else 256.
  std::size_t batch_size = 0;
  double batchnorm_momentum = 0.1;
};

struct TrainReport {
  std::vector<double> epoch_loss;
};

/// Plain (optionally momentum) SGD, updating the model in place.
///
/// MSE regresses output[0] (or the full output row) on the labels. Cross
/// entropy treats labels as class indices and, when the model ends with a
/// softmax layer, trains on the logits feeding it. Batch-norm layers use batch
/// statistics and update their running statistics as they go.
/// Throws if the loss stops being finite, naming the epoch.
TrainReport TrainSgd(Model& model, const Dataset& data, const TrainConfig& config);

/// Maps {0, 1} labels to {-1, +1} regression targets.
Dataset SignedTargets(const Dataset& data);

}  // namespace pathgrad
