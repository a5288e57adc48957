#include "pathgrad/train.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace pathgrad {

void Dataset::Validate() const {
  if (inputs.size() != labels.size())
    throw Error("dataset has " + std::to_string(inputs.size()) + " inputs but " +
                std::to_string(labels.size()) + " labels");
  for (const Tensor& x : inputs)
    if (x.shape() != inputs.front().shape())
      throw Error("dataset inputs have inconsistent shapes " + ShapeString(x.shape()) + " and " +
                  ShapeString(inputs.front().shape()));
}

Tensor Dataset::Stack(std::span<const std::size_t> indices) const {
  if (inputs.empty()) throw Error("cannot stack an empty dataset");
  Shape shape = inputs.front().shape();
  shape.insert(shape.begin(), indices.size());
  std::vector<double> data;
  data.reserve(ShapeSize(shape));
  for (std::size_t i : indices) {
    const auto v = inputs.at(i).data();
    data.insert(data.end(), v.begin(), v.end());
  }
  return Tensor(std::move(shape), std::move(data));
}

Tensor Dataset::StackAll() const {
  std::vector<std::size_t> all(size());
  std::iota(all.begin(), all.end(), 0);
  return Stack(all);
}

Dataset Dataset::Subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.feature_names = feature_names;
  for (std::size_t i : indices) {
    out.inputs.push_back(inputs.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

Dataset SignedTargets(const Dataset& data) {
  Dataset out = data;
  for (double& y : out.labels) y = y > 0.5 ? 1.0 : -1.0;
  return out;
}

TrainReport TrainSgd(Model& model, const Dataset& data, const TrainConfig& config) {
  if (!(config.learning_rate > 0.0)) throw Error("learning rate must be positive");
  if (config.epochs < 0) throw Error("epoch count must be non-negative");
  data.Validate();
  TrainReport report;
  if (config.epochs == 0) return report;
  if (data.size() == 0) throw Error("cannot train on an empty dataset");

  const std::size_t n = data.size();
  const std::size_t batch =
      config.batch_size > 0 ? std::min(config.batch_size, n) : (n <= 2048 ? n : 256);
  std::vector<Layer>& layers = model.mutable_layers();
  const bool softmax_head = layers.back().spec.kind == LayerKind::kSoftmax;
  const int stop_after = config.loss == Loss::kCrossEntropy && softmax_head
                             ? static_cast<int>(layers.size()) - 2
                             : -1;

  std::vector<std::vector<Tensor>> velocity(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i)
    for (const Tensor& p : layers[i].params) velocity[i].push_back(Tensor(p.shape()));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (batch < n) std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t count = std::min(batch, n - start);
      const std::span<const std::size_t> idx(order.data() + start, count);
      Tape tape;
      const Model::Bound bound = model.Bind(tape, true);
      const Var x = tape.Constant(data.Stack(idx));
      const Model::Trace trace = model.Forward(tape, bound, x, ForwardMode::kTraining, stop_after);
      const Var out = trace.outputs.back();
      Var loss;
      if (config.loss == Loss::kCrossEntropy) {
        std::vector<std::size_t> labels;
        for (std::size_t i : idx) labels.push_back(static_cast<std::size_t>(data.labels[i]));
        loss = tape.CrossEntropy(out, std::move(labels));
      } else {
        const Tensor& pred = tape.value(out);
        const std::size_t width = pred.size() / count;
        Tensor target(pred.shape());
        for (std::size_t r = 0; r < count; ++r)
          for (std::size_t c = 0; c < width; ++c) target[r * width + c] = data.labels[idx[r]];
        loss = tape.MeanSquaredError(out, tape.Constant(std::move(target)));
      }
      const double value = tape.value(loss)[0];
      if (!std::isfinite(value))
        throw Error("training diverged at epoch " + std::to_string(epoch) + " (loss " +
                    std::to_string(value) + ")");
      epoch_loss += value * static_cast<double>(count);
      tape.Backward(loss);

      for (std::size_t i = 0; i < layers.size(); ++i) {
        const bool bn = layers[i].spec.kind == LayerKind::kBatchNorm;
        const std::size_t trainable = bn ? 2 : layers[i].params.size();
        for (std::size_t p = 0; p < trainable; ++p) {
          const Tensor g = tape.grad(bound.params[i][p]);
          Tensor& v = velocity[i][p];
          Tensor& w = layers[i].params[p];
          for (std::size_t k = 0; k < w.size(); ++k) {
            v[k] = config.momentum * v[k] - config.learning_rate * g[k];
            w[k] += v[k];
          }
        }
      }
      for (const auto& [layer, node] : trace.batchnorm_nodes) {
        const auto stats = tape.BatchStatistics(node);
        const double m = config.batchnorm_momentum;
        for (std::size_t s = 0; s < 2; ++s) {
          Tensor& running = layers[layer].params[2 + s];
          for (std::size_t k = 0; k < running.size(); ++k)
            running[k] = (1.0 - m) * running[k] + m * stats[s][k];
        }
      }
    }
    report.epoch_loss.push_back(epoch_loss / static_cast<double>(n));
  }
  return report;
}

}  // namespace pathgrad
