#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pathgrad/tape.h"
#include "pathgrad/tensor.h"

namespace pathgrad {

enum class LayerKind { kDense, kConv2d, kRelu, kTanh, kBatchNorm, kSoftmax, kFlatten, kMax };

std::string LayerKindName(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  std::size_t in = 0;      // dense in / conv in-channels / batchnorm dim
  std::size_t out = 0;     // dense out / conv out-channels
  std::size_t kernel = 0;  // conv kernel side

  static LayerSpec Dense(std::size_t in, std::size_t out) { return {LayerKind::kDense, in, out, 0}; }
  static LayerSpec Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel) {
    return {LayerKind::kConv2d, in_channels, out_channels, kernel};
  }
  static LayerSpec Relu() { return {LayerKind::kRelu}; }
  static LayerSpec Tanh() { return {LayerKind::kTanh}; }
  static LayerSpec BatchNorm(std::size_t dim) { return {LayerKind::kBatchNorm, dim}; }
  static LayerSpec Softmax() { return {LayerKind::kSoftmax}; }
  static LayerSpec Flatten() { return {LayerKind::kFlatten}; }
  static LayerSpec Max() { return {LayerKind::kMax}; }

  std::string ToString() const;
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Index of the layer whose output is the representation; kInputTap selects
/// the model input itself.
inline constexpr int kInputTap = -1;

struct ModelSpec {
  Shape input_shape;
  std::vector<LayerSpec> layers;
  std::optional<int> representation_tap;  // default: input of the last dense/conv layer
  std::uint64_t seed = 0;

  /// fc 5->64 + BN + tanh, fc 64->16 + tanh, fc 16->1.
  static ModelSpec XaiBenchMlp(std::uint64_t seed = 0);
  /// conv(1,4,3) + relu + flatten + dense(4*(side-2)^2, classes) + softmax on [1, side, side].
  static ModelSpec TinyCnn(std::size_t side, std::size_t classes, std::uint64_t seed = 0);
};

struct Layer {
  LayerSpec spec;
  // dense/conv: {weight, bias}; batchnorm: {gamma, beta, running_mean, running_var}.
  std::vector<Tensor> params;
};

enum class ForwardMode { kInference, kTraining };

/// Layered differentiable function with an output head and a representation
/// tap. Immutable once built or trained; safe to share across threads.
class Model {
 public:
  /// Builds and initializes weights uniformly in +-sqrt(6 / (fan_in + fan_out)).
  static Model Build(const ModelSpec& spec);
  /// Wraps explicit layers; validates shapes and parameter tensors.
  static Model FromLayers(Shape input_shape, std::vector<Layer> layers,
                          std::optional<int> representation_tap = std::nullopt);

  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return layer_shapes_.back(); }
  const Shape& representation_shape() const;
  /// Output shape (without batch axis) of layer i; i = kInputTap gives the input shape.
  const Shape& layer_shape(int i) const;
  std::size_t input_size() const { return ShapeSize(input_shape_); }
  std::size_t output_size() const { return ShapeSize(output_shape()); }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& mutable_layers() { return layers_; }
  int representation_tap() const { return tap_; }
  void set_representation_tap(int tap);
  static int DefaultTap(const std::vector<LayerSpec>& layers);

  /// Trainable parameters (running statistics excluded).
  std::size_t ParameterCount() const;
  /// Every stored tensor with a stable "<layer>.<name>" key, in layer order.
  std::vector<std::pair<std::string, const Tensor*>> NamedWeights() const;

  /// Parameter handles bound to one tape.
  struct Bound {
    std::vector<std::vector<Var>> params;
  };
  Bound Bind(Tape& tape, bool trainable) const;

  struct Trace {
    Var input;
    std::vector<Var> outputs;       // one per evaluated layer
    std::vector<std::pair<std::size_t, Var>> batchnorm_nodes;  // training mode only
    Var at(int tap) const { return tap == kInputTap ? input : outputs.at(static_cast<std::size_t>(tap)); }
  };
  /// Records the forward pass for a batched input [N, ...input_shape],
  /// evaluating layers [0, stop_after]. stop_after < 0 runs every layer.
  Trace Forward(Tape& tape, const Bound& bound, Var input, ForwardMode mode,
                int stop_after = -1) const;

 private:
  void Validate();

  Shape input_shape_;
  std::vector<Layer> layers_;
  std::vector<Shape> layer_shapes_;
  int tap_ = kInputTap;
};

enum class DistanceMeasure { kEuclidean, kCosine, kL1 };

std::string DistanceMeasureName(DistanceMeasure m);
DistanceMeasure ParseDistanceMeasure(const std::string& name);

/// Scalar whose input gradient is requested: one output entry, or the
/// distance between the representation and a fixed reference representation.
struct ScalarSelector {
  enum class Kind { kOutput, kRepresentationDistance };
  Kind kind = Kind::kOutput;
  std::size_t output_index = 0;
  Tensor reference_representation;
  DistanceMeasure measure = DistanceMeasure::kEuclidean;

  static ScalarSelector Output(std::size_t index) {
    return {Kind::kOutput, index, {}, DistanceMeasure::kEuclidean};
  }
  static ScalarSelector RepresentationDistance(Tensor reference,
                                               DistanceMeasure m = DistanceMeasure::kEuclidean) {
    return {Kind::kRepresentationDistance, 0, std::move(reference), m};
  }
};

struct Evaluation {
  Tensor output;
  Tensor representation;
};

Evaluation Evaluate(const Model& model, const Tensor& input);
/// Batched inference: inputs [N, ...input_shape] -> outputs [N, ...output_shape].
Tensor EvaluateBatch(const Model& model, const Tensor& inputs);
Tensor Representation(const Model& model, const Tensor& input);

struct ValueAndGradient {
  double value = 0.0;
  Tensor gradient;
};

ValueAndGradient ScalarAndGradient(const Model& model, const Tensor& input,
                                   const ScalarSelector& scalar);
Tensor InputGradient(const Model& model, const Tensor& input, const ScalarSelector& scalar);
double ScalarValue(const Model& model, const Tensor& input, const ScalarSelector& scalar);

/// Central differences per coordinate against InputGradient. Coordinates whose
/// one-sided slopes disagree by more than kink_tolerance (a kink inside
/// [x - eps, x + eps]) are skipped. Relative error uses max(1, |analytic|).
double FiniteDifferenceCheck(const Model& model, const Tensor& input,
                             const ScalarSelector& scalar, double eps,
                             double kink_tolerance = 1e-3);

/// Predicted class: argmax for multi-output models, output > 0 for a single
/// regression/logit head.
std::size_t PredictedClass(const Model& model, const Tensor& input);

// Model surgery used by the axiom checks.

/// Adds one input feature (appended last) that no layer reads. Requires a rank-1
/// input and a dense first layer.
Model AppendDummyInput(const Model& model);
/// Permutes the output units of dense layer `layer` and everything consuming
/// them (following batchnorm, next dense layer's input columns). perm[i] is the
/// old unit that becomes new unit i.
Model PermuteHiddenUnits(const Model& model, std::size_t layer, const std::vector<std::size_t>& perm);

// Small fixed models.

/// f(x) = w.x + b with identity representation.
Model LinearModel(const std::vector<double>& w, double bias = 0.0);
/// y = max(x1, x2 - 1); representation is the output itself.
Model ToyMaxModel();
/// f(x1, x2) = g(x1 + x2) with g a seeded 1-8-1 tanh net.
Model SymmetricSumModel(std::uint64_t seed = 3);

}  // namespace pathgrad
