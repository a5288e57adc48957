#include "pathgrad/model.h"

#include <algorithm>
#include <cmath>
#include <random>

namespace pathgrad {
namespace {

std::string LayerLabel(std::size_t i, const LayerSpec& spec) {
  return "layer " + std::to_string(i) + " (" + spec.ToString() + ")";
}

bool IsParametric(LayerKind kind) {
  return kind == LayerKind::kDense || kind == LayerKind::kConv2d;
}

void FillUniform(Tensor& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.data()) v = dist(rng);
}

}  // namespace

std::string LayerKindName(LayerKind kind) {
  switch (kind) {
    case LayerKind::kDense: return "dense";
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kTanh: return "tanh";
    case LayerKind::kBatchNorm: return "batchnorm";
    case LayerKind::kSoftmax: return "softmax";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kMax: return "max";
  }
  return "unknown";
}

std::string LayerSpec::ToString() const {
  switch (kind) {
    case LayerKind::kDense:
      return "dense(" + std::to_string(in) + "," + std::to_string(out) + ")";
    case LayerKind::kConv2d:
      return "conv2d(" + std::to_string(in) + "," + std::to_string(out) + "," +
             std::to_string(kernel) + ")";
    case LayerKind::kBatchNorm:
      return "batchnorm(" + std::to_string(in) + ")";
    default:
      return LayerKindName(kind);
  }
}

ModelSpec ModelSpec::XaiBenchMlp(std::uint64_t seed) {
  ModelSpec spec;
  spec.input_shape = {5};
  spec.layers = {LayerSpec::Dense(5, 64), LayerSpec::BatchNorm(64), LayerSpec::Tanh(),
                 LayerSpec::Dense(64, 16), LayerSpec::Tanh(), LayerSpec::Dense(16, 1)};
  spec.seed = seed;
  return spec;
}

ModelSpec ModelSpec::TinyCnn(std::size_t side, std::size_t classes, std::uint64_t seed) {
  if (side < 3) throw Error("TinyCnn: image side must be >= 3");
  ModelSpec spec;
  spec.input_shape = {1, side, side};
  const std::size_t flat = 4 * (side - 2) * (side - 2);
  spec.layers = {LayerSpec::Conv2d(1, 4, 3), LayerSpec::Relu(), LayerSpec::Flatten(),
                 LayerSpec::Dense(flat, classes), LayerSpec::Softmax()};
  spec.seed = seed;
  return spec;
}

int Model::DefaultTap(const std::vector<LayerSpec>& layers) {
  int last = -1;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (IsParametric(layers[i].kind)) last = static_cast<int>(i);
  return last <= 0 ? kInputTap : last - 1;
}

Model Model::Build(const ModelSpec& spec) {
  std::vector<Layer> layers;
  std::mt19937_64 rng(spec.seed);
  for (const LayerSpec& ls : spec.layers) {
    Layer layer{ls, {}};
    switch (ls.kind) {
      case LayerKind::kDense: {
        if (ls.in == 0 || ls.out == 0) throw Error("dense layer needs positive extents");
        Tensor w({ls.out, ls.in});
        FillUniform(w, std::sqrt(6.0 / static_cast<double>(ls.in + ls.out)), rng);
        layer.params = {std::move(w), Tensor({ls.out})};
        break;
      }
      case LayerKind::kConv2d: {
        if (ls.in == 0 || ls.out == 0 || ls.kernel == 0)
          throw Error("conv2d layer needs positive extents");
        Tensor k({ls.out, ls.in, ls.kernel, ls.kernel});
        const double area = static_cast<double>(ls.kernel * ls.kernel);
        FillUniform(k, std::sqrt(6.0 / (static_cast<double>(ls.in + ls.out) * area)), rng);
        layer.params = {std::move(k), Tensor({ls.out})};
        break;
      }
      case LayerKind::kBatchNorm:
        if (ls.in == 0) throw Error("batchnorm layer needs a positive dimension");
        layer.params = {Tensor::Filled({ls.in}, 1.0), Tensor({ls.in}), Tensor({ls.in}),
                        Tensor::Filled({ls.in}, 1.0)};
        break;
      default:
        break;
    }
    layers.push_back(std::move(layer));
  }
  return FromLayers(spec.input_shape, std::move(layers), spec.representation_tap);
}

Model Model::FromLayers(Shape input_shape, std::vector<Layer> layers,
                        std::optional<int> representation_tap) {
  Model m;
  m.input_shape_ = std::move(input_shape);
  m.layers_ = std::move(layers);
  m.Validate();
  std::vector<LayerSpec> specs;
  for (const Layer& l : m.layers_) specs.push_back(l.spec);
  m.set_representation_tap(representation_tap.value_or(DefaultTap(specs)));
  return m;
}

void Model::Validate() {
  if (layers_.empty()) throw Error("model has no layers");
  if (input_shape_.empty() || ShapeSize(input_shape_) == 0)
    throw Error("model input shape must be non-empty");
  layer_shapes_.clear();
  Shape cur = input_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& layer = layers_[i];
    const LayerSpec& ls = layer.spec;
    auto fail = [&](const std::string& why) {
      throw Error(LayerLabel(i, ls) + ": " + why + " (incoming shape " + ShapeString(cur) + ")");
    };
    auto expect_params = [&](std::vector<Shape> shapes) {
      if (layer.params.size() != shapes.size()) fail("wrong number of parameter tensors");
      for (std::size_t p = 0; p < shapes.size(); ++p)
        if (layer.params[p].shape() != shapes[p])
          fail("parameter " + std::to_string(p) + " has shape " +
               ShapeString(layer.params[p].shape()) + ", expected " + ShapeString(shapes[p]));
    };
    switch (ls.kind) {
      case LayerKind::kDense:
        if (cur != Shape{ls.in}) fail("expected input [" + std::to_string(ls.in) + "]");
        expect_params({{ls.out, ls.in}, {ls.out}});
        cur = {ls.out};
        break;
      case LayerKind::kConv2d:
        if (cur.size() != 3 || cur[0] != ls.in || cur[1] < ls.kernel || cur[2] < ls.kernel)
          fail("expected [" + std::to_string(ls.in) + ",H,W] with H,W >= kernel");
        expect_params({{ls.out, ls.in, ls.kernel, ls.kernel}, {ls.out}});
        cur = {ls.out, cur[1] - ls.kernel + 1, cur[2] - ls.kernel + 1};
        break;
      case LayerKind::kBatchNorm:
        if (cur != Shape{ls.in}) fail("expected input [" + std::to_string(ls.in) + "]");
        expect_params({{ls.in}, {ls.in}, {ls.in}, {ls.in}});
        break;
      case LayerKind::kFlatten:
        expect_params({});
        cur = {ShapeSize(cur)};
        break;
      case LayerKind::kMax:
        expect_params({});
        cur.back() = 1;
        break;
      case LayerKind::kRelu:
      case LayerKind::kTanh:
      case LayerKind::kSoftmax:
        expect_params({});
        break;
    }
    layer_shapes_.push_back(cur);
  }
}

const Shape& Model::layer_shape(int i) const {
  if (i == kInputTap) return input_shape_;
  return layer_shapes_.at(static_cast<std::size_t>(i));
}

const Shape& Model::representation_shape() const { return layer_shape(tap_); }

void Model::set_representation_tap(int tap) {
  if (tap < kInputTap || tap >= static_cast<int>(layers_.size()))
    throw Error("representation tap " + std::to_string(tap) + " does not name a layer");
  tap_ = tap;
}

std::size_t Model::ParameterCount() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) {
    const std::size_t trainable = l.spec.kind == LayerKind::kBatchNorm ? 2 : l.params.size();
    for (std::size_t p = 0; p < trainable; ++p) n += l.params[p].size();
  }
  return n;
}

std::vector<std::pair<std::string, const Tensor*>> Model::NamedWeights() const {
  static const char* kDenseNames[] = {"weight", "bias"};
  static const char* kBnNames[] = {"gamma", "beta", "running_mean", "running_var"};
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    for (std::size_t p = 0; p < l.params.size(); ++p) {
      const char* name = l.spec.kind == LayerKind::kBatchNorm ? kBnNames[p] : kDenseNames[p];
      out.emplace_back(std::to_string(i) + "." + name, &l.params[p]);
    }
  }
  return out;
}

Model::Bound Model::Bind(Tape& tape, bool trainable) const {
  Bound b;
  b.params.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    for (std::size_t p = 0; p < l.params.size(); ++p) {
      const bool is_stat = l.spec.kind == LayerKind::kBatchNorm && p >= 2;
      b.params[i].push_back(trainable && !is_stat ? tape.Leaf(l.params[p])
                                                  : tape.Constant(l.params[p]));
    }
  }
  return b;
}

Model::Trace Model::Forward(Tape& tape, const Bound& bound, Var input, ForwardMode mode,
                            int stop_after) const {
  const Tensor& x = tape.value(input);
  Shape expected = input_shape_;
  if (x.rank() != expected.size() + 1 ||
      !std::equal(expected.begin(), expected.end(), x.shape().begin() + 1)) {
    throw Error("input shape " + ShapeString(x.shape()) + " does not match model input [N]+" +
                ShapeString(expected) + " expected by " + LayerLabel(0, layers_[0].spec));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t last =
      stop_after < 0 ? layers_.size() - 1 : std::min<std::size_t>(stop_after, layers_.size() - 1);
  Trace trace;
  trace.input = input;
  Var cur = input;
  for (std::size_t i = 0; i <= last; ++i) {
    const Layer& l = layers_[i];
    const std::vector<Var>& p = bound.params[i];
    switch (l.spec.kind) {
      case LayerKind::kDense:
        cur = tape.Dense(cur, p[0], p[1]);
        break;
      case LayerKind::kConv2d:
        cur = tape.Conv2d(cur, p[0], p[1]);
        break;
      case LayerKind::kRelu:
        cur = tape.Relu(cur);
        break;
      case LayerKind::kTanh:
        cur = tape.Tanh(cur);
        break;
      case LayerKind::kBatchNorm:
        if (mode == ForwardMode::kTraining) {
          cur = tape.BatchNormTraining(cur, p[0], p[1]);
          trace.batchnorm_nodes.emplace_back(i, cur);
        } else {
          cur = tape.BatchNormInference(cur, p[0], p[1], p[2], p[3]);
        }
        break;
      case LayerKind::kSoftmax:
        cur = tape.Softmax(cur);
        break;
      case LayerKind::kFlatten:
        cur = tape.Reshape(cur, {batch, ShapeSize(layer_shapes_[i])});
        break;
      case LayerKind::kMax:
        cur = tape.MaxLast(cur);
        break;
    }
    trace.outputs.push_back(cur);
  }
  return trace;
}

std::string DistanceMeasureName(DistanceMeasure m) {
  switch (m) {
    case DistanceMeasure::kEuclidean: return "euclidean";
    case DistanceMeasure::kCosine: return "cosine";
    case DistanceMeasure::kL1: return "l1";
  }
  return "unknown";
}

DistanceMeasure ParseDistanceMeasure(const std::string& name) {
  if (name == "euclidean") return DistanceMeasure::kEuclidean;
  if (name == "cosine") return DistanceMeasure::kCosine;
  if (name == "l1") return DistanceMeasure::kL1;
  throw Error("unknown distance measure '" + name + "'");
}

namespace {

Tensor Batched(const Tensor& x) {
  Shape s = x.shape();
  s.insert(s.begin(), 1);
  return x.Reshaped(std::move(s));
}

Tensor Unbatched(const Tensor& x) {
  Shape s(x.shape().begin() + 1, x.shape().end());
  return x.Reshaped(std::move(s));
}

void CheckInput(const Model& model, const Tensor& input) {
  if (input.shape() != model.input_shape()) {
    throw Error("input shape " + ShapeString(input.shape()) + " does not match model input " +
                ShapeString(model.input_shape()) + " expected by layer 0 (" +
                model.layers().front().spec.ToString() + ")");
  }
}

}  // namespace

Evaluation Evaluate(const Model& model, const Tensor& input) {
  CheckInput(model, input);
  Tape tape;
  const Model::Bound bound = model.Bind(tape, false);
  const Model::Trace trace =
      model.Forward(tape, bound, tape.Constant(Batched(input)), ForwardMode::kInference);
  return {Unbatched(tape.value(trace.outputs.back())),
          Unbatched(tape.value(trace.at(model.representation_tap())))};
}

Tensor EvaluateBatch(const Model& model, const Tensor& inputs) {
  Tape tape;
  const Model::Bound bound = model.Bind(tape, false);
  const Model::Trace trace =
      model.Forward(tape, bound, tape.Constant(inputs), ForwardMode::kInference);
  return tape.value(trace.outputs.back());
}

Tensor Representation(const Model& model, const Tensor& input) {
  CheckInput(model, input);
  Tape tape;
  const Model::Bound bound = model.Bind(tape, false);
  const Model::Trace trace = model.Forward(tape, bound, tape.Constant(Batched(input)),
                                           ForwardMode::kInference, model.representation_tap());
  return Unbatched(tape.value(trace.at(model.representation_tap())));
}

ValueAndGradient ScalarAndGradient(const Model& model, const Tensor& input,
                                   const ScalarSelector& scalar) {
  CheckInput(model, input);
  Tape tape;
  const Model::Bound bound = model.Bind(tape, false);
  const Var x = tape.Leaf(Batched(input));
  Var out;
  if (scalar.kind == ScalarSelector::Kind::kOutput) {
    if (scalar.output_index >= model.output_size())
      throw Error("scalar selector: output index " + std::to_string(scalar.output_index) +
                  " out of range for output " + ShapeString(model.output_shape()));
    const Model::Trace trace = model.Forward(tape, bound, x, ForwardMode::kInference);
    out = tape.Select(trace.outputs.back(), scalar.output_index);
  } else {
    const Shape& rep_shape = model.representation_shape();
    if (scalar.reference_representation.shape() != rep_shape)
      throw Error("scalar selector: reference representation " +
                  ShapeString(scalar.reference_representation.shape()) +
                  " does not match representation " + ShapeString(rep_shape));
    const int tap = model.representation_tap();
    const Model::Trace trace = model.Forward(tape, bound, x, ForwardMode::kInference, tap);
    const Var rep = tape.Reshape(trace.at(tap), rep_shape);
    const Var ref = tape.Constant(scalar.reference_representation);
    switch (scalar.measure) {
      case DistanceMeasure::kEuclidean:
        out = tape.NormSquared(tape.Sub(rep, ref));
        break;
      case DistanceMeasure::kCosine:
        out = tape.CosineDistance(rep, ref);
        break;
      case DistanceMeasure::kL1:
        out = tape.Sum(tape.Abs(tape.Sub(rep, ref)));
        break;
    }
  }
  tape.Backward(out);
  return {tape.value(out)[0], Unbatched(tape.grad(x))};
}

Tensor InputGradient(const Model& model, const Tensor& input, const ScalarSelector& scalar) {
  return ScalarAndGradient(model, input, scalar).gradient;
}

double ScalarValue(const Model& model, const Tensor& input, const ScalarSelector& scalar) {
  if (scalar.kind == ScalarSelector::Kind::kOutput) {
    const Evaluation e = Evaluate(model, input);
    if (scalar.output_index >= e.output.size())
      throw Error("scalar selector: output index out of range");
    return e.output[scalar.output_index];
  }
  return ScalarAndGradient(model, input, scalar).value;
}

double FiniteDifferenceCheck(const Model& model, const Tensor& input,
                             const ScalarSelector& scalar, double eps, double kink_tolerance) {
  if (!(eps > 0.0)) throw Error("finite difference step must be positive");
  const Tensor grad = InputGradient(model, input, scalar);
  const double f0 = ScalarValue(model, input, scalar);
  double worst = 0.0;
  for (std::size_t i = 0; i < input.size(); ++i) {
    Tensor plus = input, minus = input;
    plus[i] += eps;
    minus[i] -= eps;
    const double fp = ScalarValue(model, plus, scalar);
    const double fm = ScalarValue(model, minus, scalar);
    const double right = (fp - f0) / eps, left = (f0 - fm) / eps;
    if (std::abs(right - left) > kink_tolerance * std::max(1.0, std::abs(right))) continue;
    const double fd = (fp - fm) / (2.0 * eps);
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max(1.0, std::abs(grad[i])));
  }
  return worst;
}

std::size_t PredictedClass(const Model& model, const Tensor& input) {
  const Tensor out = Evaluate(model, input).output;
  if (out.size() == 1) return out[0] > 0.0 ? 1 : 0;
  return static_cast<std::size_t>(std::max_element(out.data().begin(), out.data().end()) -
                                  out.data().begin());
}

Model AppendDummyInput(const Model& model) {
  if (model.input_shape().size() != 1 || model.layers().front().spec.kind != LayerKind::kDense)
    throw Error("dummy feature augmentation needs a rank-1 input and a dense first layer");
  std::vector<Layer> layers = model.layers();
  Layer& first = layers.front();
  const std::size_t in = first.spec.in, out = first.spec.out;
  Tensor w({out, in + 1});
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t i = 0; i < in; ++i) w[o * (in + 1) + i] = first.params[0][o * in + i];
  first.params[0] = std::move(w);
  first.spec.in = in + 1;
  const int tap = model.representation_tap();
  return Model::FromLayers({in + 1}, std::move(layers), tap);
}

Model PermuteHiddenUnits(const Model& model, std::size_t layer,
                         const std::vector<std::size_t>& perm) {
  std::vector<Layer> layers = model.layers();
  if (layer >= layers.size() || layers[layer].spec.kind != LayerKind::kDense)
    throw Error("hidden-unit permutation needs a dense layer index");
  const std::size_t units = layers[layer].spec.out;
  if (perm.size() != units) throw Error("permutation length does not match unit count");
  std::vector<bool> seen(units, false);
  for (std::size_t p : perm) {
    if (p >= units || seen[p]) throw Error("not a permutation");
    seen[p] = true;
  }
  const std::size_t in = layers[layer].spec.in;
  {
    Layer& d = layers[layer];
    Tensor w = d.params[0], b = d.params[1];
    for (std::size_t u = 0; u < units; ++u) {
      b[u] = d.params[1][perm[u]];
      for (std::size_t i = 0; i < in; ++i) w[u * in + i] = d.params[0][perm[u] * in + i];
    }
    d.params[0] = std::move(w);
    d.params[1] = std::move(b);
  }
  std::size_t i = layer + 1;
  for (; i < layers.size() && layers[i].spec.kind != LayerKind::kDense; ++i) {
    if (layers[i].spec.kind == LayerKind::kBatchNorm) {
      for (Tensor& p : layers[i].params) {
        Tensor q = p;
        for (std::size_t u = 0; u < units; ++u) q[u] = p[perm[u]];
        p = std::move(q);
      }
    } else if (layers[i].spec.kind != LayerKind::kRelu && layers[i].spec.kind != LayerKind::kTanh) {
      throw Error("hidden-unit permutation only passes through elementwise layers and batchnorm");
    }
  }
  if (i == layers.size()) throw Error("permuted layer has no consuming dense layer");
  Layer& next = layers[i];
  const std::size_t next_out = next.spec.out;
  Tensor w = next.params[0];
  for (std::size_t o = 0; o < next_out; ++o)
    for (std::size_t u = 0; u < units; ++u) w[o * units + u] = next.params[0][o * units + perm[u]];
  next.params[0] = std::move(w);
  return Model::FromLayers(model.input_shape(), std::move(layers), model.representation_tap());
}

Model LinearModel(const std::vector<double>& w, double bias) {
  const std::size_t n = w.size();
  Layer dense{LayerSpec::Dense(n, 1), {Tensor({1, n}, w), Tensor::Vector({bias})}};
  return Model::FromLayers({n}, {std::move(dense)});
}

Model ToyMaxModel() {
  Layer shift{LayerSpec::Dense(2, 2), {Tensor({2, 2}, {1, 0, 0, 1}), Tensor::Vector({0.0, -1.0})}};
  Layer max{LayerSpec::Max(), {}};
  return Model::FromLayers({2}, {std::move(shift), std::move(max)}, 1);
}

Model SymmetricSumModel(std::uint64_t seed) {
  ModelSpec inner;
  inner.input_shape = {1};
  inner.layers = {LayerSpec::Dense(1, 8), LayerSpec::Tanh(), LayerSpec::Dense(8, 1)};
  inner.seed = seed;
  const Model g = Model::Build(inner);
  std::vector<Layer> layers;
  layers.push_back({LayerSpec::Dense(2, 1), {Tensor({1, 2}, {1.0, 1.0}), Tensor({1})}});
  for (const Layer& l : g.layers()) layers.push_back(l);
  // Give the hidden layer nonzero biases so tanh is not odd around the origin.
  std::mt19937_64 rng(seed + 1);
  FillUniform(layers[1].params[1], 0.5, rng);
  return Model::FromLayers({2}, std::move(layers));
}

}  // namespace pathgrad
