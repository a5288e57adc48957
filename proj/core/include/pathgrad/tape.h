#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "pathgrad/tensor.h"

namespace pathgrad {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode automatic differentiation over whole tensors.
///
/// Every operation evaluates eagerly and appends one node. Nodes are stored in
/// creation order, which is a topological order, so Backward walks the vector
/// once in reverse. A Tape is single-use scratch space: build it, call
/// Backward at most once, read gradients, drop it.
///
/// Batch convention: layer primitives take a leading batch axis, e.g. Dense
/// consumes [N, in] and Conv2d consumes [N, C, H, W].
///
/// Kink conventions: relu'(0) = 0, the max reduction routes the gradient to
/// the first maximal entry, and |x| has derivative sign(x) with sign(0) = 0.
class Tape {
 public:
  enum class Op {
    kLeaf,
    kConstant,
    kAdd,
    kSub,
    kMul,
    kScale,
    kMatMul,
    kDense,
    kConv2d,
    kRelu,
    kTanh,
    kBatchNormInference,
    kBatchNormTraining,
    kSoftmax,
    kMaxLast,
    kNormSquared,
    kSum,
    kAbs,
    kSelect,
    kReshape,
    kCosineDistance,
    kMeanSquaredError,
    kCrossEntropy,
  };

  static constexpr double kBatchNormEps = 1e-5;

  Var Leaf(Tensor value);
  Var Constant(Tensor value);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient of the last Backward output with respect to v; zeros if v did
  /// not influence it.
  Tensor grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  Op op(Var v) const { return nodes_.at(v.id).op; }

  Var Add(Var a, Var b);
  Var Sub(Var a, Var b);
  Var Mul(Var a, Var b);
  Var Scale(Var a, double s);
  /// [m, k] x [k, n] -> [m, n].
  Var MatMul(Var a, Var b);
  /// x [N, in], w [out, in], b [out] -> [N, out].
  Var Dense(Var x, Var w, Var b);
  /// Valid, stride-1 cross-correlation. x [N, C, H, W], k [O, C, KH, KW],
  /// b [O] -> [N, O, H-KH+1, W-KW+1].
  Var Conv2d(Var x, Var k, Var b);
  Var Relu(Var x);
  Var Tanh(Var x);
  /// x [N, F] normalized with stored statistics.
  Var BatchNormInference(Var x, Var gamma, Var beta, Var mean, Var var);
  /// x [N, F] normalized with the statistics of this batch (biased variance).
  Var BatchNormTraining(Var x, Var gamma, Var beta);
  /// Softmax over the last axis, computed from max-shifted logits.
  Var Softmax(Var x);
  /// Max over the last axis: [..., F] -> [..., 1].
  Var MaxLast(Var x);
  /// Sum of squares -> [1].
  Var NormSquared(Var x);
  Var Sum(Var x);
  Var Abs(Var x);
  /// Entry at flat index -> [1].
  Var Select(Var x, std::size_t flat_index);
  Var Reshape(Var x, Shape shape);
  /// 1 - cos(a, b) -> [1]; defined as 1 with zero gradient when either side
  /// has zero norm.
  Var CosineDistance(Var a, Var b);
  /// mean((pred - target)^2) -> [1].
  Var MeanSquaredError(Var pred, Var target);
  /// Mean over rows of -log softmax(logits)[label] -> [1].
  Var CrossEntropy(Var logits, std::vector<std::size_t> labels);

  /// Seeds d(output)/d(output) = 1 and propagates to every node that needs a
  /// gradient. output must hold exactly one value.
  void Backward(Var output);

  /// Recomputes every non-leaf node from its recorded inputs and reports
  /// whether all values match the recorded ones bit for bit.
  bool ReplayMatches() const;

  /// Batch statistics recorded by a BatchNormTraining node: {mean, variance}.
  std::array<Tensor, 2> BatchStatistics(Var bn) const;

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::array<std::size_t, 5> in{};
    std::size_t n_in = 0;
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    double scalar = 0.0;
    std::size_t index = 0;
    Shape shape_arg;
    std::vector<std::size_t> labels;
  };

  Var Push(Node node);
  Node MakeNode(Op op, std::initializer_list<Var> inputs) const;
  Tensor Compute(const Node& node) const;
  void Propagate(const Node& node);
  Tensor& GradSlot(std::size_t id);
  const Tensor& In(const Node& node, std::size_t k) const {
    return nodes_[node.in[k]].value;
  }

  std::vector<Node> nodes_;
};

}  // namespace pathgrad
