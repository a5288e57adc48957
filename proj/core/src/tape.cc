#include "pathgrad/tape.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace pathgrad {
namespace {

void Require(bool ok, const std::string& what) {
  if (!ok) throw Error(what);
}

// Compensated (TwoSum) accumulator. The result is the exact sum of the terms
// rounded once in all but near-tie cases, so it does not depend on term order.
struct ExactSum {
  double sum = 0.0;
  double err = 0.0;
  void Add(double v) {
    const double t = sum + v;
    const double bp = t - sum;
    err += (sum - (t - bp)) + (v - bp);
    sum = t;
  }
  double Value() const { return sum + err; }
};

double Sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

std::size_t LastDim(const Tensor& t) {
  Require(t.rank() >= 1, "operation needs rank >= 1");
  return t.shape().back();
}

// Row-wise statistics for [N, F] batch norm.
struct ColumnStats {
  std::vector<double> mean;
  std::vector<double> var;
};

ColumnStats BatchStats(const Tensor& x) {
  const std::size_t n = x.dim(0), f = x.dim(1);
  ColumnStats s{std::vector<double>(f, 0.0), std::vector<double>(f, 0.0)};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < f; ++c) s.mean[c] += x[r * f + c];
  for (double& m : s.mean) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < f; ++c) {
      const double d = x[r * f + c] - s.mean[c];
      s.var[c] += d * d;
    }
  for (double& v : s.var) v /= static_cast<double>(n);
  return s;
}

}  // namespace

Var Tape::Push(Node node) {
  node.value = Compute(node);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Tape::Node Tape::MakeNode(Op op, std::initializer_list<Var> inputs) const {
  Node node;
  node.op = op;
  for (Var v : inputs) {
    Require(v.id < nodes_.size(), "tape: dangling variable");
    node.in[node.n_in++] = v.id;
    node.needs_grad = node.needs_grad || nodes_[v.id].needs_grad;
  }
  return node;
}

Var Tape::Leaf(Tensor value) {
  Node node;
  node.op = Op::kLeaf;
  node.needs_grad = true;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::Constant(Tensor value) {
  Node node;
  node.op = Op::kConstant;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Tensor Tape::grad(Var v) const {
  const Node& node = nodes_.at(v.id);
  if (node.grad.empty() && !node.value.empty()) return Tensor(node.value.shape());
  return node.grad;
}

Var Tape::Add(Var a, Var b) { return Push(MakeNode(Op::kAdd, {a, b})); }
Var Tape::Sub(Var a, Var b) { return Push(MakeNode(Op::kSub, {a, b})); }
Var Tape::Mul(Var a, Var b) { return Push(MakeNode(Op::kMul, {a, b})); }

Var Tape::Scale(Var a, double s) {
  Node node = MakeNode(Op::kScale, {a});
  node.scalar = s;
  return Push(std::move(node));
}

Var Tape::MatMul(Var a, Var b) { return Push(MakeNode(Op::kMatMul, {a, b})); }
Var Tape::Dense(Var x, Var w, Var b) { return Push(MakeNode(Op::kDense, {x, w, b})); }
Var Tape::Conv2d(Var x, Var k, Var b) { return Push(MakeNode(Op::kConv2d, {x, k, b})); }
Var Tape::Relu(Var x) { return Push(MakeNode(Op::kRelu, {x})); }
Var Tape::Tanh(Var x) { return Push(MakeNode(Op::kTanh, {x})); }

Var Tape::BatchNormInference(Var x, Var gamma, Var beta, Var mean, Var var) {
  return Push(MakeNode(Op::kBatchNormInference, {x, gamma, beta, mean, var}));
}

Var Tape::BatchNormTraining(Var x, Var gamma, Var beta) {
  return Push(MakeNode(Op::kBatchNormTraining, {x, gamma, beta}));
}

Var Tape::Softmax(Var x) { return Push(MakeNode(Op::kSoftmax, {x})); }
Var Tape::MaxLast(Var x) { return Push(MakeNode(Op::kMaxLast, {x})); }
Var Tape::NormSquared(Var x) { return Push(MakeNode(Op::kNormSquared, {x})); }
Var Tape::Sum(Var x) { return Push(MakeNode(Op::kSum, {x})); }
Var Tape::Abs(Var x) { return Push(MakeNode(Op::kAbs, {x})); }

Var Tape::Select(Var x, std::size_t flat_index) {
  Node node = MakeNode(Op::kSelect, {x});
  node.index = flat_index;
  return Push(std::move(node));
}

Var Tape::Reshape(Var x, Shape shape) {
  Node node = MakeNode(Op::kReshape, {x});
  node.shape_arg = std::move(shape);
  return Push(std::move(node));
}

Var Tape::CosineDistance(Var a, Var b) {
  return Push(MakeNode(Op::kCosineDistance, {a, b}));
}

Var Tape::MeanSquaredError(Var pred, Var target) {
  return Push(MakeNode(Op::kMeanSquaredError, {pred, target}));
}

Var Tape::CrossEntropy(Var logits, std::vector<std::size_t> labels) {
  Node node = MakeNode(Op::kCrossEntropy, {logits});
  node.labels = std::move(labels);
  return Push(std::move(node));
}

std::array<Tensor, 2> Tape::BatchStatistics(Var bn) const {
  const Node& node = nodes_.at(bn.id);
  Require(node.op == Op::kBatchNormTraining, "BatchStatistics: not a training batch-norm node");
  ColumnStats s = BatchStats(In(node, 0));
  const std::size_t f = s.mean.size();
  return {Tensor({f}, std::move(s.mean)), Tensor({f}, std::move(s.var))};
}

Tensor Tape::Compute(const Node& node) const {
  switch (node.op) {
    case Op::kLeaf:
    case Op::kConstant:
      return node.value;
    case Op::kAdd:
      return In(node, 0) + In(node, 1);
    case Op::kSub:
      return In(node, 0) - In(node, 1);
    case Op::kMul:
      return Hadamard(In(node, 0), In(node, 1));
    case Op::kScale:
      return node.scalar * In(node, 0);
    case Op::kMatMul: {
      const Tensor& a = In(node, 0);
      const Tensor& b = In(node, 1);
      Require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
              "matmul: incompatible shapes " + ShapeString(a.shape()) + " x " +
                  ShapeString(b.shape()));
      const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
      Tensor out({m, n});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a[i * k + p];
          for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b[p * n + j];
        }
      return out;
    }
    case Op::kDense: {
      const Tensor& x = In(node, 0);
      const Tensor& w = In(node, 1);
      const Tensor& b = In(node, 2);
      Require(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(1) &&
                  b.size() == w.dim(0),
              "dense: input " + ShapeString(x.shape()) + " incompatible with weight " +
                  ShapeString(w.shape()));
      const std::size_t n = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
      Tensor out({n, out_dim});
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < out_dim; ++o) {
          ExactSum acc;
          acc.Add(b[o]);
          for (std::size_t i = 0; i < in; ++i) acc.Add(x[r * in + i] * w[o * in + i]);
          out[r * out_dim + o] = acc.Value();
        }
      return out;
    }
    case Op::kConv2d: {
      const Tensor& x = In(node, 0);
      const Tensor& k = In(node, 1);
      const Tensor& b = In(node, 2);
      Require(x.rank() == 4 && k.rank() == 4 && x.dim(1) == k.dim(1) &&
                  b.size() == k.dim(0) && x.dim(2) >= k.dim(2) && x.dim(3) >= k.dim(3),
              "conv2d: input " + ShapeString(x.shape()) + " incompatible with kernel " +
                  ShapeString(k.shape()));
      const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
      const std::size_t o = k.dim(0), kh = k.dim(2), kw = k.dim(3);
      const std::size_t oh = h - kh + 1, ow = w - kw + 1;
      Tensor out({n, o, oh, ow});
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t oc = 0; oc < o; ++oc)
          for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xx = 0; xx < ow; ++xx) {
              double acc = b[oc];
              for (std::size_t ic = 0; ic < c; ++ic)
                for (std::size_t dy = 0; dy < kh; ++dy)
                  for (std::size_t dx = 0; dx < kw; ++dx)
                    acc += x[((s * c + ic) * h + y + dy) * w + xx + dx] *
                           k[((oc * c + ic) * kh + dy) * kw + dx];
              out[((s * o + oc) * oh + y) * ow + xx] = acc;
            }
      return out;
    }
    case Op::kRelu: {
      Tensor out = In(node, 0);
      for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
      return out;
    }
    case Op::kTanh: {
      Tensor out = In(node, 0);
      for (double& v : out.data()) v = std::tanh(v);
      return out;
    }
    case Op::kBatchNormInference: {
      const Tensor& x = In(node, 0);
      Require(x.rank() == 2 && In(node, 1).size() == x.dim(1),
              "batchnorm: expected [N, F] input matching feature count, got " +
                  ShapeString(x.shape()));
      const std::size_t n = x.dim(0), f = x.dim(1);
      const Tensor& gamma = In(node, 1);
      const Tensor& beta = In(node, 2);
      const Tensor& mean = In(node, 3);
      const Tensor& var = In(node, 4);
      Tensor out({n, f});
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < f; ++c)
          out[r * f + c] = gamma[c] * (x[r * f + c] - mean[c]) /
                               std::sqrt(var[c] + kBatchNormEps) +
                           beta[c];
      return out;
    }
    case Op::kBatchNormTraining: {
      const Tensor& x = In(node, 0);
      Require(x.rank() == 2 && In(node, 1).size() == x.dim(1),
              "batchnorm: expected [N, F] input matching feature count, got " +
                  ShapeString(x.shape()));
      const std::size_t n = x.dim(0), f = x.dim(1);
      const Tensor& gamma = In(node, 1);
      const Tensor& beta = In(node, 2);
      const ColumnStats s = BatchStats(x);
      Tensor out({n, f});
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < f; ++c)
          out[r * f + c] = gamma[c] * (x[r * f + c] - s.mean[c]) /
                               std::sqrt(s.var[c] + kBatchNormEps) +
                           beta[c];
      return out;
    }
    case Op::kSoftmax: {
      Tensor out = In(node, 0);
      const std::size_t f = LastDim(out);
      for (std::size_t r = 0; r < out.size() / f; ++r) {
        double* row = out.data().data() + r * f;
        const double mx = *std::max_element(row, row + f);
        double z = 0.0;
        for (std::size_t c = 0; c < f; ++c) {
          row[c] = std::exp(row[c] - mx);
          z += row[c];
        }
        for (std::size_t c = 0; c < f; ++c) row[c] /= z;
      }
      return out;
    }
    case Op::kMaxLast: {
      const Tensor& x = In(node, 0);
      const std::size_t f = LastDim(x);
      Shape shape = x.shape();
      shape.back() = 1;
      Tensor out(shape);
      for (std::size_t r = 0; r < x.size() / f; ++r) {
        const double* row = x.data().data() + r * f;
        out[r] = *std::max_element(row, row + f);
      }
      return out;
    }
    case Op::kNormSquared: {
      const Tensor& x = In(node, 0);
      return Tensor::Scalar(Dot(x, x));
    }
    case Op::kSum:
      return Tensor::Scalar(pathgrad::Sum(In(node, 0)));
    case Op::kAbs: {
      Tensor out = In(node, 0);
      for (double& v : out.data()) v = std::abs(v);
      return out;
    }
    case Op::kSelect: {
      const Tensor& x = In(node, 0);
      Require(node.index < x.size(), "select: index " + std::to_string(node.index) +
                                         " out of range for " + ShapeString(x.shape()));
      return Tensor::Scalar(x[node.index]);
    }
    case Op::kReshape:
      return In(node, 0).Reshaped(node.shape_arg);
    case Op::kCosineDistance: {
      const Tensor& a = In(node, 0);
      const Tensor& b = In(node, 1);
      CheckSameShape(a, b, "cosine distance");
      const double na = L2Norm(a), nb = L2Norm(b);
      if (na == 0.0 || nb == 0.0) return Tensor::Scalar(1.0);
      return Tensor::Scalar(1.0 - Dot(a, b) / (na * nb));
    }
    case Op::kMeanSquaredError: {
      const Tensor& p = In(node, 0);
      const Tensor& t = In(node, 1);
      CheckSameShape(p, t, "mse");
      double s = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
      return Tensor::Scalar(s / static_cast<double>(p.size()));
    }
    case Op::kCrossEntropy: {
      const Tensor& z = In(node, 0);
      Require(z.rank() == 2 && z.dim(0) == node.labels.size(),
              "cross entropy: logits " + ShapeString(z.shape()) + " vs " +
                  std::to_string(node.labels.size()) + " labels");
      const std::size_t n = z.dim(0), c = z.dim(1);
      double loss = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        Require(node.labels[r] < c, "cross entropy: label out of range");
        const double* row = z.data().data() + r * c;
        const double mx = *std::max_element(row, row + c);
        double acc = 0.0;
        for (std::size_t k = 0; k < c; ++k) acc += std::exp(row[k] - mx);
        loss += mx + std::log(acc) - row[node.labels[r]];
      }
      return Tensor::Scalar(loss / static_cast<double>(n));
    }
  }
  throw Error("tape: unknown op");
}

Tensor& Tape::GradSlot(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.empty()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Tape::Backward(Var output) {
  Require(output.id < nodes_.size(), "backward: dangling variable");
  Require(nodes_[output.id].value.size() == 1,
          "backward: output must be a single value, got shape " +
              ShapeString(nodes_[output.id].value.shape()));
  for (Node& node : nodes_) node.grad = Tensor();
  GradSlot(output.id)[0] = 1.0;
  for (std::size_t id = output.id + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!node.needs_grad || node.grad.empty() || node.n_in == 0) continue;
    Propagate(node);
  }
}

void Tape::Propagate(const Node& node) {
  const Tensor& g = node.grad;
  auto wants = [&](std::size_t k) { return nodes_[node.in[k]].needs_grad; };
  switch (node.op) {
    case Op::kLeaf:
    case Op::kConstant:
      return;
    case Op::kAdd:
      if (wants(0)) AddInPlace(GradSlot(node.in[0]), g);
      if (wants(1)) AddInPlace(GradSlot(node.in[1]), g);
      return;
    case Op::kSub:
      if (wants(0)) AddInPlace(GradSlot(node.in[0]), g);
      if (wants(1)) AddInPlace(GradSlot(node.in[1]), -1.0 * g);
      return;
    case Op::kMul:
      if (wants(0)) AddInPlace(GradSlot(node.in[0]), Hadamard(g, In(node, 1)));
      if (wants(1)) AddInPlace(GradSlot(node.in[1]), Hadamard(g, In(node, 0)));
      return;
    case Op::kScale:
      if (wants(0)) AddInPlace(GradSlot(node.in[0]), node.scalar * g);
      return;
    case Op::kMatMul: {
      const Tensor& a = In(node, 0);
      const Tensor& b = In(node, 1);
      const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
      if (wants(0)) {
        Tensor& ga = GradSlot(node.in[0]);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * b[p * n + j];
            ga[i * k + p] += acc;
          }
      }
      if (wants(1)) {
        Tensor& gb = GradSlot(node.in[1]);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
          }
      }
      return;
    }
    case Op::kDense: {
      const Tensor& x = In(node, 0);
      const Tensor& w = In(node, 1);
      const std::size_t n = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
      if (wants(0)) {
        Tensor& gx = GradSlot(node.in[0]);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t i = 0; i < in; ++i) {
            ExactSum acc;
            for (std::size_t o = 0; o < out_dim; ++o) acc.Add(g[r * out_dim + o] * w[o * in + i]);
            gx[r * in + i] += acc.Value();
          }
      }
      if (wants(1)) {
        Tensor& gw = GradSlot(node.in[1]);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t o = 0; o < out_dim; ++o) {
            const double go = g[r * out_dim + o];
            for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += go * x[r * in + i];
          }
      }
      if (wants(2)) {
        Tensor& gb = GradSlot(node.in[2]);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t o = 0; o < out_dim; ++o) gb[o] += g[r * out_dim + o];
      }
      return;
    }
    case Op::kConv2d: {
      const Tensor& x = In(node, 0);
      const Tensor& k = In(node, 1);
      const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
      const std::size_t o = k.dim(0), kh = k.dim(2), kw = k.dim(3);
      const std::size_t oh = h - kh + 1, ow = w - kw + 1;
      Tensor* gx = wants(0) ? &GradSlot(node.in[0]) : nullptr;
      Tensor* gk = wants(1) ? &GradSlot(node.in[1]) : nullptr;
      Tensor* gb = wants(2) ? &GradSlot(node.in[2]) : nullptr;
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t oc = 0; oc < o; ++oc)
          for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xx = 0; xx < ow; ++xx) {
              const double go = g[((s * o + oc) * oh + y) * ow + xx];
              if (gb) (*gb)[oc] += go;
              if (go == 0.0) continue;
              for (std::size_t ic = 0; ic < c; ++ic)
                for (std::size_t dy = 0; dy < kh; ++dy)
                  for (std::size_t dx = 0; dx < kw; ++dx) {
                    const std::size_t xi = ((s * c + ic) * h + y + dy) * w + xx + dx;
                    const std::size_t ki = ((oc * c + ic) * kh + dy) * kw + dx;
                    if (gx) (*gx)[xi] += go * k[ki];
                    if (gk) (*gk)[ki] += go * x[xi];
                  }
            }
      return;
    }
    case Op::kRelu: {
      if (!wants(0)) return;
      const Tensor& x = In(node, 0);
      Tensor& gx = GradSlot(node.in[0]);
      for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] > 0.0) gx[i] += g[i];
      return;
    }
    case Op::kTanh: {
      if (!wants(0)) return;
      const Tensor& y = node.value;
      Tensor& gx = GradSlot(node.in[0]);
      for (std::size_t i = 0; i < y.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
      return;
    }
    case Op::kBatchNormInference: {
      const Tensor& x = In(node, 0);
      const Tensor& gamma = In(node, 1);
      const Tensor& mean = In(node, 3);
      const Tensor& var = In(node, 4);
      const std::size_t n = x.dim(0), f = x.dim(1);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < f; ++c) {
          const double inv = 1.0 / std::sqrt(var[c] + kBatchNormEps);
          const double gv = g[r * f + c];
          if (wants(0)) GradSlot(node.in[0])[r * f + c] += gv * gamma[c] * inv;
          if (wants(1)) GradSlot(node.in[1])[c] += gv * (x[r * f + c] - mean[c]) * inv;
          if (wants(2)) GradSlot(node.in[2])[c] += gv;
        }
      return;
    }
    case Op::kBatchNormTraining: {
      const Tensor& x = In(node, 0);
      const Tensor& gamma = In(node, 1);
      const std::size_t n = x.dim(0), f = x.dim(1);
      const ColumnStats s = BatchStats(x);
      const double nd = static_cast<double>(n);
      for (std::size_t c = 0; c < f; ++c) {
        const double inv = 1.0 / std::sqrt(s.var[c] + kBatchNormEps);
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0, sum_g = 0.0, sum_g_xhat = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          const double xhat = (x[r * f + c] - s.mean[c]) * inv;
          const double gv = g[r * f + c];
          sum_g += gv;
          sum_g_xhat += gv * xhat;
          sum_dxhat += gv * gamma[c];
          sum_dxhat_xhat += gv * gamma[c] * xhat;
        }
        if (wants(0)) {
          Tensor& gx = GradSlot(node.in[0]);
          for (std::size_t r = 0; r < n; ++r) {
            const double xhat = (x[r * f + c] - s.mean[c]) * inv;
            const double dxhat = g[r * f + c] * gamma[c];
            gx[r * f + c] += inv / nd * (nd * dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
          }
        }
        if (wants(1)) GradSlot(node.in[1])[c] += sum_g_xhat;
        if (wants(2)) GradSlot(node.in[2])[c] += sum_g;
      }
      return;
    }
    case Op::kSoftmax: {
      if (!wants(0)) return;
      const Tensor& y = node.value;
      const std::size_t f = LastDim(y);
      Tensor& gx = GradSlot(node.in[0]);
      for (std::size_t r = 0; r < y.size() / f; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < f; ++c) dot += g[r * f + c] * y[r * f + c];
        for (std::size_t c = 0; c < f; ++c)
          gx[r * f + c] += y[r * f + c] * (g[r * f + c] - dot);
      }
      return;
    }
    case Op::kMaxLast: {
      if (!wants(0)) return;
      const Tensor& x = In(node, 0);
      const std::size_t f = LastDim(x);
      Tensor& gx = GradSlot(node.in[0]);
      for (std::size_t r = 0; r < x.size() / f; ++r) {
        const double* row = x.data().data() + r * f;
        const std::size_t arg = static_cast<std::size_t>(std::max_element(row, row + f) - row);
        gx[r * f + arg] += g[r];
      }
      return;
    }
    case Op::kNormSquared: {
      if (!wants(0)) return;
      const Tensor& x = In(node, 0);
      Tensor& gx = GradSlot(node.in[0]);
      for (std::size_t i = 0; i < x.size(); ++i) gx[i] += 2.0 * x[i] * g[0];
      return;
    }
    case Op::kSum: {
      if (!wants(0)) return;
      Tensor& gx = GradSlot(node.in[0]);
      for (double& v : gx.data()) v += g[0];
      return;
    }
    case Op::kAbs: {
      if (!wants(0)) return;
      const Tensor& x = In(node, 0);
      Tensor& gx = GradSlot(node.in[0]);
      for (std::size_t i = 0; i < x.size(); ++i) gx[i] += Sign(x[i]) * g[i];
      return;
    }
    case Op::kSelect:
      if (wants(0)) GradSlot(node.in[0])[node.index] += g[0];
      return;
    case Op::kReshape:
      if (wants(0)) AddInPlace(GradSlot(node.in[0]), g.Reshaped(In(node, 0).shape()));
      return;
    case Op::kCosineDistance: {
      const Tensor& a = In(node, 0);
      const Tensor& b = In(node, 1);
      const double na = L2Norm(a), nb = L2Norm(b);
      if (na == 0.0 || nb == 0.0) return;
      const double ab = Dot(a, b);
      // d(1 - ab/(na nb))/da = -(b/(na nb) - ab a/(na^3 nb)).
      for (std::size_t side = 0; side < 2; ++side) {
        if (!wants(side)) continue;
        const Tensor& u = side == 0 ? a : b;
        const Tensor& v = side == 0 ? b : a;
        const double nu = side == 0 ? na : nb;
        Tensor& gu = GradSlot(node.in[side]);
        for (std::size_t i = 0; i < u.size(); ++i)
          gu[i] += -g[0] * (v[i] / (na * nb) - ab * u[i] / (nu * nu * na * nb));
      }
      return;
    }
    case Op::kMeanSquaredError: {
      const Tensor& p = In(node, 0);
      const Tensor& t = In(node, 1);
      const double scale = 2.0 * g[0] / static_cast<double>(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = scale * (p[i] - t[i]);
        if (wants(0)) GradSlot(node.in[0])[i] += d;
        if (wants(1)) GradSlot(node.in[1])[i] -= d;
      }
      return;
    }
    case Op::kCrossEntropy: {
      if (!wants(0)) return;
      const Tensor& z = In(node, 0);
      const std::size_t n = z.dim(0), c = z.dim(1);
      Tensor& gz = GradSlot(node.in[0]);
      const double scale = g[0] / static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r) {
        const double* row = z.data().data() + r * c;
        const double mx = *std::max_element(row, row + c);
        double acc = 0.0;
        for (std::size_t k = 0; k < c; ++k) acc += std::exp(row[k] - mx);
        for (std::size_t k = 0; k < c; ++k) {
          const double p = std::exp(row[k] - mx) / acc;
          gz[r * c + k] += scale * (p - (k == node.labels[r] ? 1.0 : 0.0));
        }
      }
      return;
    }
  }
}

bool Tape::ReplayMatches() const {
  // Replays against a scratch copy so recomputed values feed later nodes.
  Tape replay;
  replay.nodes_.reserve(nodes_.size());
  for (const Node& node : nodes_) {
    Node copy = node;
    copy.grad = Tensor();
    if (node.op != Op::kLeaf && node.op != Op::kConstant) {
      copy.value = Tensor();
      copy.value = replay.Compute(copy);
      if (!(copy.value == node.value)) return false;
    }
    replay.nodes_.push_back(std::move(copy));
  }
  return true;
}

}  // namespace pathgrad
