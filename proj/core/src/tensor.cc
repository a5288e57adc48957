#include "pathgrad/tensor.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace pathgrad {

std::size_t ShapeSize(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)), data_(ShapeSize(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (ShapeSize(shape_) != data_.size()) {
    throw Error("tensor shape " + ShapeString(shape_) + " needs " +
                std::to_string(ShapeSize(shape_)) + " values, got " +
                std::to_string(data_.size()));
  }
}

Tensor Tensor::Filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::Scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::Vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::Vector(std::initializer_list<double> values) {
  return Vector(std::vector<double>(values));
}

Tensor Tensor::FromExternal(Shape shape, std::vector<double> data) {
  Tensor t(std::move(shape), std::move(data));
  if (!t.AllFinite()) throw Error("non-finite value in external tensor data");
  return t;
}

Tensor Tensor::Reshaped(Shape shape) const {
  if (ShapeSize(shape) != data_.size()) {
    throw Error("cannot reshape " + ShapeString(shape_) + " to " +
                ShapeString(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void CheckSameShape(const Tensor& a, const Tensor& b, const char* context) {
  if (a.shape() != b.shape()) {
    throw Error(std::string(context) + ": shape mismatch " +
                ShapeString(a.shape()) + " vs " + ShapeString(b.shape()));
  }
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  CheckSameShape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  CheckSameShape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor operator*(double s, const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

Tensor Hadamard(const Tensor& a, const Tensor& b) {
  CheckSameShape(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor& AddInPlace(Tensor& acc, const Tensor& b) {
  CheckSameShape(acc, b, "accumulate");
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += b[i];
  return acc;
}

double Sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

double Dot(const Tensor& a, const Tensor& b) {
  CheckSameShape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double L2Norm(const Tensor& a) { return std::sqrt(Dot(a, a)); }

double L1Norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += std::abs(v);
  return s;
}

double MaxAbsDiff(const Tensor& a, const Tensor& b) {
  CheckSameShape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace pathgrad
