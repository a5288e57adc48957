#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pathgrad {

/// Base class for all errors raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::size_t ShapeSize(const Shape& shape);
std::string ShapeString(const Shape& shape);

/// Dense row-major array of doubles.
///
/// The flat payload always holds exactly ShapeSize(shape) entries. Values
/// arriving from outside the engine (files, CLI) go through FromExternal,
/// which rejects NaN and Inf.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor Zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor Filled(Shape shape, double value);
  static Tensor Scalar(double value);
  static Tensor Vector(std::vector<double> values);
  static Tensor Vector(std::initializer_list<double> values);
  static Tensor FromExternal(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  bool empty() const { return data_.empty(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Same payload viewed with a different shape of equal size.
  Tensor Reshaped(Shape shape) const;

  bool AllFinite() const;

  /// Bit-exact comparison of shape and payload.
  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Elementwise helpers over equal-shape tensors. They throw on mismatch.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
Tensor Hadamard(const Tensor& a, const Tensor& b);
Tensor& AddInPlace(Tensor& acc, const Tensor& b);

double Sum(const Tensor& a);
double Dot(const Tensor& a, const Tensor& b);
double L2Norm(const Tensor& a);
double L1Norm(const Tensor& a);
double MaxAbsDiff(const Tensor& a, const Tensor& b);

void CheckSameShape(const Tensor& a, const Tensor& b, const char* context);

}  // namespace pathgrad
