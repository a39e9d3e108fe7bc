#pragma once

#include <cmath>
#include <initializer_list>
#include <string>
#include <vector>

#include "aegis/common.hpp"

namespace aegis {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s);

// Dense row-major tensor. Compute runs in wide (f64) precision throughout;
// checkpoints store the narrow f32 form (see params.hpp).
struct Tensor {
  Shape shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), v(static_cast<size_t>(shape_numel(shape)), 0.0) {
    check_shape();
  }
  Tensor(Shape s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
    check_shape();
    if (static_cast<int64_t>(v.size()) != shape_numel(shape))
      fail(ErrorKind::dimension, "value count does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, double x) {
    Tensor t(std::move(s));
    for (double& e : t.v) e = x;
    return t;
  }
  static Tensor scalar(double x) { return Tensor({1}, {x}); }

  int rank() const { return static_cast<int>(shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rows() const { return require_2d(), shape[0]; }
  int cols() const { return require_2d(), shape[1]; }

  double& at(int i, int j) { return v[static_cast<size_t>(i) * shape[1] + j]; }
  double at(int i, int j) const { return v[static_cast<size_t>(i) * shape[1] + j]; }
  double& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double e : v)
      if (!std::isfinite(e)) return false;
    return true;
  }

  bool is_scalar() const { return numel() == 1; }
  double scalar_value() const {
    if (!is_scalar()) fail(ErrorKind::dimension, "expected scalar tensor, got " + shape_str(shape));
    return v[0];
  }

 private:
  void require_2d() const {
    if (shape.size() != 2) fail(ErrorKind::dimension, "expected rank-2 tensor, got " + shape_str(shape));
  }
  void check_shape() const {
    for (int d : shape)
      if (d <= 0) fail(ErrorKind::dimension, "non-positive dimension in shape " + shape_str(shape));
  }
};

// 2-D literal helper for tests and small fixtures.
Tensor tensor2d(std::initializer_list<std::initializer_list<double>> rows);

}  // namespace aegis
