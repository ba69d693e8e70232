#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace conflow {

// Dense row-major tensor of doubles. Used for vectors (D), fields (HxWxC)
// and trajectories (Tx2) alike; operations interpret the shape as needed.
struct Tensor {
  std::vector<double> data;
  std::vector<std::size_t> shape;

  Tensor() = default;
  Tensor(std::vector<double> d, std::vector<std::size_t> s)
      : data(std::move(d)), shape(std::move(s)) {
    if (data.size() != numel_of(shape))
      throw std::invalid_argument("Tensor: data length does not match shape");
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  static Tensor zeros(std::vector<std::size_t> s) {
    std::size_t n = numel_of(s);
    return Tensor(std::vector<double>(n, 0.0), std::move(s));
  }

  std::size_t numel() const { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // 2-D access (H x W) and 3-D access (H x W x C)
  double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t c) {
    return data[(i * shape[1] + j) * shape[2] + c];
  }
  double at(std::size_t i, std::size_t j, std::size_t c) const {
    return data[(i * shape[1] + j) * shape[2] + c];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline Tensor operator-(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("tensor shape mismatch");
  Tensor r = a;
  for (std::size_t i = 0; i < r.numel(); ++i) r.data[i] -= b.data[i];
  return r;
}

inline Tensor operator+(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("tensor shape mismatch");
  Tensor r = a;
  for (std::size_t i = 0; i < r.numel(); ++i) r.data[i] += b.data[i];
  return r;
}

inline Tensor operator*(double c, const Tensor& a) {
  Tensor r = a;
  for (double& v : r.data) v *= c;
  return r;
}

inline void axpy(double c, const Tensor& x, Tensor& y) {
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] += c * x.data[i];
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline double sq_norm(const Tensor& a) { return dot(a, a); }
inline double norm(const Tensor& a) { return std::sqrt(sq_norm(a)); }

}  // namespace conflow
