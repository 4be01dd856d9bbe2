/**
 * @file tensor.hpp
 * @brief Dense row-major tensor with shape metadata.
 */
#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wwm/rng.hpp"

namespace wwm {

template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    v.assign(count(shape), T(0));
  }
  Tensor(std::vector<std::size_t> s, std::vector<T> data)
      : shape(std::move(s)), v(std::move(data)) {
    if (v.size() != count(shape))
      throw std::runtime_error("tensor: data size does not match shape " + shape_str());
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
  }

  std::size_t numel() const { return v.size(); }
  std::size_t ndim() const { return shape.size(); }

  // 2D accessors; rank-1 tensors are treated as a single row.
  std::size_t rows() const { return shape.size() >= 2 ? shape[0] : 1; }
  std::size_t cols() const {
    return shape.empty() ? 0 : numel() / (shape.size() >= 2 ? shape[0] : 1);
  }
  T* row(std::size_t i) { return v.data() + i * cols(); }
  const T* row(std::size_t i) const { return v.data() + i * cols(); }
  T& at(std::size_t i, std::size_t j) { return v[i * cols() + j]; }
  const T& at(std::size_t i, std::size_t j) const { return v[i * cols() + j]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i)
      os << shape[i] << (i + 1 < shape.size() ? "," : "");
    os << "]";
    return os.str();
  }

  void fill(T x) { std::fill(v.begin(), v.end(), x); }

  bool finite() const {
    for (T x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<std::size_t> s, T x) {
    Tensor t(std::move(s));
    t.fill(x);
    return t;
  }

  static Tensor randn(std::vector<std::size_t> s, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(s));
    for (auto& x : t.v) x = static_cast<T>(rng.normal() * stddev);
    return t;
  }

  static Tensor trunc_normal(std::vector<std::size_t> s, Rng& rng, double stddev) {
    Tensor t(std::move(s));
    for (auto& x : t.v) x = static_cast<T>(rng.trunc_normal(stddev));
    return t;
  }

  static Tensor uniform(std::vector<std::size_t> s, Rng& rng, double lo, double hi) {
    Tensor t(std::move(s));
    for (auto& x : t.v) x = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.v.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace wwm
