// Copyright 2026 The hlstm Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace hlstm {

/// Raised when operand dimensions do not compose.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a NaN/Inf reaches an operation that requires finite input.
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Smallest value any classification loss may take. Keeps loss ratios and
/// their logarithms finite.
inline constexpr double kLossFloor = 1e-6;

/// Dense vector.
template <class T>
class BasicVec {
 public:
  using value_type = T;

  BasicVec() = default;
  explicit BasicVec(std::size_t n, T value = T(0)) : data_(n, value) {}
  BasicVec(std::initializer_list<T> values) : data_(values) {}
  explicit BasicVec(std::vector<T> values) : data_(std::move(values)) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  T operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  friend bool operator==(const BasicVec&, const BasicVec&) = default;

 private:
  std::vector<T> data_;
};

/// Dense row-major matrix.
template <class T>
class BasicMat {
 public:
  using value_type = T;

  BasicMat() = default;
  BasicMat(std::size_t rows, std::size_t cols, T value = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}
  BasicMat(std::size_t rows, std::size_t cols, std::vector<T> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows * cols) {
      throw ShapeError("Mat: " + std::to_string(data_.size()) +
                       " values for shape " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    }
  }
  BasicMat(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("Mat: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static BasicMat identity(std::size_t n) {
    BasicMat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  T operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const T* row(std::size_t r) const noexcept { return data_.data() + r * cols_; }
  T* row(std::size_t r) noexcept { return data_.data() + r * cols_; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  friend bool operator==(const BasicMat&, const BasicMat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using Vec = BasicVec<double>;
using Mat = BasicMat<double>;

template <class T>
std::string shape_str(const BasicMat<T>& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}
template <class T>
std::string shape_str(const BasicVec<T>& v) {
  return "(" + std::to_string(v.size()) + ")";
}

namespace detail {

template <class T>
void require_finite(std::span<const T> v, const char* where) {
  for (T x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(where) + ": non-finite input");
    }
  }
}

}  // namespace detail

/// y += W x
template <class T>
void matvec_acc(const BasicMat<T>& w, std::type_identity_t<std::span<const T>> x,
                std::type_identity_t<std::span<T>> y) {
  if (w.cols() != x.size() || w.rows() != y.size()) {
    throw ShapeError("matvec: matrix " + shape_str(w) + " with vector (" +
                     std::to_string(x.size()) + ") into (" +
                     std::to_string(y.size()) + ")");
  }
  const std::size_t n = w.cols();
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const T* r = w.row(i);
    T s = T(0);
    for (std::size_t j = 0; j < n; ++j) s += r[j] * x[j];
    y[i] += s;
  }
}

/// y += W^T v
template <class T>
void matvec_t_acc(const BasicMat<T>& w, std::type_identity_t<std::span<const T>> v,
                  std::type_identity_t<std::span<T>> y) {
  if (w.rows() != v.size() || w.cols() != y.size()) {
    throw ShapeError("matvec_t: matrix " + shape_str(w) + " with vector (" +
                     std::to_string(v.size()) + ")");
  }
  const std::size_t n = w.cols();
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const T* r = w.row(i);
    const T vi = v[i];
    if (vi == T(0)) continue;
    for (std::size_t j = 0; j < n; ++j) y[j] += r[j] * vi;
  }
}

/// G += a b^T
template <class T>
void outer_acc(std::type_identity_t<std::span<const T>> a,
               std::type_identity_t<std::span<const T>> b, BasicMat<T>& g) {
  if (g.rows() != a.size() || g.cols() != b.size()) {
    throw ShapeError("outer: (" + std::to_string(a.size()) + ")x(" +
                     std::to_string(b.size()) + ") into " + shape_str(g));
  }
  const std::size_t n = g.cols();
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const T ai = a[i];
    if (ai == T(0)) continue;
    T* r = g.row(i);
    for (std::size_t j = 0; j < n; ++j) r[j] += ai * b[j];
  }
}

/// W x + b
template <class T>
BasicVec<T> affine(const BasicMat<T>& w, const BasicVec<T>& x, const BasicVec<T>& b) {
  if (w.cols() != x.size() || w.rows() != b.size()) {
    throw ShapeError("affine: W " + shape_str(w) + ", x " + shape_str(x) +
                     ", b " + shape_str(b));
  }
  BasicVec<T> y = b;
  matvec_acc(w, x.values(), y.values());
  return y;
}

template <class T>
T sigmoid(T z) noexcept {
  return T(1) / (T(1) + std::exp(-z));
}

/// Max-shifted softmax; throws NumericError on non-finite input.
template <class T>
BasicVec<T> softmax(const BasicVec<T>& z) {
  if (z.empty()) throw ShapeError("softmax: empty input");
  detail::require_finite(z.values(), "softmax");
  const T m = *std::max_element(z.begin(), z.end());
  BasicVec<T> p(z.size());
  T sum = T(0);
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - m);
    sum += p[i];
  }
  for (T& v : p) v /= sum;
  return p;
}

/// -ln p[label], floored at kLossFloor.
template <class T>
T cross_entropy(const BasicVec<T>& p, std::size_t label) {
  if (label >= p.size()) {
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                            " for " + std::to_string(p.size()) + " classes");
  }
  return std::max(-std::log(p[label]), T(kLossFloor));
}

/// True when cross_entropy(p, label) sits on the floor, where its gradient
/// is zero.
template <class T>
bool cross_entropy_floored(const BasicVec<T>& p, std::size_t label) {
  return -std::log(p[label]) <= T(kLossFloor);
}

/// Index of the largest entry; ties go to the lowest index.
template <class T>
std::size_t argmax(const BasicVec<T>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

using ScalarFn = std::function<double(const Vec&)>;

/// Central-difference gradient of f at theta, evaluated in theta's scalar
/// type.
template <class F, class T>
BasicVec<T> finite_diff(F&& f, const BasicVec<T>& theta, double h = 1e-5) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff: step must be > 0");
  const T step = static_cast<T>(h);
  BasicVec<T> grad(theta.size());
  BasicVec<T> probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + step;
    const T up = f(probe);
    probe[i] = theta[i] - step;
    const T down = f(probe);
    probe[i] = theta[i];
    grad[i] = (up - down) / (T(2) * step);
  }
  return grad;
}

/// |a - b| / max(|a|, |b|, floor)
inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace hlstm
