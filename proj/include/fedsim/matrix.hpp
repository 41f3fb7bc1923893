#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedsim/common.hpp"

namespace fedsim {

// Dense row-major matrix of doubles. All simulator arithmetic is double
// precision: the defense layer reasons about small gradient masses that
// single precision would blur.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

  std::span<double> row(int r) {
    return {a.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
  }
  std::span<const double> row(int r) const {
    return {a.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
  }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  void fill(double v) { std::fill(a.begin(), a.end(), v); }

  bool all_finite() const {
    for (double v : a)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline Matrix zeros(int r, int c) { return Matrix(r, c); }

template <class Rng>
Matrix randn(int r, int c, double stddev, Rng& rng) {
  Matrix m(r, c);
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : m.a) v = dist(rng);
  return m;
}

inline void check_same_shape(const Matrix& x, const Matrix& y, const std::string& what) {
  if (!x.same_shape(y))
    throw StructuralError("shape mismatch for " + what + ": " + std::to_string(x.rows) + "x" +
                          std::to_string(x.cols) + " vs " + std::to_string(y.rows) + "x" +
                          std::to_string(y.cols));
}

inline void axpy(double alpha, const Matrix& x, Matrix& y) {
  check_same_shape(x, y, "axpy");
  for (size_t i = 0; i < y.a.size(); ++i) y.a[i] += alpha * x.a[i];
}

inline void scale(Matrix& x, double alpha) {
  for (double& v : x.a) v *= alpha;
}

inline double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline double l2_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

inline double frobenius_norm(const Matrix& m) { return l2_norm(m.a); }

// lp norm of a flat view; p = 2 is the common case and gets the exact
// sqrt-of-squares path.
inline double lp_norm(std::span<const double> x, double p) {
  if (p == 2.0) return l2_norm(x);
  double s = 0.0;
  for (double v : x) s += std::pow(std::abs(v), p);
  return std::pow(s, 1.0 / p);
}

inline double max_abs_diff(const Matrix& x, const Matrix& y) {
  check_same_shape(x, y, "max_abs_diff");
  double m = 0.0;
  for (size_t i = 0; i < x.a.size(); ++i) m = std::max(m, std::abs(x.a[i] - y.a[i]));
  return m;
}

}  // namespace fedsim
