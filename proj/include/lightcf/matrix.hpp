#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace lightcf {

using Rng = std::mt19937_64;

// Dense row-major matrix of doubles. Embedding tables and layer outputs are
// (entities x dim) with dim small, so contiguous storage with value semantics
// is both the simplest and the fastest layout here.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }

  // Gaussian init, the standard embedding-table initialization.
  static Matrix gaussian(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
    Matrix m(rows, cols);
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : m.data_) v = dist(rng);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  Matrix& operator+=(const Matrix& o) {
    require_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  Matrix& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  // this += s * o
  void add_scaled(const Matrix& o, double s) {
    require_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  double sum_squares() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return s;
  }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  void require_same_shape(const Matrix& o) const {
    if (!same_shape(o)) throw std::invalid_argument("matrix shape mismatch");
  }

  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

// Parameter tables are plain matrices: rows = entity count, cols = dim.
using EmbeddingTable = Matrix;

inline void axpy(std::span<double> y, std::span<const double> x, double a) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace lightcf
