#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace ddlab {

/// Dense row-major matrix of 64-bit reals.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix transpose(const Matrix& m);

// Kernels used by the dense layers. Every output element is produced by a
// single thread with a fixed summation order, so results do not depend on
// the thread count and a row's result does not depend on the other rows.

/// out(b, o) = bias(o) + sum_k x(b, k) * w(o, k)
Matrix affine_rows(const Matrix& x, const Matrix& w, std::span<const double> bias);

/// out(o, k) = sum_b delta(b, o) * x(b, k)
Matrix weight_gradient(const Matrix& delta, const Matrix& x);

/// out(b, k) = sum_o delta(b, o) * w(o, k)
Matrix input_gradient(const Matrix& delta, const Matrix& w);

/// Number of threads the kernels may use (DDLAB_THREADS, default 1).
int kernel_threads();

}  // namespace ddlab
