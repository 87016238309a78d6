#include "ddlab/matrix.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

namespace ddlab {

namespace {

constexpr std::size_t kBlock = 4;

inline void axpy(double a, const double* __restrict x, double* __restrict y,
                 std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace

int kernel_threads() {
  static const int threads = [] {
    const char* env = std::getenv("DDLAB_THREADS");
    if (env == nullptr) return 1;
    try {
      return std::max(1, std::stoi(env));
    } catch (...) {
      return 1;
    }
  }();
  return threads;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  return t;
}

Matrix affine_rows(const Matrix& x, const Matrix& w, std::span<const double> bias) {
  if (x.cols() != w.cols())
    throw std::invalid_argument("affine_rows: input width does not match weights");
  if (bias.size() != w.rows())
    throw std::invalid_argument("affine_rows: bias length does not match weights");
  const std::size_t batch = x.rows(), in = w.cols(), out = w.rows();
  const Matrix wt = transpose(w);
  Matrix y(batch, out);
  // Rows are processed in blocks so each weight row is reused while cached;
  // per-element summation order is unchanged.
  const long long blocks = static_cast<long long>((batch + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static) num_threads(kernel_threads())
  for (long long blk = 0; blk < blocks; ++blk) {
    const std::size_t b0 = static_cast<std::size_t>(blk) * kBlock;
    const std::size_t b1 = std::min(batch, b0 + kBlock);
    for (std::size_t b = b0; b < b1; ++b) std::copy(bias.begin(), bias.end(), y.row(b).data());
    for (std::size_t k = 0; k < in; ++k) {
      const double* wr = wt.row(k).data();
      for (std::size_t b = b0; b < b1; ++b) {
        const double a = x(b, k);
        if (a == 0.0) continue;
        axpy(a, wr, y.row(b).data(), out);
      }
    }
  }
  return y;
}

Matrix weight_gradient(const Matrix& delta, const Matrix& x) {
  if (delta.rows() != x.rows())
    throw std::invalid_argument("weight_gradient: batch sizes differ");
  const std::size_t batch = x.rows(), in = x.cols(), out = delta.cols();
  const Matrix dt = transpose(delta);
  Matrix g(out, in);
  const long long blocks = static_cast<long long>((out + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static) num_threads(kernel_threads())
  for (long long blk = 0; blk < blocks; ++blk) {
    const std::size_t o0 = static_cast<std::size_t>(blk) * kBlock;
    const std::size_t o1 = std::min(out, o0 + kBlock);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* xr = x.row(b).data();
      for (std::size_t o = o0; o < o1; ++o) {
        const double a = dt(o, b);
        if (a == 0.0) continue;
        axpy(a, xr, g.row(o).data(), in);
      }
    }
  }
  return g;
}

Matrix input_gradient(const Matrix& delta, const Matrix& w) {
  if (delta.cols() != w.rows())
    throw std::invalid_argument("input_gradient: delta width does not match weights");
  const std::size_t batch = delta.rows(), in = w.cols(), out = w.rows();
  Matrix g(batch, in);
  const long long blocks = static_cast<long long>((batch + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(static) num_threads(kernel_threads())
  for (long long blk = 0; blk < blocks; ++blk) {
    const std::size_t b0 = static_cast<std::size_t>(blk) * kBlock;
    const std::size_t b1 = std::min(batch, b0 + kBlock);
    for (std::size_t o = 0; o < out; ++o) {
      const double* wr = w.row(o).data();
      for (std::size_t b = b0; b < b1; ++b) {
        const double a = delta(b, o);
        if (a == 0.0) continue;
        axpy(a, wr, g.row(b).data(), in);
      }
    }
  }
  return g;
}

}  // namespace ddlab
