#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "omega/numerics/tensor.hpp"

// Raw dense kernels over row-major buffers. Accumulation runs in double for
// both float and double element types; every output row is produced by the
// same instruction sequence regardless of how many rows the call carries, so
// results for one row never depend on its neighbours.

namespace omega::numerics::kernels {

template <class T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    const std::size_t r1 = std::min(rows, r0 + kTile);
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
      }
    }
  }
}

/// C[M x N] (+)= A[M x K] * B[K x N].
template <class T>
void gemm(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B,
          T* C, bool accumulate) {
  constexpr std::size_t kRows = 4;
  constexpr std::size_t kCols = 64;
  alignas(64) double acc[kRows][kCols];
  for (std::size_t i0 = 0; i0 < M; i0 += kRows) {
    const std::size_t rn = std::min(kRows, M - i0);
    for (std::size_t j0 = 0; j0 < N; j0 += kCols) {
      const std::size_t cn = std::min(kCols, N - j0);
      for (auto& row : acc) std::fill(row, row + kCols, 0.0);
      for (std::size_t k = 0; k < K; ++k) {
        // Missing rows of a partial block multiply by zero and are never
        // stored; keeping a single code path makes rows independent.
        const double a0 = static_cast<double>(A[i0 * K + k]);
        const double a1 = rn > 1 ? static_cast<double>(A[(i0 + 1) * K + k]) : 0.0;
        const double a2 = rn > 2 ? static_cast<double>(A[(i0 + 2) * K + k]) : 0.0;
        const double a3 = rn > 3 ? static_cast<double>(A[(i0 + 3) * K + k]) : 0.0;
        const T* b = B + k * N + j0;
        for (std::size_t j = 0; j < cn; ++j) {
          const double bj = static_cast<double>(b[j]);
          acc[0][j] += a0 * bj;
          acc[1][j] += a1 * bj;
          acc[2][j] += a2 * bj;
          acc[3][j] += a3 * bj;
        }
      }
      for (std::size_t r = 0; r < rn; ++r) {
        T* c = C + (i0 + r) * N + j0;
        if (accumulate) {
          for (std::size_t j = 0; j < cn; ++j) {
            c[j] = static_cast<T>(static_cast<double>(c[j]) + acc[r][j]);
          }
        } else {
          for (std::size_t j = 0; j < cn; ++j) c[j] = static_cast<T>(acc[r][j]);
        }
      }
    }
  }
}

/// C[M x N] (+)= A[M x K] * B^T where B is stored [N x K].
template <class T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A,
             const T* B, T* C, bool accumulate) {
  std::vector<T> bt(K * N);
  transpose(N, K, B, bt.data());
  gemm(M, N, K, A, bt.data(), C, accumulate);
}

/// C[M x N] (+)= A^T * B where A is stored [K x M] and B is [K x N].
template <class T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A,
             const T* B, T* C, bool accumulate) {
  std::vector<T> at(M * K);
  transpose(K, M, A, at.data());
  gemm(M, N, K, at.data(), B, C, accumulate);
}

/// Row-wise softmax with max subtraction.
template <class T>
void softmax_rows(std::size_t rows, std::size_t cols, const T* x, T* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x + r * cols;
    T* out = y + r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, static_cast<double>(in[c]));
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sum += std::exp(static_cast<double>(in[c]) - mx);
    for (std::size_t c = 0; c < cols; ++c) {
      out[c] = static_cast<T>(std::exp(static_cast<double>(in[c]) - mx) / sum);
    }
  }
}

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  BasicTensor<T> c({a.dim(0), b.dim(1)});
  gemm(a.dim(0), b.dim(1), a.dim(1), a.data().data(), b.data().data(),
       c.data().data(), false);
  require_finite<T>(c.data(), "matmul");
  return c;
}

template <class T>
BasicTensor<T> softmax_lastdim(const BasicTensor<T>& x) {
  if (x.rank() == 0) throw ShapeError("softmax needs a last dimension");
  BasicTensor<T> y(x.shape());
  softmax_rows(x.rows(), x.cols(), x.data().data(), y.data().data());
  require_finite<T>(y.data(), "softmax");
  return y;
}

}  // namespace omega::numerics::kernels
