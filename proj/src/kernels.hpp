#pragma once

// Row-major dense kernels shared by matmul, linear and conv2d.

#include <cstddef>
#include <vector>

namespace tw::kernels {

// C[M,N] += A[M,K] * B[K,N]
template <typename Real>
void gemm_acc(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  std::size_t p = 0;
  for (std::size_t i = 0; i < m; ++i) {
    Real* crow = c + i * n;
    const Real* arow = a + i * k;
    for (p = 0; p + 4 <= k; p += 4) {
      const Real a0 = arow[p], a1 = arow[p + 1], a2 = arow[p + 2], a3 = arow[p + 3];
      const Real* b0 = b + p * n;
      const Real* b1 = b0 + n;
      const Real* b2 = b1 + n;
      const Real* b3 = b2 + n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] = crow[j] + a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
      }
    }
    for (; p < k; ++p) {
      const Real av = arow[p];
      const Real* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// out[cols, rows] = in[rows, cols]^T
template <typename Real>
void transpose_into(std::size_t rows, std::size_t cols, const Real* in, Real* out) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kBlock) {
    const std::size_t i1 = i0 + kBlock < rows ? i0 + kBlock : rows;
    for (std::size_t j0 = 0; j0 < cols; j0 += kBlock) {
      const std::size_t j1 = j0 + kBlock < cols ? j0 + kBlock : cols;
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) out[j * rows + i] = in[i * cols + j];
      }
    }
  }
}

// dA[M,K] += G[M,N] * B[K,N]^T
template <typename Real>
void gemm_acc_bt(std::size_t m, std::size_t n, std::size_t k, const Real* g, const Real* b, Real* da,
                 std::vector<Real>& scratch) {
  scratch.resize(k * n);
  transpose_into(k, n, b, scratch.data());
  gemm_acc(m, k, n, g, scratch.data(), da);
}

// dB[K,N] += A[M,K]^T * G[M,N]
template <typename Real>
void gemm_acc_at(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* g, Real* db,
                 std::vector<Real>& scratch) {
  scratch.resize(m * k);
  transpose_into(m, k, a, scratch.data());
  gemm_acc(k, n, m, scratch.data(), g, db);
}

}  // namespace tw::kernels
