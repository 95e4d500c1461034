#pragma once

#include <cstddef>
#include <vector>

// Dense row-major GEMM helpers. All of them accumulate into C.
namespace lomar::kernels {

// C[p×r] += A[p×q] · B[q×r]
template <typename T>
void gemm_nn(std::size_t p, std::size_t q, std::size_t r, const T* __restrict a, const T* __restrict b,
             T* __restrict c) {
  for (std::size_t i = 0; i < p; ++i) {
    T* ci = c + i * r;
    const T* ai = a + i * q;
    for (std::size_t k = 0; k < q; ++k) {
      const T aik = ai[k];
      const T* bk = b + k * r;
      for (std::size_t j = 0; j < r; ++j) ci[j] += aik * bk[j];
    }
  }
}

// C[p×r] += A[p×q] · B[r×q]ᵀ
template <typename T>
void gemm_nt(std::size_t p, std::size_t q, std::size_t r, const T* a, const T* b, T* c) {
  std::vector<T> bt(q * r);
  for (std::size_t j = 0; j < r; ++j) {
    for (std::size_t k = 0; k < q; ++k) bt[k * r + j] = b[j * q + k];
  }
  gemm_nn(p, q, r, a, bt.data(), c);
}

// C[q×r] += A[p×q]ᵀ · B[p×r]
template <typename T>
void gemm_tn(std::size_t p, std::size_t q, std::size_t r, const T* __restrict a, const T* __restrict b,
             T* __restrict c) {
  for (std::size_t i = 0; i < p; ++i) {
    const T* ai = a + i * q;
    const T* bi = b + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const T aik = ai[k];
      T* ck = c + k * r;
      for (std::size_t j = 0; j < r; ++j) ck[j] += aik * bi[j];
    }
  }
}

}  // namespace lomar::kernels
