// SPDX-License-Identifier: Apache-2.0
#include "amc/autodiff/kernels.hpp"

#include <cblas.h>

#include <algorithm>
#include <vector>

namespace amc::ad::kernels {

namespace {

inline void axpy(std::size_t n, float alpha, const float* __restrict x, float* __restrict y) {
  for (std::size_t j = 0; j < n; ++j) y[j] += alpha * x[j];
}

// Below this many multiply-adds the BLAS call overhead dominates; the tiny
// per-head attention products stay on the simple loops.
constexpr std::size_t kBlasThreshold = 16384;

bool use_blas(std::size_t m, std::size_t n, std::size_t k) {
  // Parallelism lives at the record level; a threaded BLAS would make
  // results depend on the thread count.
  static const bool once = (openblas_set_num_threads(1), true);
  (void)once;
  return m * n * k >= kBlasThreshold;
}

void blas(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, std::size_t m, std::size_t n, std::size_t k,
          const float* a, std::size_t lda, const float* b, std::size_t ldb, float* c,
          bool accumulate) {
  cblas_sgemm(CblasRowMajor, ta, tb, int(m), int(n), int(k), 1.0f, a, int(lda), b, int(ldb),
              accumulate ? 1.0f : 0.0f, c, int(n));
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate) {
  if (use_blas(m, n, k)) return blas(CblasNoTrans, CblasNoTrans, m, n, k, a, k, b, n, c, accumulate);
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0f);
    const float* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = arow[p];
      if (av == 0.0f) continue;
      axpy(n, av, b + p * n, crow);
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate) {
  if (use_blas(m, n, k)) return blas(CblasNoTrans, CblasTrans, m, n, k, a, k, b, k, c, accumulate);
  thread_local std::vector<float> bt;
  bt.resize(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate) {
  if (use_blas(m, n, k)) return blas(CblasTrans, CblasNoTrans, m, n, k, a, m, b, n, c, accumulate);
  if (!accumulate) std::fill(c, c + m * n, 0.0f);
  for (std::size_t p = 0; p < k; ++p) {
    const float* arow = a + p * m;
    const float* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const float av = arow[i];
      if (av == 0.0f) continue;
      axpy(n, av, brow, c + i * n);
    }
  }
}

}  // namespace amc::ad::kernels
