// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

// Dense row-major float kernels. Large products go to single-threaded BLAS,
// small ones to plain loops. Results are deterministic for a given shape but
// may differ in the last bit across batch sizes, so callers that need
// reproducibility keep their batch partitioning fixed.
namespace amc::ad::kernels {

/// C[m,n] (+)= A[m,k] * B[k,n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate);
/// C[m,n] (+)= A[m,k] * B[n,k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate);
/// C[m,n] (+)= A[k,m]^T * B[k,n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate);

}  // namespace amc::ad::kernels
