// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>

#include "amc/autodiff/tensor.hpp"

namespace amc::ad {

// Linear algebra -------------------------------------------------------------

/// [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// Batched product: [B,m,k] x [B,k,n] -> [B,m,n], or with transpose_b
/// [B,m,k] x [B,n,k]^T -> [B,m,n].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

// Elementwise ------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);
/// Adds a vector along the last axis. The only broadcast the engine supports.
Tensor add_bias(const Tensor& a, const Tensor& bias);
/// Gaussian error linear unit, exact erf form.
Tensor gelu(const Tensor& a);

// Reductions -------------------------------------------------------------------

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Sums out one axis: [.., n, ..] -> [.., ..].
Tensor sum_axis(const Tensor& a, std::size_t axis);
/// Euclidean norm of each row of a [B,n] tensor -> [B]. The gradient at a zero
/// row is taken as zero.
Tensor row_norms(const Tensor& a);

// Normalisation ----------------------------------------------------------------

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);
/// log-softmax along the last axis.
Tensor log_softmax(const Tensor& x);
inline constexpr float kLayerNormEpsilon = 1e-5f;
/// Normalises each row over the last axis, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

// Losses -----------------------------------------------------------------------

/// Per-row cross entropy of logits [B,K] against integer labels -> [B].
Tensor cross_entropy_rows(const Tensor& logits, std::span<const int> labels);
/// Mean cross entropy over the batch. Also accepts a single logit vector [K]
/// with one label.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);
Tensor cross_entropy(const Tensor& logits, int label);

inline constexpr float kKlClamp = 1e-12f;
inline constexpr double kProbabilityTolerance = 1e-5;
/// Per-row KL(p || q) = sum p ln(p/q) for probability rows [B,K] -> [B].
/// Uses 0 ln 0 = 0 and clamps q at kKlClamp. Throws ContractError when a row
/// is negative or does not sum to one within kProbabilityTolerance.
Tensor kl_rows(const Tensor& p, const Tensor& q);
/// Batch mean of kl_rows; accepts single vectors [K] too.
Tensor kl_divergence(const Tensor& p, const Tensor& q);

// Shape manipulation -----------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape);
/// Slides a window of `width` columns with `stride` over x [B,R,L] and
/// flattens each window row-major -> [B*P, R*width], P = (L-width)/stride+1.
Tensor extract_patches(const Tensor& x, std::size_t width, std::size_t stride);
/// Prepends `token` [k] to every sequence of x [B*N, k] -> [B*(N+1), k].
Tensor prepend_token(const Tensor& x, const Tensor& token, std::size_t batch);
/// Picks position `index` of every length-`seq_len` sequence in x [B*T, k]
/// -> [B, k].
Tensor select_position(const Tensor& x, std::size_t seq_len, std::size_t index);
/// [B*T, h*d] -> [B*h, T, d].
Tensor split_heads(const Tensor& x, std::size_t batch, std::size_t heads);
/// [B*h, T, d] -> [B*T, h*d].
Tensor merge_heads(const Tensor& x, std::size_t batch, std::size_t heads);

}  // namespace amc::ad
