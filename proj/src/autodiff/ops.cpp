// SPDX-License-Identifier: Apache-2.0
#include "amc/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "amc/autodiff/kernels.hpp"
#include "amc/error.hpp"

namespace amc::ad {

using detail::make_result;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(a.shape()));
  }
}

std::vector<float> copy_values(const Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

}  // namespace

// Linear algebra -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  std::vector<float> out(m * n);
  kernels::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data(), false);
  return make_result({m, n}, std::move(out), {a, b}, [m, n, k](Node& self) {
    const auto& g = self.grad;
    if (self.wants_grad(0)) {
      kernels::gemm_nt(m, k, n, g.data(), self.input_value(1).data(), self.input_grad(0).data(),
                       true);
    }
    if (self.wants_grad(1)) {
      kernels::gemm_tn(k, n, m, self.input_value(0).data(), g.data(), self.input_grad(1).data(),
                       true);
    }
  });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
  if (b.dim(0) != batch || bk != k) {
    throw DimensionError("bmm: incompatible shapes " + to_string(a.shape()) + " x " +
                         to_string(b.shape()) + (transpose_b ? "^T" : ""));
  }
  std::vector<float> out(batch * m * n);
  const float* ap = a.data().data();
  const float* bp = b.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    if (transpose_b) {
      kernels::gemm_nt(m, n, k, ap + i * m * k, bp + i * n * k, out.data() + i * m * n, false);
    } else {
      kernels::gemm_nn(m, n, k, ap + i * m * k, bp + i * k * n, out.data() + i * m * n, false);
    }
  }
  return make_result({batch, m, n}, std::move(out), {a, b},
                     [batch, m, n, k, transpose_b](Node& self) {
    const float* g = self.grad.data();
    const float* av = self.input_value(0).data();
    const float* bv = self.input_value(1).data();
    float* ga = self.wants_grad(0) ? self.input_grad(0).data() : nullptr;
    float* gb = self.wants_grad(1) ? self.input_grad(1).data() : nullptr;
    for (std::size_t i = 0; i < batch; ++i) {
      const float* gi = g + i * m * n;
      const float* ai = av + i * m * k;
      if (transpose_b) {
        // C = A B^T: dA = G B, dB = G^T A
        const float* bi = bv + i * n * k;
        if (ga) kernels::gemm_nn(m, k, n, gi, bi, ga + i * m * k, true);
        if (gb) kernels::gemm_tn(n, k, m, gi, ai, gb + i * n * k, true);
      } else {
        const float* bi = bv + i * k * n;
        if (ga) kernels::gemm_nt(m, k, n, gi, bi, ga + i * m * k, true);
        if (gb) kernels::gemm_tn(k, n, m, ai, gi, gb + i * k * n, true);
      }
    }
  });
}

// Elementwise ------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  auto out = copy_values(a);
  const auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t s = 0; s < 2; ++s) {
      if (!self.wants_grad(s)) continue;
      auto& gi = self.input_grad(s);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  auto out = copy_values(a);
  const auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (self.wants_grad(0)) {
      auto& gi = self.input_grad(0);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i];
    }
    if (self.wants_grad(1)) {
      auto& gi = self.input_grad(1);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto out = copy_values(a);
  const auto bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t s = 0; s < 2; ++s) {
      if (!self.wants_grad(s)) continue;
      const auto& other = self.input_value(1 - s);
      auto& gi = self.input_grad(s);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i] * other[i];
    }
  });
}

Tensor scale(const Tensor& a, float factor) {
  auto out = copy_values(a);
  for (auto& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
    auto& gi = self.input_grad(0);
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += factor * self.grad[i];
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_rank(bias, 1, "add_bias");
  const std::size_t n = bias.dim(0);
  if (a.shape().back() != n) {
    throw DimensionError("add_bias: bias of length " + std::to_string(n) + " for " +
                         to_string(a.shape()));
  }
  auto out = copy_values(a);
  const auto bv = bias.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
  return make_result(a.shape(), std::move(out), {a, bias}, [n](Node& self) {
    if (self.wants_grad(0)) {
      auto& gi = self.input_grad(0);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i];
    }
    if (self.wants_grad(1)) {
      auto& gb = self.input_grad(1);
      const std::size_t rows = self.grad.size() / n;
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t r = 0; r < rows; ++r) acc += self.grad[r * n + j];
        gb[j] += static_cast<float>(acc);
      }
    }
  });
}

Tensor gelu(const Tensor& a) {
  auto out = copy_values(a);
  for (auto& v : out) {
    const double x = v;
    v = static_cast<float>(0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)));
  }
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    const auto& xv = self.input_value(0);
    auto& gi = self.input_grad(0);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < gi.size(); ++i) {
      const double x = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
      gi[i] += static_cast<float>(self.grad[i] * (cdf + x * pdf));
    }
  });
}

// Reductions -------------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  return make_result({1}, {static_cast<float>(acc)}, {a}, [](Node& self) {
    auto& gi = self.input_grad(0);
    const float g = self.grad[0];
    for (auto& v : gi) v += g;
  });
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0f / static_cast<float>(a.numel()));
}

Tensor sum_axis(const Tensor& a, std::size_t axis) {
  const auto& shape = a.shape();
  if (axis >= shape.size()) throw DimensionError("sum_axis: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t n = shape[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) out_shape.push_back(shape[i]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<float> out(outer * inner, 0.0f);
  const auto v = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < n; ++j) {
      const float* src = v.data() + (o * n + j) * inner;
      float* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  return make_result(std::move(out_shape), std::move(out), {a}, [outer, inner, n](Node& self) {
    auto& gi = self.input_grad(0);
    for (std::size_t o = 0; o < outer; ++o) {
      const float* g = self.grad.data() + o * inner;
      for (std::size_t j = 0; j < n; ++j) {
        float* dst = gi.data() + (o * n + j) * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += g[i];
      }
    }
  });
}

Tensor row_norms(const Tensor& a) {
  require_rank(a, 2, "row_norms");
  const std::size_t rows = a.dim(0), n = a.dim(1);
  std::vector<float> out(rows);
  const auto v = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += double(v[r * n + j]) * v[r * n + j];
    out[r] = static_cast<float>(std::sqrt(acc));
  }
  return make_result({rows}, std::move(out), {a}, [rows, n](Node& self) {
    const auto& xv = self.input_value(0);
    auto& gi = self.input_grad(0);
    for (std::size_t r = 0; r < rows; ++r) {
      const float norm = self.value[r];
      if (norm == 0.0f) continue;
      const float f = self.grad[r] / norm;
      for (std::size_t j = 0; j < n; ++j) gi[r * n + j] += f * xv[r * n + j];
    }
  });
}

// Normalisation ----------------------------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto& shape = x.shape();
  if (axis >= shape.size()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " +
                         to_string(shape));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t n = shape[axis];
  std::vector<float> out(x.numel());
  const auto v = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      float mx = -std::numeric_limits<float>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, v[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(double(v[base + j * inner]) - mx);
        out[base + j * inner] = static_cast<float>(e);
        total += e;
      }
      for (std::size_t j = 0; j < n; ++j) {
        out[base + j * inner] = static_cast<float>(out[base + j * inner] / total);
      }
    }
  }
  return make_result(shape, std::move(out), {x}, [outer, inner, n](Node& self) {
    auto& gi = self.input_grad(0);
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * n * inner + i;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += double(g[base + j * inner]) * y[base + j * inner];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t idx = base + j * inner;
          gi[idx] += static_cast<float>(y[idx] * (g[idx] - dot));
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  std::vector<float> out(x.numel());
  const auto v = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = v.data() + r * n;
    const float mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(double(row[j]) - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = static_cast<float>(row[j] - lse);
  }
  return make_result(x.shape(), std::move(out), {x}, [rows, n](Node& self) {
    auto& gi = self.input_grad(0);
    for (std::size_t r = 0; r < rows; ++r) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += self.grad[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        const double p = std::exp(double(self.value[r * n + j]));
        gi[r * n + j] += static_cast<float>(self.grad[r * n + j] - p * gsum);
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  const std::size_t n = x.shape().back();
  if (gain.numel() != n || bias.numel() != n) {
    throw DimensionError("layer_norm: gain/bias length must equal last axis " +
                         std::to_string(n));
  }
  const std::size_t rows = x.numel() / n;
  std::vector<float> out(x.numel());
  // Normalised activations and inverse std are needed again for backward.
  auto xhat = std::make_shared<std::vector<float>>(x.numel());
  auto inv_std = std::make_shared<std::vector<float>>(rows);
  const auto v = x.data();
  const auto gv = gain.data();
  const auto bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = v.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    (*inv_std)[r] = static_cast<float>(is);
    for (std::size_t j = 0; j < n; ++j) {
      const float h = static_cast<float>((row[j] - mu) * is);
      (*xhat)[r * n + j] = h;
      out[r * n + j] = h * gv[j] + bv[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gain, bias},
                     [rows, n, xhat, inv_std](Node& self) {
    const auto& g = self.grad;
    const auto& gv = self.input_value(1);
    if (self.wants_grad(0)) {
      auto& gx = self.input_grad(0);
      for (std::size_t r = 0; r < rows; ++r) {
        double sum_dh = 0.0, sum_dh_h = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double dh = double(g[r * n + j]) * gv[j];
          sum_dh += dh;
          sum_dh_h += dh * (*xhat)[r * n + j];
        }
        const double is = (*inv_std)[r];
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
          const double dh = double(g[r * n + j]) * gv[j];
          const double h = (*xhat)[r * n + j];
          gx[r * n + j] += static_cast<float>(is * (dh - inv_n * sum_dh - h * inv_n * sum_dh_h));
        }
      }
    }
    if (self.wants_grad(1) || self.wants_grad(2)) {
      std::vector<double> dg(n, 0.0), db(n, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) {
          dg[j] += double(g[r * n + j]) * (*xhat)[r * n + j];
          db[j] += g[r * n + j];
        }
      }
      if (self.wants_grad(1)) {
        auto& gg = self.input_grad(1);
        for (std::size_t j = 0; j < n; ++j) gg[j] += static_cast<float>(dg[j]);
      }
      if (self.wants_grad(2)) {
        auto& gb = self.input_grad(2);
        for (std::size_t j = 0; j < n; ++j) gb[j] += static_cast<float>(db[j]);
      }
    }
  });
}

// Losses -----------------------------------------------------------------------

Tensor cross_entropy_rows(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t rows = logits.dim(0), k = logits.dim(1);
  if (labels.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw IndexError("cross_entropy: label " + std::to_string(y) + " outside [0," +
                       std::to_string(k) + ")");
    }
  }
  std::vector<float> out(rows);
  auto probs = std::make_shared<std::vector<float>>(rows * k);
  const auto v = logits.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = v.data() + r * k;
    const float mx = *std::max_element(row, row + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += std::exp(double(row[j]) - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < k; ++j) {
      (*probs)[r * k + j] = static_cast<float>(std::exp(double(row[j]) - lse));
    }
    out[r] = static_cast<float>(lse - row[labels[r]]);
  }
  std::vector<int> saved(labels.begin(), labels.end());
  return make_result({rows}, std::move(out), {logits},
                     [rows, k, probs, saved = std::move(saved)](Node& self) {
    auto& gi = self.input_grad(0);
    for (std::size_t r = 0; r < rows; ++r) {
      const float g = self.grad[r];
      for (std::size_t j = 0; j < k; ++j) gi[r * k + j] += g * (*probs)[r * k + j];
      gi[r * k + static_cast<std::size_t>(saved[r])] -= g;
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() == 1) {
    return mean(cross_entropy_rows(reshape(logits, {1, logits.dim(0)}), labels));
  }
  return mean(cross_entropy_rows(logits, labels));
}

Tensor cross_entropy(const Tensor& logits, int label) {
  const int labels[1] = {label};
  return cross_entropy(logits, labels);
}

Tensor kl_rows(const Tensor& p, const Tensor& q) {
  require_same_shape(p, q, "kl_divergence");
  require_rank(p, 2, "kl_divergence");
  const std::size_t rows = p.dim(0), k = p.dim(1);
  const auto pv = p.data();
  const auto qv = q.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (const auto* vals : {&pv, &qv}) {
      double total = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const float x = (*vals)[r * k + j];
        if (!(x >= 0.0f)) throw ContractError("kl_divergence: negative or NaN probability");
        total += x;
      }
      if (std::abs(total - 1.0) > kProbabilityTolerance) {
        throw ContractError("kl_divergence: row " + std::to_string(r) + " sums to " +
                            std::to_string(total));
      }
    }
  }
  std::vector<float> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double pj = pv[r * k + j];
      if (pj == 0.0) continue;
      const double qj = std::max(qv[r * k + j], kKlClamp);
      acc += pj * std::log(pj / qj);
    }
    out[r] = static_cast<float>(acc);
  }
  return make_result({rows}, std::move(out), {p, q}, [rows, k](Node& self) {
    const auto& pv = self.input_value(0);
    const auto& qv = self.input_value(1);
    if (self.wants_grad(0)) {
      auto& gp = self.input_grad(0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < k; ++j) {
          const double pj = pv[r * k + j];
          if (pj == 0.0) continue;  // subgradient of 0 ln 0
          const double qj = std::max(qv[r * k + j], kKlClamp);
          gp[r * k + j] += static_cast<float>(self.grad[r] * (std::log(pj / qj) + 1.0));
        }
      }
    }
    if (self.wants_grad(1)) {
      auto& gq = self.input_grad(1);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < k; ++j) {
          const float qraw = qv[r * k + j];
          if (qraw < kKlClamp) continue;
          gq[r * k + j] -= static_cast<float>(self.grad[r] * pv[r * k + j] / qraw);
        }
      }
    }
  });
}

Tensor kl_divergence(const Tensor& p, const Tensor& q) {
  if (p.rank() == 1) {
    return mean(kl_rows(reshape(p, {1, p.dim(0)}), reshape(q, {1, q.numel()})));
  }
  return mean(kl_rows(p, q));
}

// Shape manipulation -----------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape));
  }
  return make_result(std::move(shape), copy_values(a), {a}, [](Node& self) {
    auto& gi = self.input_grad(0);
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i];
  });
}

Tensor extract_patches(const Tensor& x, std::size_t width, std::size_t stride) {
  require_rank(x, 3, "extract_patches");
  const std::size_t batch = x.dim(0), rows = x.dim(1), len = x.dim(2);
  if (width == 0 || stride == 0 || width > len || (len - width) % stride != 0) {
    throw DimensionError("extract_patches: width " + std::to_string(width) + " / stride " +
                         std::to_string(stride) + " do not tile length " + std::to_string(len));
  }
  const std::size_t patches = (len - width) / stride + 1;
  const std::size_t cols = rows * width;
  std::vector<float> out(batch * patches * cols);
  const auto v = x.data();
  auto index = [=](std::size_t b, std::size_t p, std::size_t r, std::size_t w) {
    return (b * rows + r) * len + p * stride + w;
  };
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t p = 0; p < patches; ++p)
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t w = 0; w < width; ++w)
          out[(b * patches + p) * cols + r * width + w] = v[index(b, p, r, w)];
  return make_result({batch * patches, cols}, std::move(out), {x},
                     [=](Node& self) {
    auto& gi = self.input_grad(0);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t p = 0; p < patches; ++p)
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t w = 0; w < width; ++w)
            gi[index(b, p, r, w)] += self.grad[(b * patches + p) * cols + r * width + w];
  });
}

Tensor prepend_token(const Tensor& x, const Tensor& token, std::size_t batch) {
  require_rank(x, 2, "prepend_token");
  const std::size_t k = x.dim(1);
  if (token.numel() != k || batch == 0 || x.dim(0) % batch != 0) {
    throw DimensionError("prepend_token: token/sequence shapes disagree");
  }
  const std::size_t n = x.dim(0) / batch;
  const std::size_t t = n + 1;
  std::vector<float> out(batch * t * k);
  const auto xv = x.data();
  const auto tv = token.data();
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy(tv.begin(), tv.end(), out.begin() + b * t * k);
    std::copy(xv.begin() + b * n * k, xv.begin() + (b + 1) * n * k, out.begin() + (b * t + 1) * k);
  }
  return make_result({batch * t, k}, std::move(out), {x, token}, [=](Node& self) {
    const auto& g = self.grad;
    if (self.wants_grad(0)) {
      auto& gx = self.input_grad(0);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < n * k; ++i) gx[b * n * k + i] += g[(b * t + 1) * k + i];
    }
    if (self.wants_grad(1)) {
      auto& gt = self.input_grad(1);
      for (std::size_t j = 0; j < k; ++j) {
        double acc = 0.0;
        for (std::size_t b = 0; b < batch; ++b) acc += g[b * t * k + j];
        gt[j] += static_cast<float>(acc);
      }
    }
  });
}

Tensor select_position(const Tensor& x, std::size_t seq_len, std::size_t index) {
  require_rank(x, 2, "select_position");
  if (seq_len == 0 || x.dim(0) % seq_len != 0 || index >= seq_len) {
    throw DimensionError("select_position: bad sequence length or index");
  }
  const std::size_t batch = x.dim(0) / seq_len, k = x.dim(1);
  std::vector<float> out(batch * k);
  const auto v = x.data();
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy_n(v.begin() + (b * seq_len + index) * k, k, out.begin() + b * k);
  }
  return make_result({batch, k}, std::move(out), {x}, [=](Node& self) {
    auto& gi = self.input_grad(0);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < k; ++j) gi[(b * seq_len + index) * k + j] += self.grad[b * k + j];
  });
}

Tensor split_heads(const Tensor& x, std::size_t batch, std::size_t heads) {
  require_rank(x, 2, "split_heads");
  const std::size_t width = x.dim(1);
  if (batch == 0 || heads == 0 || x.dim(0) % batch != 0 || width % heads != 0) {
    throw DimensionError("split_heads: " + to_string(x.shape()) + " not divisible");
  }
  const std::size_t t = x.dim(0) / batch, d = width / heads;
  std::vector<float> out(x.numel());
  const auto v = x.data();
  // out[(b*h + i), s, :] = x[b*t + s, i*d : (i+1)*d]
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < heads; ++i)
      for (std::size_t s = 0; s < t; ++s)
        std::copy_n(v.begin() + (b * t + s) * width + i * d, d,
                    out.begin() + ((b * heads + i) * t + s) * d);
  return make_result({batch * heads, t, d}, std::move(out), {x}, [=](Node& self) {
    auto& gi = self.input_grad(0);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < heads; ++i)
        for (std::size_t s = 0; s < t; ++s) {
          const float* src = self.grad.data() + ((b * heads + i) * t + s) * d;
          float* dst = gi.data() + (b * t + s) * width + i * d;
          for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
  });
}

Tensor merge_heads(const Tensor& x, std::size_t batch, std::size_t heads) {
  require_rank(x, 3, "merge_heads");
  if (batch == 0 || heads == 0 || x.dim(0) != batch * heads) {
    throw DimensionError("merge_heads: " + to_string(x.shape()) + " not batch*heads");
  }
  const std::size_t t = x.dim(1), d = x.dim(2), width = heads * d;
  std::vector<float> out(x.numel());
  const auto v = x.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < heads; ++i)
      for (std::size_t s = 0; s < t; ++s)
        std::copy_n(v.begin() + ((b * heads + i) * t + s) * d, d,
                    out.begin() + (b * t + s) * width + i * d);
  return make_result({batch * t, width}, std::move(out), {x}, [=](Node& self) {
    auto& gi = self.input_grad(0);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < heads; ++i)
        for (std::size_t s = 0; s < t; ++s) {
          const float* src = self.grad.data() + (b * t + s) * width + i * d;
          float* dst = gi.data() + ((b * heads + i) * t + s) * d;
          for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
  });
}

}  // namespace amc::ad
