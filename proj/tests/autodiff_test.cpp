// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "amc/autodiff/ops.hpp"
#include "amc/error.hpp"
#include "support/gradcheck.hpp"

using namespace amc;
using amc::ad::Tensor;
using amc::testing::check_gradients;
using amc::testing::uniform;
using amc::testing::Values;

namespace {

// Reduces an op output to a scalar with fixed random weights so every output
// element contributes a distinct amount to the gradient.
Tensor weighted_sum(const Tensor& t, const std::vector<float>& w) {
  return ad::sum(ad::mul(t, Tensor::from(t.shape(), w)));
}

double dot(const std::vector<double>& a, const std::vector<float>& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * w[i];
  return acc;
}

// Double-precision references, written without the engine.
std::vector<double> ref_matmul(const std::vector<double>& a, const std::vector<double>& b,
                               std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

std::vector<double> ref_softmax_rows(const std::vector<double>& x, std::size_t n) {
  std::vector<double> y(x.size());
  for (std::size_t r = 0; r < x.size() / n; ++r) {
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(x[r * n + j]);
    for (std::size_t j = 0; j < n; ++j) y[r * n + j] = std::exp(x[r * n + j]) / total;
  }
  return y;
}

std::vector<double> ref_layer_norm(const std::vector<double>& x, const std::vector<double>& g,
                                   const std::vector<double>& b, std::size_t n) {
  std::vector<double> y(x.size());
  for (std::size_t r = 0; r < x.size() / n; ++r) {
    double mu = 0.0, var = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x[r * n + j] / n;
    for (std::size_t j = 0; j < n; ++j) var += (x[r * n + j] - mu) * (x[r * n + j] - mu) / n;
    for (std::size_t j = 0; j < n; ++j)
      y[r * n + j] = (x[r * n + j] - mu) / std::sqrt(var + 1e-5) * g[j] + b[j];
  }
  return y;
}

class AutodiffTest : public ::testing::Test {
 protected:
  std::mt19937 rng{1234};
};

// matmul ---------------------------------------------------------------------

TEST_F(AutodiffTest, MatmulIdentityReturnsOperand) {
  auto b_vals = uniform(9, rng);
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor b = Tensor::from({3, 3}, b_vals);
  Tensor c = ad::matmul(eye, b);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(c.at(i), b_vals[i]);
}

TEST_F(AutodiffTest, MatmulByZerosGivesZeroOutputAndZeroGrad) {
  Tensor a = Tensor::from({2, 3}, uniform(6, rng), true);
  Tensor z = Tensor::zeros({3, 4});
  Tensor c = ad::matmul(a, z);
  for (float v : c.data()) EXPECT_EQ(v, 0.0f);
  ad::sum(c).backward();
  for (float g : a.grad()) EXPECT_EQ(g, 0.0f);
}

TEST_F(AutodiffTest, MatmulShapeMismatchThrows) {
  EXPECT_THROW(ad::matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), DimensionError);
}

TEST_F(AutodiffTest, MatmulGradientMatchesFiniteDifferences) {
  const auto w = uniform(12, rng);
  check_gradients({{{4, 5}, uniform(20, rng)}, {{5, 3}, uniform(15, rng)}},
                  [&](const auto& in) { return weighted_sum(ad::matmul(in[0], in[1]), w); },
                  [&](const Values& v) { return dot(ref_matmul(v[0], v[1], 4, 5, 3), w); });
}

TEST_F(AutodiffTest, BmmGradientMatchesFiniteDifferences) {
  for (bool transpose : {false, true}) {
    const auto w = uniform(2 * 3 * 4, rng);
    check_gradients(
        {{{2, 3, 5}, uniform(30, rng)}, {transpose ? ad::Shape{2, 4, 5} : ad::Shape{2, 5, 4},
                                          uniform(40, rng)}},
        [&](const auto& in) { return weighted_sum(ad::bmm(in[0], in[1], transpose), w); },
        [&](const Values& v) {
          double acc = 0.0;
          for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t i = 0; i < 3; ++i)
              for (std::size_t j = 0; j < 4; ++j) {
                double c = 0.0;
                for (std::size_t p = 0; p < 5; ++p) {
                  const double bv = transpose ? v[1][b * 20 + j * 5 + p] : v[1][b * 20 + p * 4 + j];
                  c += v[0][b * 15 + i * 5 + p] * bv;
                }
                acc += c * w[b * 12 + i * 4 + j];
              }
          return acc;
        });
  }
}

// softmax --------------------------------------------------------------------

TEST_F(AutodiffTest, SoftmaxOfEqualLogitsIsUniform) {
  Tensor y = ad::softmax(Tensor::from({2}, {0.0f, 0.0f}), 0);
  EXPECT_FLOAT_EQ(y.at(0), 0.5f);
  EXPECT_FLOAT_EQ(y.at(1), 0.5f);
}

TEST_F(AutodiffTest, SoftmaxOfLogTwoGivesTwoThirds) {
  Tensor y = ad::softmax(Tensor::from({2}, {std::log(2.0f), 0.0f}), 0);
  EXPECT_NEAR(y.at(0), 2.0 / 3.0, 1e-7);
  EXPECT_NEAR(y.at(1), 1.0 / 3.0, 1e-7);
}

TEST_F(AutodiffTest, SoftmaxRowsSumToOneForLargeInputs) {
  std::uniform_real_distribution<float> big(-1e4f, 1e4f);
  std::vector<float> v(6 * 7);
  for (auto& x : v) x = big(rng);
  Tensor y = ad::softmax(Tensor::from({6, 7}, v), 1);
  for (std::size_t r = 0; r < 6; ++r) {
    double total = 0.0;
    for (std::size_t j = 0; j < 7; ++j) {
      EXPECT_GE(y.at(r * 7 + j), 0.0f);
      total += y.at(r * 7 + j);
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST_F(AutodiffTest, SoftmaxInvalidAxisThrows) {
  EXPECT_THROW(ad::softmax(Tensor::zeros({2, 2}), 2), DimensionError);
}

TEST_F(AutodiffTest, SoftmaxGradientMatchesFiniteDifferences) {
  const auto w = uniform(5, rng);
  const auto x = uniform(5, rng);
  Tensor y = ad::softmax(Tensor::from({5}, x), 0);
  EXPECT_NEAR(std::accumulate(y.data().begin(), y.data().end(), 0.0), 1.0, 1e-6);
  check_gradients({{{5}, x}}, [&](const auto& in) { return weighted_sum(ad::softmax(in[0], 0), w); },
                  [&](const Values& v) { return dot(ref_softmax_rows(v[0], 5), w); });
}

TEST_F(AutodiffTest, SoftmaxOverLeadingAxisGradient) {
  // Columns of a [3,4] tensor are normalised when axis = 0.
  const auto w = uniform(12, rng);
  check_gradients({{{3, 4}, uniform(12, rng)}},
                  [&](const auto& in) { return weighted_sum(ad::softmax(in[0], 0), w); },
                  [&](const Values& v) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < 4; ++c) {
                      double total = 0.0;
                      for (std::size_t r = 0; r < 3; ++r) total += std::exp(v[0][r * 4 + c]);
                      for (std::size_t r = 0; r < 3; ++r)
                        acc += std::exp(v[0][r * 4 + c]) / total * w[r * 4 + c];
                    }
                    return acc;
                  });
}

// layer norm -----------------------------------------------------------------

TEST_F(AutodiffTest, LayerNormOfConstantRowIsZero) {
  Tensor y = ad::layer_norm(Tensor::full({1, 6}, 3.5f), Tensor::full({6}, 1.0f),
                            Tensor::zeros({6}));
  for (float v : y.data()) EXPECT_EQ(v, 0.0f);
}

TEST_F(AutodiffTest, LayerNormKeepsUnitVarianceRow) {
  Tensor y = ad::layer_norm(Tensor::from({1, 2}, {1.0f, -1.0f}), Tensor::full({2}, 1.0f),
                            Tensor::zeros({2}));
  EXPECT_NEAR(y.at(0), 1.0, 1e-5);
  EXPECT_NEAR(y.at(1), -1.0, 1e-5);
}

TEST_F(AutodiffTest, LayerNormGainLengthMismatchThrows) {
  EXPECT_THROW(ad::layer_norm(Tensor::zeros({2, 3}), Tensor::zeros({2}), Tensor::zeros({3})),
               DimensionError);
}

TEST_F(AutodiffTest, LayerNormGradientMatchesFiniteDifferences) {
  const auto w = uniform(12, rng);
  check_gradients({{{3, 4}, uniform(12, rng)}, {{4}, uniform(4, rng)}, {{4}, uniform(4, rng)}},
                  [&](const auto& in) { return weighted_sum(ad::layer_norm(in[0], in[1], in[2]), w); },
                  [&](const Values& v) { return dot(ref_layer_norm(v[0], v[1], v[2], 4), w); });
}

// elementwise / shape ops ----------------------------------------------------

TEST_F(AutodiffTest, ElementwiseGradientsMatchFiniteDifferences) {
  const auto w = uniform(6, rng);
  check_gradients(
      {{{2, 3}, uniform(6, rng)}, {{2, 3}, uniform(6, rng)}, {{3}, uniform(3, rng)}},
      [&](const auto& in) {
        Tensor t = ad::add_bias(ad::sub(ad::mul(in[0], in[1]), ad::scale(in[0], 0.7f)), in[2]);
        return weighted_sum(ad::add(t, ad::gelu(in[1])), w);
      },
      [&](const Values& v) {
        double acc = 0.0;
        for (std::size_t i = 0; i < 6; ++i) {
          const double x = v[0][i], y = v[1][i];
          const double gelu = 0.5 * y * (1.0 + std::erf(y / std::sqrt(2.0)));
          acc += (x * y - 0.7 * x + v[2][i % 3] + gelu) * w[i];
        }
        return acc;
      });
}

TEST_F(AutodiffTest, ReductionGradientsMatchFiniteDifferences) {
  const auto w = uniform(8, rng);
  check_gradients({{{2, 4, 3}, uniform(24, rng)}},
                  [&](const auto& in) {
                    Tensor s = ad::sum_axis(in[0], 2);  // [2,4]
                    Tensor n = ad::row_norms(s);        // [2]
                    return ad::add(ad::reshape(weighted_sum(s, w), {1}),
                                   ad::scale(ad::mean(n), 3.0f));
                  },
                  [&](const Values& v) {
                    double acc = 0.0, norms = 0.0;
                    for (std::size_t r = 0; r < 2; ++r) {
                      double sq = 0.0;
                      for (std::size_t c = 0; c < 4; ++c) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < 3; ++j) s += v[0][(r * 4 + c) * 3 + j];
                        acc += s * w[r * 4 + c];
                        sq += s * s;
                      }
                      norms += std::sqrt(sq);
                    }
                    return acc + 3.0 * norms / 2.0;
                  });
}

TEST_F(AutodiffTest, RowNormOfZeroRowHasZeroGradient) {
  Tensor x = Tensor::zeros({1, 4}, true);
  ad::sum(ad::row_norms(x)).backward();
  for (float g : x.grad()) EXPECT_EQ(g, 0.0f);
}

TEST_F(AutodiffTest, TokenOpsGradientsMatchFiniteDifferences) {
  // Patches -> prepend token -> split/merge heads -> select position.
  const std::size_t batch = 2, len = 8, width = 4;
  const auto w = uniform(batch * 8, rng);
  check_gradients(
      {{{batch, 2, len}, uniform(batch * 2 * len, rng)}, {{8}, uniform(8, rng)}},
      [&](const auto& in) {
        Tensor p = ad::extract_patches(in[0], width, width);     // [4, 8]
        Tensor s = ad::prepend_token(p, in[1], batch);           // [6, 8]
        Tensor h = ad::split_heads(s, batch, 2);                 // [4, 3, 4]
        Tensor m = ad::merge_heads(ad::scale(h, 1.5f), batch, 2);  // [6, 8]
        Tensor q = ad::mul(m, m);
        return weighted_sum(ad::select_position(q, 3, 1), w);
      },
      [&](const Values& v) {
        // Position 1 of each sequence is the first patch: x[b, r, 0:4].
        double acc = 0.0;
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t r = 0; r < 2; ++r)
            for (std::size_t c = 0; c < width; ++c) {
              const double x = 1.5 * v[0][(b * 2 + r) * len + c];
              acc += x * x * w[b * 8 + r * width + c];
            }
        return acc;
      });
}

TEST_F(AutodiffTest, ExtractPatchesRejectsUntiledLength) {
  EXPECT_THROW(ad::extract_patches(Tensor::zeros({1, 2, 10}), 4, 4), DimensionError);
}

// losses ---------------------------------------------------------------------

TEST_F(AutodiffTest, CrossEntropyOfUniformLogitsIsLogK) {
  Tensor loss = ad::cross_entropy(Tensor::zeros({11}), 3);
  EXPECT_NEAR(loss.item(), std::log(11.0), 1e-6);
  EXPECT_NEAR(loss.item(), 2.3979, 1e-4);
}

TEST_F(AutodiffTest, CrossEntropySaturatesForConfidentCorrectLogits) {
  std::vector<float> logits(11, 0.0f);
  logits[4] = 40.0f;
  EXPECT_NEAR(ad::cross_entropy(Tensor::from({11}, logits), 4).item(), 0.0, 1e-12);
}

TEST_F(AutodiffTest, CrossEntropyMatchesExplicitSoftmaxThenLog) {
  const auto logits = uniform(7, rng);
  const auto probs = ref_softmax_rows({logits.begin(), logits.end()}, 7);
  EXPECT_NEAR(ad::cross_entropy(Tensor::from({7}, logits), 2).item(), -std::log(probs[2]), 1e-6);
  EXPECT_GT(ad::cross_entropy(Tensor::from({7}, logits), 2).item(), 0.0f);
}

TEST_F(AutodiffTest, CrossEntropyRejectsOutOfRangeLabel) {
  EXPECT_THROW(ad::cross_entropy(Tensor::zeros({5}), 5), IndexError);
  EXPECT_THROW(ad::cross_entropy(Tensor::zeros({5}), -1), IndexError);
}

TEST_F(AutodiffTest, CrossEntropyGradientMatchesFiniteDifferences) {
  const std::vector<int> labels{1, 0, 4};
  check_gradients({{{3, 5}, uniform(15, rng)}},
                  [&](const auto& in) { return ad::cross_entropy(in[0], labels); },
                  [&](const Values& v) {
                    const auto p = ref_softmax_rows(v[0], 5);
                    double acc = 0.0;
                    for (std::size_t r = 0; r < 3; ++r) acc -= std::log(p[r * 5 + labels[r]]);
                    return acc / 3.0;
                  });
}

TEST_F(AutodiffTest, KlOfIdenticalDistributionsIsZero) {
  Tensor p = Tensor::from({3}, {0.2f, 0.3f, 0.5f});
  EXPECT_NEAR(ad::kl_divergence(p, p).item(), 0.0, 1e-7);
}

TEST_F(AutodiffTest, KlHandComputedValue) {
  // 0.5 ln(0.5/0.9) + 0.5 ln(0.5/0.1)
  const double expected = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  EXPECT_NEAR(expected, 0.5108, 1e-4);
  Tensor kl = ad::kl_divergence(Tensor::from({2}, {0.5f, 0.5f}), Tensor::from({2}, {0.9f, 0.1f}));
  EXPECT_NEAR(kl.item(), expected, 1e-6);
}

TEST_F(AutodiffTest, KlIsNonNegativeForRandomPairs) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor p = ad::softmax(Tensor::from({6}, uniform(6, rng, -3, 3)), 0);
    Tensor q = ad::softmax(Tensor::from({6}, uniform(6, rng, -3, 3)), 0);
    EXPECT_GE(ad::kl_divergence(p, q).item(), 0.0f);
  }
}

TEST_F(AutodiffTest, KlZeroProbabilityConvention) {
  Tensor kl = ad::kl_divergence(Tensor::from({2}, {0.0f, 1.0f}), Tensor::from({2}, {0.5f, 0.5f}));
  EXPECT_NEAR(kl.item(), std::log(2.0), 1e-6);
}

TEST_F(AutodiffTest, KlRejectsUnnormalisedInput) {
  EXPECT_THROW(ad::kl_divergence(Tensor::from({2}, {0.5f, 0.6f}), Tensor::from({2}, {0.5f, 0.5f})),
               ContractError);
  EXPECT_THROW(ad::kl_divergence(Tensor::from({2}, {1.5f, -0.5f}), Tensor::from({2}, {0.5f, 0.5f})),
               ContractError);
}

TEST_F(AutodiffTest, KlGradientThroughSoftmaxMatchesFiniteDifferences) {
  check_gradients({{{2, 4}, uniform(8, rng)}, {{2, 4}, uniform(8, rng)}},
                  [&](const auto& in) {
                    return ad::kl_divergence(ad::softmax(in[0], 1), ad::softmax(in[1], 1));
                  },
                  [&](const Values& v) {
                    const auto p = ref_softmax_rows(v[0], 4);
                    const auto q = ref_softmax_rows(v[1], 4);
                    double acc = 0.0;
                    for (std::size_t i = 0; i < 8; ++i) acc += p[i] * std::log(p[i] / q[i]);
                    return acc / 2.0;
                  });
}

// backward semantics -----------------------------------------------------------

TEST_F(AutodiffTest, SumGradientIsAllOnes) {
  Tensor x = Tensor::from({2, 3}, uniform(6, rng), true);
  ad::sum(x).backward();
  for (float g : x.grad()) EXPECT_EQ(g, 1.0f);
}

TEST_F(AutodiffTest, DotWithSelfGradientIsTwiceInput) {
  const auto v = uniform(5, rng);
  Tensor x = Tensor::from({5}, v, true);
  ad::sum(ad::mul(x, x)).backward();
  for (std::size_t i = 0; i < 5; ++i) EXPECT_FLOAT_EQ(x.grad()[i], 2.0f * v[i]);
}

TEST_F(AutodiffTest, RepeatedBackwardAccumulatesLeafGradients) {
  Tensor x = Tensor::from({3}, {1.0f, 2.0f, 3.0f}, true);
  Tensor loss = ad::sum(ad::scale(x, 2.0f));
  loss.backward();
  loss.backward();
  for (float g : x.grad()) EXPECT_EQ(g, 4.0f);
  x.zero_grad();
  EXPECT_FALSE(x.has_grad());
}

TEST_F(AutodiffTest, BackwardFromNonScalarThrows) {
  Tensor x = Tensor::from({3}, {1.0f, 2.0f, 3.0f}, true);
  EXPECT_THROW(ad::scale(x, 2.0f).backward(), ContractError);
}

TEST_F(AutodiffTest, NoGradGuardSkipsRecording) {
  Tensor x = Tensor::from({3}, {1.0f, 2.0f, 3.0f}, true);
  ad::NoGradGuard guard;
  Tensor y = ad::sum(x);
  EXPECT_FALSE(y.requires_grad());
}

TEST_F(AutodiffTest, FrozenParametersReceiveNoGradient) {
  Tensor w = Tensor::parameter({2, 2}, {1, 2, 3, 4});
  Tensor x = Tensor::from({1, 2}, {0.5f, -1.0f}, true);
  {
    ad::FreezeParameters freeze;
    ad::sum(ad::matmul(x, w)).backward();
  }
  EXPECT_FALSE(w.has_grad());
  ASSERT_TRUE(x.has_grad());
  EXPECT_FLOAT_EQ(x.grad()[0], 3.0f);
  EXPECT_FLOAT_EQ(x.grad()[1], 7.0f);
}

TEST_F(AutodiffTest, ComposedMlpGradientMatchesFiniteDifferences) {
  // x[3,4] -> LN -> W1[4,6]+b1 -> GELU -> W2[6,3] -> CE
  const std::vector<int> labels{2, 0, 1};
  check_gradients(
      {{{3, 4}, uniform(12, rng)},
       {{4, 6}, uniform(24, rng, -1, 1)},
       {{6}, uniform(6, rng, -0.5, 0.5)},
       {{6, 3}, uniform(18, rng, -1, 1)}},
      [&](const auto& in) {
        Tensor h = ad::layer_norm(in[0], Tensor::full({4}, 1.0f), Tensor::zeros({4}));
        h = ad::gelu(ad::add_bias(ad::matmul(h, in[1]), in[2]));
        return ad::cross_entropy(ad::matmul(h, in[3]), labels);
      },
      [&](const Values& v) {
        const auto ln = ref_layer_norm(v[0], {1, 1, 1, 1}, {0, 0, 0, 0}, 4);
        auto h = ref_matmul(ln, v[1], 3, 4, 6);
        for (std::size_t i = 0; i < h.size(); ++i) {
          const double z = h[i] + v[2][i % 6];
          h[i] = 0.5 * z * (1.0 + std::erf(z / std::sqrt(2.0)));
        }
        const auto p = ref_softmax_rows(ref_matmul(h, v[3], 3, 6, 3), 3);
        double acc = 0.0;
        for (std::size_t r = 0; r < 3; ++r) acc -= std::log(p[r * 3 + labels[r]]);
        return acc / 3.0;
      });
}

TEST_F(AutodiffTest, ForwardIsBitDeterministic) {
  const auto a = uniform(20, rng), b = uniform(15, rng);
  auto run = [&] {
    Tensor y = ad::softmax(ad::matmul(Tensor::from({4, 5}, a), Tensor::from({5, 3}, b)), 1);
    return std::vector<float>(y.data().begin(), y.data().end());
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
