// SPDX-License-Identifier: Apache-2.0
#include "amc/signals/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "amc/error.hpp"

namespace amc::signals {

namespace {
constexpr double kPi = std::numbers::pi;
}  // namespace

std::string channel_name(ChannelKind k) {
  switch (k) {
    case ChannelKind::kAwgn:
      return "awgn";
    case ChannelKind::kRayleigh:
      return "rayleigh";
    case ChannelKind::kRician:
      return "rician";
  }
  return "?";
}

ChannelKind parse_channel(const std::string& name) {
  if (name == "awgn") return ChannelKind::kAwgn;
  if (name == "rayleigh") return ChannelKind::kRayleigh;
  if (name == "rician") return ChannelKind::kRician;
  throw ConfigError("unknown channel '" + name + "' (expected awgn, rayleigh or rician)");
}

void ChannelConfig::validate() const {
  if (!std::isfinite(snr_db)) throw ConfigError("channel snr_db must be finite");
  if (kind == ChannelKind::kRician && !(rician_k > 0.0)) {
    throw ConfigError("rician K-factor must be positive");
  }
  if (alpha_stable && !(alpha_stable->alpha > 1.0 && alpha_stable->alpha < 2.0)) {
    throw ConfigError("alpha-stable index must lie in (1, 2)");
  }
}

std::complex<double> fading_gain(const ChannelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  switch (cfg.kind) {
    case ChannelKind::kAwgn:
      return 1.0;
    case ChannelKind::kRayleigh: {
      const double re = normal(rng), im = normal(rng);
      return {re / std::sqrt(2.0), im / std::sqrt(2.0)};
    }
    case ChannelKind::kRician: {
      const double k = cfg.rician_k;
      const double theta = std::uniform_real_distribution<double>(0.0, 2.0 * kPi)(rng);
      const double re = normal(rng), im = normal(rng);
      const std::complex<double> scatter(re / std::sqrt(2.0), im / std::sqrt(2.0));
      return std::sqrt(k / (k + 1.0)) * std::polar(1.0, theta) + std::sqrt(1.0 / (k + 1.0)) * scatter;
    }
  }
  return 1.0;
}

std::vector<double> symmetric_alpha_stable(std::size_t n, double alpha, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(-kPi / 2, kPi / 2);
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> out(n);
  for (auto& x : out) {
    // Chambers-Mallows-Stuck with skewness 0.
    const double v = angle(rng);
    double w = expo(rng);
    while (w == 0.0) w = expo(rng);
    x = std::sin(alpha * v) / std::pow(std::cos(v), 1.0 / alpha) *
        std::pow(std::cos(v - alpha * v) / w, (1.0 - alpha) / alpha);
  }
  return out;
}

Iq apply_channel(const Iq& iq, const ChannelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::seed_seq seq{seed, seed >> 32, std::uint64_t{0x6368616e}};
  std::mt19937_64 rng(seq);
  const std::complex<double> g = fading_gain(cfg, rng());

  std::array<std::complex<double>, kIqLength> y;
  double signal_power = 0.0;
  for (std::size_t n = 0; n < kIqLength; ++n) {
    y[n] = g * std::complex<double>(iq[n], iq[kIqLength + n]);
    signal_power += std::norm(y[n]);
  }
  signal_power /= double(kIqLength);

  const double noise_power = signal_power / std::pow(10.0, cfg.snr_db / 10.0);
  const double sigma = std::sqrt(noise_power / 2.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::array<std::complex<double>, kIqLength> noise;
  double gaussian_power = 0.0;
  for (auto& v : noise) {
    const double re = normal(rng), im = normal(rng);
    v = {sigma * re, sigma * im};
    gaussian_power += std::norm(v);
  }
  gaussian_power /= double(kIqLength);

  if (cfg.alpha_stable) {
    const auto s = symmetric_alpha_stable(kIqSize, cfg.alpha_stable->alpha, rng());
    double power = 0.0;
    for (double v : s) power += v * v;
    power /= double(kIqLength);
    double factor = sigma / std::sqrt(2.0);
    if (cfg.alpha_stable->power_match) factor = power > 0.0 ? std::sqrt(gaussian_power / power) : 0.0;
    for (std::size_t n = 0; n < kIqLength; ++n) {
      noise[n] += std::complex<double>(factor * s[n], factor * s[kIqLength + n]);
    }
  }

  Iq out{};
  for (std::size_t n = 0; n < kIqLength; ++n) {
    const auto v = y[n] + noise[n];
    out[n] = static_cast<float>(v.real());
    out[kIqLength + n] = static_cast<float>(v.imag());
  }
  return out;
}

std::array<float, kIqLength> moving_median5(const float* row) {
  std::array<float, kIqLength> out{};
  for (std::size_t i = 0; i < kIqLength; ++i) {
    const std::size_t lo = i >= 2 ? i - 2 : 0;
    const std::size_t hi = std::min(kIqLength, i + 3);
    std::array<float, 5> w{};
    const std::size_t n = hi - lo;
    std::copy(row + lo, row + hi, w.begin());
    std::sort(w.begin(), w.begin() + n);
    // Even windows (edges) take the mean of the two middle values.
    out[i] = n % 2 ? w[n / 2] : 0.5f * (w[n / 2 - 1] + w[n / 2]);
  }
  return out;
}

Iq preprocess_impulsive(const Iq& iq) {
  if (std::all_of(iq.begin(), iq.end(), [](float v) { return v == 0.0f; })) return iq;
  const auto med_i = moving_median5(iq.data());
  const auto med_q = moving_median5(iq.data() + kIqLength);
  double mean = 0.0;
  for (std::size_t n = 0; n < kIqLength; ++n) mean += double(med_i[n]) + med_q[n];
  mean /= double(kIqSize);
  double var = 0.0;
  for (std::size_t n = 0; n < kIqLength; ++n) {
    var += (med_i[n] - mean) * (med_i[n] - mean) + (med_q[n] - mean) * (med_q[n] - mean);
  }
  const double sigma = std::sqrt(var / double(kIqSize));

  Iq out = iq;
  for (float& v : out) v = static_cast<float>(std::clamp(double(v), -sigma, sigma));
  const double power = average_power(out);
  if (power > 0.0) scale(out, 1.0 / std::sqrt(power));
  return out;
}

}  // namespace amc::signals
