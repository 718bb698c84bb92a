// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <string>

#include "amc/signals/record.hpp"

namespace amc::signals {

enum class ChannelKind { kAwgn, kRayleigh, kRician };

std::string channel_name(ChannelKind k);
/// "awgn", "rayleigh" or "rician"; throws ConfigError otherwise.
ChannelKind parse_channel(const std::string& name);

struct AlphaStableNoise {
  double alpha = 1.5;
  /// Scale the generated block so its sample power equals the Gaussian noise
  /// power of the record.
  bool power_match = true;
};

struct ChannelConfig {
  ChannelKind kind = ChannelKind::kAwgn;
  double snr_db = 10.0;
  double rician_k = 4.0;
  std::optional<AlphaStableNoise> alpha_stable;

  /// Throws ConfigError on an invalid K-factor or stability index.
  void validate() const;
};

/// Complex block-fading gain for one record: 1 for AWGN, unit-power
/// circular Gaussian for Rayleigh, and a K-factor mix of a random-phase
/// line-of-sight term and Rayleigh scatter for Rician.
std::complex<double> fading_gain(const ChannelConfig& cfg, std::uint64_t seed);

/// Applies fading then additive noise. Gaussian noise variance is set from
/// the faded signal's sample power and snr_db; optional symmetric
/// alpha-stable noise (Chambers-Mallows-Stuck) is added on top.
Iq apply_channel(const Iq& iq, const ChannelConfig& cfg, std::uint64_t seed);

/// Draws n symmetric alpha-stable variates with unit scale.
std::vector<double> symmetric_alpha_stable(std::size_t n, double alpha, std::uint64_t seed);

/// Impulsive-noise mitigation: sigma is the standard deviation of the
/// 5-sample moving-median-filtered record (I and Q filtered separately,
/// window shrunk at the edges, one sigma over both rows); raw samples are
/// clipped to [-sigma, sigma] and the record is renormalised to unit power.
/// An all-zero record is returned unchanged.
Iq preprocess_impulsive(const Iq& iq);

/// 5-sample moving median of one 128-sample row, shrinking at the edges.
std::array<float, kIqLength> moving_median5(const float* row);

}  // namespace amc::signals
