// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "amc/signals/record.hpp"

namespace amc::signals {

struct ModulationOptions {
  double rolloff = 0.35;
  /// RRC half-length in symbols.
  std::size_t filter_span = 6;
  /// Hold each symbol for samples_per_symbol samples instead of RRC shaping.
  bool rectangular = false;
  /// Constellation indices to use instead of random symbols; repeated
  /// cyclically when shorter than needed.
  std::optional<std::vector<std::size_t>> symbols;
};

/// Constellation points of a linear scheme (BPSK {+1, -1}, QPSK, 8PSK,
/// square QAM16/QAM64, PAM4), before power normalisation.
std::vector<std::pair<double, double>> constellation(Scheme s);

/// Synthesises 128 complex baseband samples with unit average power.
/// Linear schemes use random symbols shaped by a root-raised-cosine filter;
/// CPFSK and GFSK are binary continuous-phase FSK with modulation index 0.5;
/// the analog schemes are driven by a random three-tone audio mixture.
/// Requires samples_per_symbol * symbol_count >= 128.
Iq modulate(Scheme scheme, std::size_t symbol_count, std::size_t samples_per_symbol,
            std::uint64_t seed, const ModulationOptions& options = {});

/// Root-raised-cosine taps spanning +-span symbols, unit energy.
std::vector<double> rrc_taps(double rolloff, std::size_t samples_per_symbol, std::size_t span);

}  // namespace amc::signals
