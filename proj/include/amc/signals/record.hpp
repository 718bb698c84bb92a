// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace amc::signals {

inline constexpr std::size_t kIqLength = 128;
inline constexpr std::size_t kIqSize = 2 * kIqLength;

/// Row 0 (in-phase) occupies [0, 128), row 1 (quadrature) [128, 256).
using Iq = std::array<float, kIqSize>;

struct SignalRecord {
  Iq iq{};
  std::uint16_t label = 0;
  std::int16_t snr_db = 0;
};

/// Mean of I^2 + Q^2 over the 128 samples.
double average_power(const Iq& iq);
/// Sum of squares over all 256 entries.
double squared_norm(const Iq& iq);
void scale(Iq& iq, double factor);

/// The modulation schemes, in alphabetical order of their canonical names
/// so that the enum value equals the label in an 11-class container.
enum class Scheme : std::uint8_t {
  kPsk8,
  kAmDsb,
  kAmSsb,
  kBpsk,
  kCpfsk,
  kGfsk,
  kPam4,
  kQam16,
  kQam64,
  kQpsk,
  kWbfm,
};

inline constexpr std::size_t kSchemeCount = 11;

std::string_view scheme_name(Scheme s);
/// Accepts the canonical names ("8PSK", "AM-DSB", ...); throws ConfigError.
Scheme parse_scheme(std::string_view name);
std::vector<Scheme> all_schemes();
/// The eight digitally keyed schemes.
std::vector<Scheme> digital_schemes();
bool is_linear(Scheme s);

}  // namespace amc::signals
