// SPDX-License-Identifier: Apache-2.0
#include "amc/signals/record.hpp"

#include <array>

#include "amc/error.hpp"

namespace amc::signals {

namespace {
constexpr std::array<std::string_view, kSchemeCount> kNames = {
    "8PSK", "AM-DSB", "AM-SSB", "BPSK", "CPFSK", "GFSK", "PAM4", "QAM16", "QAM64", "QPSK", "WBFM"};
}  // namespace

double average_power(const Iq& iq) { return squared_norm(iq) / double(kIqLength); }

double squared_norm(const Iq& iq) {
  double total = 0.0;
  for (float v : iq) total += double(v) * v;
  return total;
}

void scale(Iq& iq, double factor) {
  for (float& v : iq) v = static_cast<float>(v * factor);
}

std::string_view scheme_name(Scheme s) { return kNames.at(static_cast<std::size_t>(s)); }

Scheme parse_scheme(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<Scheme>(i);
  }
  throw ConfigError("unknown modulation scheme '" + std::string(name) + "'");
}

std::vector<Scheme> all_schemes() {
  std::vector<Scheme> out;
  for (std::size_t i = 0; i < kSchemeCount; ++i) out.push_back(static_cast<Scheme>(i));
  return out;
}

std::vector<Scheme> digital_schemes() {
  return {Scheme::kPsk8, Scheme::kBpsk,  Scheme::kCpfsk, Scheme::kGfsk,
          Scheme::kPam4, Scheme::kQam16, Scheme::kQam64, Scheme::kQpsk};
}

bool is_linear(Scheme s) {
  switch (s) {
    case Scheme::kPsk8:
    case Scheme::kBpsk:
    case Scheme::kPam4:
    case Scheme::kQam16:
    case Scheme::kQam64:
    case Scheme::kQpsk:
      return true;
    default:
      return false;
  }
}

}  // namespace amc::signals
