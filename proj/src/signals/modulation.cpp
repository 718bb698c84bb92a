// SPDX-License-Identifier: Apache-2.0
#include "amc/signals/modulation.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "amc/error.hpp"

namespace amc::signals {

namespace {

using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;

// Modulation index of the continuous-phase schemes and GFSK bandwidth-time.
constexpr double kFskIndex = 0.5;
constexpr double kGaussianBt = 0.35;

std::vector<double> square_grid(int side) {
  std::vector<double> levels;
  for (int i = 0; i < side; ++i) levels.push_back(2.0 * i - (side - 1));
  return levels;
}

std::size_t pick(const ModulationOptions& opt, std::size_t index, std::size_t alphabet,
                 std::mt19937_64& rng) {
  if (opt.symbols) {
    if (opt.symbols->empty()) throw ContractError("modulate: empty symbol override");
    const std::size_t s = (*opt.symbols)[index % opt.symbols->size()];
    if (s >= alphabet) throw IndexError("modulate: symbol index out of constellation");
    return s;
  }
  return std::uniform_int_distribution<std::size_t>(0, alphabet - 1)(rng);
}

Iq to_iq(const std::vector<cd>& samples) {
  double power = 0.0;
  for (const cd& s : samples) power += std::norm(s);
  power /= double(samples.size());
  const double g = power > 0.0 ? 1.0 / std::sqrt(power) : 0.0;
  Iq iq{};
  for (std::size_t n = 0; n < kIqLength; ++n) {
    iq[n] = static_cast<float>(samples[n].real() * g);
    iq[kIqLength + n] = static_cast<float>(samples[n].imag() * g);
  }
  return iq;
}

std::vector<cd> linear(Scheme scheme, std::size_t sps, std::mt19937_64& rng,
                       const ModulationOptions& opt) {
  const auto points = constellation(scheme);
  if (opt.rectangular) {
    std::vector<cd> out(kIqLength);
    for (std::size_t n = 0; n < kIqLength; ++n) {
      if (n % sps == 0) {
        const auto& p = points[pick(opt, n / sps, points.size(), rng)];
        out[n] = {p.first, p.second};
      } else {
        out[n] = out[n - 1];
      }
    }
    return out;
  }
  // Guard symbols on both sides keep the filter transient outside the window.
  const std::size_t span = opt.filter_span;
  const std::size_t body = (kIqLength + sps - 1) / sps;
  const std::size_t total = body + 2 * span;
  std::vector<cd> symbols(total);
  for (std::size_t i = 0; i < total; ++i) {
    // Overrides apply from the first in-window symbol onward.
    const std::size_t index = (i + total - span) % total;
    const auto& p = points[pick(opt, index, points.size(), rng)];
    symbols[i] = {p.first, p.second};
  }
  const auto taps = rrc_taps(opt.rolloff, sps, span);
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(span * sps);
  std::vector<cd> out(kIqLength);
  for (std::size_t n = 0; n < kIqLength; ++n) {
    const std::ptrdiff_t centre = static_cast<std::ptrdiff_t>(n + span * sps);
    cd acc = 0.0;
    for (std::size_t i = 0; i < total; ++i) {
      const std::ptrdiff_t offset = centre - static_cast<std::ptrdiff_t>(i * sps);
      if (offset < -half || offset > half) continue;
      acc += symbols[i] * taps[static_cast<std::size_t>(offset + half)];
    }
    out[n] = acc;
  }
  return out;
}

double gaussian_q(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

// Frequency pulse spread over `length` symbols, summing to one.
std::vector<double> frequency_pulse(Scheme scheme, std::size_t sps, std::size_t& length) {
  if (scheme == Scheme::kCpfsk) {
    length = 1;
    return std::vector<double>(sps, 1.0 / double(sps));
  }
  length = 3;
  std::vector<double> g(length * sps);
  const double k = 2.0 * kPi * kGaussianBt / std::sqrt(std::log(2.0));
  double total = 0.0;
  for (std::size_t n = 0; n < g.size(); ++n) {
    const double t = (double(n) + 0.5) / double(sps) - 0.5 * double(length);
    g[n] = gaussian_q(k * (t - 0.5)) - gaussian_q(k * (t + 0.5));
    total += g[n];
  }
  for (double& v : g) v /= total;
  return g;
}

std::vector<cd> continuous_phase(Scheme scheme, std::size_t sps, std::mt19937_64& rng,
                                 const ModulationOptions& opt) {
  std::size_t length = 0;
  const auto pulse = frequency_pulse(scheme, sps, length);
  const std::size_t lead = length;  // symbols before the window
  const std::size_t total = (kIqLength + sps - 1) / sps + 2 * lead;
  std::vector<double> bits(total);
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t index = (i + total - lead) % total;
    bits[i] = pick(opt, index, 2, rng) == 0 ? 1.0 : -1.0;
  }
  const std::size_t samples = total * sps;
  std::vector<double> freq(samples, 0.0);
  for (std::size_t i = 0; i < total; ++i)
    for (std::size_t j = 0; j < pulse.size() && i * sps + j < samples; ++j)
      freq[i * sps + j] += bits[i] * pulse[j];
  std::vector<cd> out(kIqLength);
  double phase = 0.0;
  for (std::size_t n = 0; n < lead * sps + kIqLength; ++n) {
    phase += kPi * kFskIndex * freq[n];
    if (n >= lead * sps) out[n - lead * sps] = std::polar(1.0, phase);
  }
  return out;
}

std::vector<cd> analog(Scheme scheme, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> freq(0.005, 0.04), amp(0.3, 1.0), ph(0.0, 2.0 * kPi);
  struct Tone {
    double f, a, p;
  };
  std::vector<Tone> tones(3);
  for (auto& t : tones) t = {freq(rng), amp(rng), ph(rng)};
  auto message = [&](double n) {
    double m = 0.0;
    for (const auto& t : tones) m += t.a * std::cos(2.0 * kPi * t.f * n + t.p);
    return m;
  };
  double peak = 0.0;
  for (const auto& t : tones) peak += t.a;

  std::vector<cd> out(kIqLength);
  switch (scheme) {
    case Scheme::kAmDsb:
      for (std::size_t n = 0; n < kIqLength; ++n) out[n] = {1.0 + 0.5 * message(double(n)) / peak, 0.0};
      break;
    case Scheme::kAmSsb:
      // Upper sideband: the analytic signal of the tone mixture.
      for (std::size_t n = 0; n < kIqLength; ++n) {
        cd s = 0.0;
        for (const auto& t : tones) s += std::polar(t.a, 2.0 * kPi * t.f * double(n) + t.p);
        out[n] = s;
      }
      break;
    default: {  // WBFM, peak deviation 0.08 cycles/sample
      double phase = 0.0;
      for (std::size_t n = 0; n < kIqLength; ++n) {
        phase += 2.0 * kPi * 0.08 * message(double(n)) / peak;
        out[n] = std::polar(1.0, phase);
      }
    }
  }
  return out;
}

}  // namespace

std::vector<std::pair<double, double>> constellation(Scheme s) {
  std::vector<std::pair<double, double>> pts;
  switch (s) {
    case Scheme::kBpsk:
      return {{1.0, 0.0}, {-1.0, 0.0}};
    case Scheme::kQpsk:
      for (int i = 0; i < 4; ++i) {
        const double a = kPi / 4 + i * kPi / 2;
        pts.emplace_back(std::cos(a), std::sin(a));
      }
      return pts;
    case Scheme::kPsk8:
      for (int i = 0; i < 8; ++i) pts.emplace_back(std::cos(i * kPi / 4), std::sin(i * kPi / 4));
      return pts;
    case Scheme::kPam4:
      for (double l : square_grid(4)) pts.emplace_back(l, 0.0);
      return pts;
    case Scheme::kQam16:
    case Scheme::kQam64: {
      const auto levels = square_grid(s == Scheme::kQam16 ? 4 : 8);
      for (double i : levels)
        for (double q : levels) pts.emplace_back(i, q);
      return pts;
    }
    default:
      throw ConfigError("scheme " + std::string(scheme_name(s)) + " has no constellation");
  }
}

std::vector<double> rrc_taps(double beta, std::size_t sps, std::size_t span) {
  if (beta <= 0.0 || beta > 1.0) throw ConfigError("RRC roll-off must lie in (0, 1]");
  const std::size_t half = span * sps;
  std::vector<double> taps(2 * half + 1);
  double energy = 0.0;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const double t = (double(i) - double(half)) / double(sps);
    double h;
    if (std::abs(t) < 1e-12) {
      h = 1.0 - beta + 4.0 * beta / kPi;
    } else if (std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-9) {
      h = beta / std::sqrt(2.0) *
          ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * beta)) +
           (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * beta)));
    } else {
      const double x = 4.0 * beta * t;
      h = (std::sin(kPi * t * (1.0 - beta)) + x * std::cos(kPi * t * (1.0 + beta))) /
          (kPi * t * (1.0 - x * x));
    }
    taps[i] = h;
    energy += h * h;
  }
  for (double& h : taps) h /= std::sqrt(energy);
  return taps;
}

Iq modulate(Scheme scheme, std::size_t symbol_count, std::size_t sps, std::uint64_t seed,
            const ModulationOptions& options) {
  if (static_cast<std::size_t>(scheme) >= kSchemeCount) throw ConfigError("unknown modulation scheme");
  if (sps == 0 || sps * symbol_count < kIqLength) {
    throw ContractError("modulate: samples_per_symbol * symbol_count must be at least 128");
  }
  std::mt19937_64 rng(seed);
  if (is_linear(scheme)) return to_iq(linear(scheme, sps, rng, options));
  if (scheme == Scheme::kCpfsk || scheme == Scheme::kGfsk) {
    return to_iq(continuous_phase(scheme, sps, rng, options));
  }
  return to_iq(analog(scheme, rng));
}

}  // namespace amc::signals
