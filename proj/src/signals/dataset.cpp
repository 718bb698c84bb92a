// SPDX-License-Identifier: Apache-2.0
#include "amc/signals/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "amc/error.hpp"
#include "amc/io/binary.hpp"
#include "amc/signals/modulation.hpp"

namespace amc::signals {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finaliser over a combination of both words.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::size_t> Dataset::indices(Split which) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == which) out.push_back(i);
  }
  return out;
}

void Dataset::validate() const {
  if (class_names.empty()) throw ContractError("dataset has no classes");
  if (split.size() != records.size()) throw ContractError("split does not cover every record");
  for (const auto& r : records) {
    if (r.label >= class_names.size()) throw ContractError("record label exceeds class count");
    if (!std::all_of(r.iq.begin(), r.iq.end(), [](float v) { return std::isfinite(v); })) {
      throw ContractError("record holds non-finite samples");
    }
  }
}

std::vector<Split> stratified_split(const std::vector<SignalRecord>& records, double train_fraction,
                                    std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("train fraction must lie in [0, 1]");
  }
  std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < records.size(); ++i) {
    groups[{records[i].label, records[i].snr_db}].push_back(i);
  }
  std::vector<Split> split(records.size(), Split::kTest);
  for (auto& [key, members] : groups) {
    std::mt19937_64 rng(mix_seed(seed, (std::uint64_t(std::uint16_t(key.first)) << 16) |
                                           std::uint16_t(key.second)));
    // Fisher-Yates with an explicit draw so the permutation does not depend
    // on the standard library's shuffle.
    for (std::size_t i = members.size(); i > 1; --i) {
      std::swap(members[i - 1], members[rng() % i]);
    }
    const auto train = static_cast<std::size_t>(std::llround(train_fraction * double(members.size())));
    for (std::size_t i = 0; i < train; ++i) split[members[i]] = Split::kTrain;
  }
  return split;
}

nlohmann::json DatasetSpec::to_json() const {
  nlohmann::json channel_json = {{"kind", channel_name(channel.kind)},
                                 {"rician_k", channel.rician_k}};
  if (channel.alpha_stable) {
    channel_json["alpha_stable"] = {{"alpha", channel.alpha_stable->alpha},
                                    {"power_match", channel.alpha_stable->power_match}};
  }
  return {{"schemes", schemes},       {"records", records},
          {"snr_db", snr_db},         {"channel", channel_json},
          {"samples_per_symbol", samples_per_symbol},
          {"rolloff", rolloff},       {"train_fraction", train_fraction},
          {"seed", seed}};
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j) {
  DatasetSpec s;
  try {
    if (j.contains("schemes")) {
      const auto& v = j.at("schemes");
      if (v.is_string()) {
        const auto which = v.get<std::string>();
        std::vector<Scheme> set;
        if (which == "all") set = all_schemes();
        else if (which == "digital") set = digital_schemes();
        else throw ConfigError("schemes must be a list, \"all\" or \"digital\"");
        for (auto sc : set) s.schemes.emplace_back(scheme_name(sc));
      } else {
        s.schemes = v.get<std::vector<std::string>>();
      }
    }
    s.records = j.value("records", s.records);
    if (j.contains("snr_db")) {
      const auto& v = j.at("snr_db");
      s.snr_db = v.is_array() ? v.get<std::vector<int>>() : std::vector<int>{v.get<int>()};
    }
    if (j.contains("channel")) {
      const auto& c = j.at("channel");
      s.channel.kind = parse_channel(c.value("kind", std::string("awgn")));
      s.channel.rician_k = c.value("rician_k", s.channel.rician_k);
      if (c.contains("alpha_stable") && !c.at("alpha_stable").is_null()) {
        AlphaStableNoise a;
        const auto& aj = c.at("alpha_stable");
        if (aj.is_number()) {
          a.alpha = aj.get<double>();
        } else {
          a.alpha = aj.value("alpha", a.alpha);
          a.power_match = aj.value("power_match", a.power_match);
        }
        s.channel.alpha_stable = a;
      }
    }
    s.samples_per_symbol = j.value("samples_per_symbol", s.samples_per_symbol);
    s.rolloff = j.value("rolloff", s.rolloff);
    s.train_fraction = j.value("train_fraction", s.train_fraction);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset spec: ") + e.what());
  }
  return s;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  if (spec.records == 0) throw ConfigError("dataset must contain at least one record");
  if (spec.snr_db.empty()) throw ConfigError("dataset needs at least one SNR level");
  if (spec.samples_per_symbol == 0) throw ConfigError("samples_per_symbol must be positive");
  std::vector<std::string> names = spec.schemes;
  if (names.empty()) {
    for (auto s : all_schemes()) names.emplace_back(scheme_name(s));
  }
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end()) {
    throw ConfigError("duplicate modulation scheme in dataset spec");
  }
  std::vector<Scheme> schemes;
  for (const auto& n : names) schemes.push_back(parse_scheme(n));
  spec.channel.validate();

  ModulationOptions mod;
  mod.rolloff = spec.rolloff;
  const std::size_t symbols = (kIqLength + spec.samples_per_symbol - 1) / spec.samples_per_symbol;

  Dataset ds;
  ds.class_names = names;
  ds.seed = spec.seed;
  ds.records.resize(spec.records);
  for (std::size_t i = 0; i < spec.records; ++i) {
    SignalRecord& r = ds.records[i];
    r.label = static_cast<std::uint16_t>(i % schemes.size());
    const int snr = spec.snr_db[(i / schemes.size()) % spec.snr_db.size()];
    r.snr_db = static_cast<std::int16_t>(snr);
    ChannelConfig channel = spec.channel;
    channel.snr_db = snr;
    const Iq clean = modulate(schemes[r.label], symbols, spec.samples_per_symbol,
                              mix_seed(spec.seed, 2 * i), mod);
    r.iq = apply_channel(clean, channel, mix_seed(spec.seed, 2 * i + 1));
    if (channel.alpha_stable) r.iq = preprocess_impulsive(r.iq);
  }
  ds.split = stratified_split(ds.records, spec.train_fraction, spec.seed);
  return ds;
}

namespace {
constexpr char kMagic[4] = {'A', 'M', 'C', '1'};
constexpr char kSplitMagic[4] = {'S', 'P', 'L', 'T'};
}  // namespace

std::vector<std::uint8_t> encode_container(const Dataset& ds) {
  ds.validate();
  if (!std::is_sorted(ds.class_names.begin(), ds.class_names.end())) {
    throw ContractError("container class names must be in alphabetical order");
  }
  io::ByteWriter w;
  w.put_bytes({kMagic, 4});
  w.put(kContainerVersion);
  w.put(static_cast<std::uint16_t>(ds.class_names.size()));
  for (const auto& n : ds.class_names) {
    w.put(static_cast<std::uint16_t>(n.size()));
    w.put_bytes(n);
  }
  w.put(static_cast<std::uint64_t>(ds.records.size()));
  for (const auto& r : ds.records) {
    w.put(r.label);
    w.put(r.snr_db);
    w.put_floats(r.iq);
  }
  w.put_bytes({kSplitMagic, 4});
  w.put(ds.seed);
  w.put(static_cast<std::uint64_t>(ds.records.size()));
  for (auto s : ds.split) w.put(static_cast<std::uint8_t>(s));
  return w.bytes();
}

Dataset decode_container(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (r.get_string(4, "magic") != std::string_view(kMagic, 4)) {
    throw FormatError("not an AMC1 container (bad magic)", 0);
  }
  const auto version_at = r.offset();
  if (const auto v = r.get<std::uint32_t>("version"); v != kContainerVersion) {
    throw FormatError("unsupported container version " + std::to_string(v), version_at);
  }
  Dataset ds;
  const auto classes = r.get<std::uint16_t>("class count");
  if (classes == 0) throw FormatError("container declares zero classes", r.offset() - 2);
  for (std::uint16_t c = 0; c < classes; ++c) {
    const auto at = r.offset();
    const auto len = r.get<std::uint16_t>("class name length");
    ds.class_names.push_back(r.get_string(len, "class name"));
    if (c > 0 && !(ds.class_names[c - 1] < ds.class_names[c])) {
      throw FormatError("class names are not in strictly alphabetical order", at);
    }
  }
  const auto count = r.get<std::uint64_t>("record count");
  constexpr std::uint64_t kRecordBytes = 2 + 2 + 4 * kIqSize;
  if (count > r.remaining() / kRecordBytes) {
    throw FormatError("record count " + std::to_string(count) + " exceeds file size", r.offset() - 8);
  }
  ds.records.resize(count);
  for (auto& rec : ds.records) {
    const auto at = r.offset();
    rec.label = r.get<std::uint16_t>("label");
    rec.snr_db = r.get<std::int16_t>("snr_db");
    r.get_floats(rec.iq, "samples");
    if (rec.label >= classes) {
      throw FormatError("label " + std::to_string(rec.label) + " exceeds class count", at);
    }
    if (!std::all_of(rec.iq.begin(), rec.iq.end(), [](float v) { return std::isfinite(v); })) {
      throw FormatError("record holds non-finite samples", at);
    }
  }
  if (r.at_end()) {
    ds.split = stratified_split(ds.records, 0.5, 0);
    return ds;
  }
  const auto trailer_at = r.offset();
  if (r.get_string(4, "split trailer") != std::string_view(kSplitMagic, 4)) {
    throw FormatError("unexpected bytes after the record table", trailer_at);
  }
  ds.seed = r.get<std::uint64_t>("split seed");
  const auto split_count_at = r.offset();
  if (r.get<std::uint64_t>("split count") != count) {
    throw FormatError("split trailer does not match record count", split_count_at);
  }
  ds.split.resize(count);
  for (auto& s : ds.split) {
    const auto v = r.get<std::uint8_t>("split flag");
    if (v > 1) throw FormatError("split flag must be 0 or 1", r.offset() - 1);
    s = static_cast<Split>(v);
  }
  if (!r.at_end()) r.fail("trailing bytes after split trailer");
  return ds;
}

void save_container(const Dataset& ds, const std::string& path) {
  io::write_file(path, encode_container(ds));
}

Dataset load_container(const std::string& path) { return decode_container(io::read_file(path)); }

}  // namespace amc::signals
