// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "amc/signals/channel.hpp"
#include "amc/signals/record.hpp"

namespace amc::signals {

enum class Split : std::uint8_t { kTrain = 0, kTest = 1 };

struct Dataset {
  std::vector<SignalRecord> records;
  std::vector<std::string> class_names;
  /// One entry per record.
  std::vector<Split> split;
  std::uint64_t seed = 0;

  std::size_t size() const { return records.size(); }
  std::size_t class_count() const { return class_names.size(); }
  std::vector<std::size_t> indices(Split which) const;
  /// Throws ContractError when labels, split or names are inconsistent.
  void validate() const;
};

/// Stratified per (label, snr) group: each group is shuffled with `seed` and
/// its first round(train_fraction * n) members go to the training split.
std::vector<Split> stratified_split(const std::vector<SignalRecord>& records,
                                    double train_fraction, std::uint64_t seed);

struct DatasetSpec {
  /// Canonical scheme names; stored sorted, labels follow that order.
  std::vector<std::string> schemes;
  std::size_t records = 2000;
  /// SNR levels cycled across records.
  std::vector<int> snr_db{10};
  ChannelConfig channel;
  std::size_t samples_per_symbol = 8;
  double rolloff = 0.35;
  double train_fraction = 0.5;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; "schemes" may be "all" or "digital".
  static DatasetSpec from_json(const nlohmann::json& j);
};

/// Record i is generated from a seed derived from (spec.seed, i) alone, so
/// the output is independent of any parallel partitioning. Classes are
/// balanced round-robin. Impulsive preprocessing runs whenever
/// alpha-stable noise is configured.
Dataset generate_dataset(const DatasetSpec& spec);

// Container: "AMC1" | version u32 = 1 | class_count u16 | names (u16 length
// + UTF-8) | record_count u64 | records (label u16, snr_db i16, 256 x f32).
// An optional split trailer may follow:
//   "SPLT" | seed u64 | record_count u64 | record_count x u8 (0 train, 1 test)
// Files without it get stratified_split(records, 0.5, 0).
inline constexpr std::uint32_t kContainerVersion = 1;

std::vector<std::uint8_t> encode_container(const Dataset& ds);
Dataset decode_container(std::span<const std::uint8_t> bytes);
void save_container(const Dataset& ds, const std::string& path);
Dataset load_container(const std::string& path);

/// FNV-1a over a byte range.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes);

/// Deterministic 64-bit mixer used to derive per-item seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace amc::signals
