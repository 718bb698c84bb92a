// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "amc/model/transformer.hpp"

namespace amc::model {

inline constexpr char kCheckpointMagic[4] = {'A', 'M', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Serialises config and every parameter tensor:
///   "AMCK" | version u32 | config JSON (u32 length + UTF-8)
///   | tensor count u32 | per tensor: name (u16 length + UTF-8), rank u8,
///     dims u32 x rank, f32 payload
/// All integers little-endian.
std::vector<std::uint8_t> encode_checkpoint(const TransformerModel& model);
/// Inverse of encode_checkpoint. Throws FormatError on any structural problem,
/// including tensors whose names or shapes disagree with the embedded config.
TransformerModel decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const TransformerModel& model, const std::string& path);
TransformerModel load_checkpoint(const std::string& path);

}  // namespace amc::model
