// SPDX-License-Identifier: Apache-2.0
#include "amc/model/checkpoint.hpp"

#include "amc/error.hpp"
#include "amc/io/binary.hpp"

namespace amc::model {

std::vector<std::uint8_t> encode_checkpoint(const TransformerModel& model) {
  io::ByteWriter w;
  w.put_bytes({kCheckpointMagic, 4});
  w.put(kCheckpointVersion);
  const std::string config = model.config().to_json().dump();
  w.put(static_cast<std::uint32_t>(config.size()));
  w.put_bytes(config);
  const auto& params = model.parameters();
  w.put(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.put(static_cast<std::uint16_t>(p.name.size()));
    w.put_bytes(p.name);
    w.put(static_cast<std::uint8_t>(p.tensor.rank()));
    for (auto d : p.tensor.shape()) w.put(static_cast<std::uint32_t>(d));
    w.put_floats(p.tensor.data());
  }
  return w.bytes();
}

TransformerModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (r.get_string(4, "magic") != std::string_view(kCheckpointMagic, 4)) {
    throw FormatError("not a checkpoint (bad magic)", 0);
  }
  const auto version_at = r.offset();
  if (const auto version = r.get<std::uint32_t>("version"); version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  const auto config_len = r.get<std::uint32_t>("config length");
  const auto config_at = r.offset();
  const std::string config_text = r.get_string(config_len, "config");
  TransformerConfig cfg;
  try {
    cfg = TransformerConfig::from_json(nlohmann::json::parse(config_text));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config is not valid JSON: ") + e.what(), config_at);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config rejected: ") + e.what(), config_at);
  }

  TransformerModel model(cfg, 0);
  const auto& params = model.parameters();
  const auto count_at = r.offset();
  const auto count = r.get<std::uint32_t>("tensor count");
  if (count != params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, config needs " +
                          std::to_string(params.size()),
                      count_at);
  }
  for (const auto& p : params) {
    const auto entry_at = r.offset();
    const auto name_len = r.get<std::uint16_t>("tensor name length");
    const std::string name = r.get_string(name_len, "tensor name");
    if (name != p.name) {
      throw FormatError("expected tensor '" + p.name + "', found '" + name + "'", entry_at);
    }
    const auto rank = r.get<std::uint8_t>("tensor rank");
    ad::Shape shape;
    for (std::uint8_t i = 0; i < rank; ++i) shape.push_back(r.get<std::uint32_t>("tensor dim"));
    if (shape != p.tensor.shape()) {
      throw FormatError("tensor '" + name + "' has shape " + ad::to_string(shape) +
                            ", config implies " + ad::to_string(p.tensor.shape()),
                        entry_at);
    }
    ad::Tensor t = p.tensor;
    r.get_floats(t.mutable_data(), "tensor payload");
  }
  if (!r.at_end()) r.fail("trailing bytes after tensor table");
  return model;
}

void save_checkpoint(const TransformerModel& model, const std::string& path) {
  io::write_file(path, encode_checkpoint(model));
}

TransformerModel load_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace amc::model
