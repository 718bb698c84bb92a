// SPDX-License-Identifier: Apache-2.0
#include "amc/model/transformer.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "amc/autodiff/ops.hpp"
#include "amc/error.hpp"

namespace amc::model {

using ad::Tensor;

void TransformerConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("transformer config: " + what); };
  if (patch_rows == 0 || patch_width == 0 || patch_stride == 0 || embed_dim == 0 || layers == 0 ||
      heads == 0 || hidden_dim == 0 || classes < 2 || input_rows == 0 || input_length == 0) {
    fail("all sizes must be positive and classes >= 2");
  }
  if (patch_rows != input_rows) fail("patch kernel must span all input rows");
  if (patch_width > input_length) fail("patch width exceeds input length");
  if ((input_length - patch_width) % patch_stride != 0) {
    fail("(input_length - patch_width) must be divisible by patch_stride");
  }
  if (embed_dim % heads != 0) fail("embed_dim must be divisible by heads");
}

std::size_t TransformerConfig::patch_count() const {
  return (input_length - patch_width) / patch_stride + 1;
}

TransformerConfig TransformerConfig::teacher(std::size_t classes) {
  TransformerConfig c;
  c.classes = classes;
  return c;
}

TransformerConfig TransformerConfig::student(std::size_t classes) {
  TransformerConfig c;
  c.embed_dim = 96;
  c.layers = 2;
  c.hidden_dim = 384;
  c.classes = classes;
  return c;
}

TransformerConfig TransformerConfig::surrogate_small(std::size_t classes) {
  TransformerConfig c;
  c.patch_width = 16;
  c.patch_stride = 16;
  c.embed_dim = 64;
  c.layers = 2;
  c.hidden_dim = 256;
  c.classes = classes;
  return c;
}

TransformerConfig TransformerConfig::surrogate_large(std::size_t classes) {
  return teacher(classes);
}

TransformerConfig TransformerConfig::preset(const std::string& name, std::size_t classes) {
  if (name == "teacher") return teacher(classes);
  if (name == "student") return student(classes);
  if (name == "model1" || name == "surrogate-small") return surrogate_small(classes);
  if (name == "model2" || name == "surrogate-large") return surrogate_large(classes);
  throw ConfigError("unknown architecture preset '" + name + "'");
}

nlohmann::json TransformerConfig::to_json() const {
  return {{"patch_rows", patch_rows},   {"patch_width", patch_width}, {"patch_stride", patch_stride},
          {"embed_dim", embed_dim},     {"layers", layers},           {"heads", heads},
          {"hidden_dim", hidden_dim},   {"classes", classes},         {"input_rows", input_rows},
          {"input_length", input_length}};
}

TransformerConfig TransformerConfig::from_json(const nlohmann::json& j) {
  TransformerConfig c;
  if (j.contains("preset")) {
    c = preset(j.at("preset").get<std::string>(), j.value("classes", std::size_t{11}));
  }
  try {
    c.patch_rows = j.value("patch_rows", c.patch_rows);
    c.patch_width = j.value("patch_width", c.patch_width);
    c.patch_stride = j.value("patch_stride", c.patch_stride);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.classes = j.value("classes", c.classes);
    c.input_rows = j.value("input_rows", c.input_rows);
    c.input_length = j.value("input_length", c.input_length);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("transformer config: ") + e.what());
  }
  c.validate();
  return c;
}

std::uint64_t count_parameters(const TransformerConfig& cfg) {
  const std::uint64_t n = cfg.patch_rows, m = cfg.patch_width, l = 1;
  const std::uint64_t k = cfg.embed_dim, s = cfg.hidden_dim, c = cfg.classes;
  const std::uint64_t conv = (n * m * l + 1) * k;
  const std::uint64_t cls = k;
  const std::uint64_t ln = 2 * k;
  const std::uint64_t dense = k * c + c;
  const std::uint64_t msa = k * k * 4 + k;
  const std::uint64_t ffn = 2 * k * s + k + s;
  return conv + cls + ln + dense + cfg.layers * (msa + 2 * ln + ffn);
}

namespace {

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor truncated_normal(ad::Shape shape, float sigma = 0.02f) {
    std::normal_distribution<float> dist(0.0f, sigma);
    std::vector<float> v(ad::numel(shape));
    for (auto& x : v) {
      do {
        x = dist(rng_);
      } while (std::abs(x) > 2.0f * sigma);
    }
    return Tensor::parameter(std::move(shape), std::move(v));
  }

  static Tensor constant(ad::Shape shape, float value) {
    return Tensor::parameter(shape, std::vector<float>(ad::numel(shape), value));
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

TransformerModel::TransformerModel(const TransformerConfig& cfg, std::uint64_t seed)
    : config_(cfg) {
  cfg.validate();
  Initializer init(seed);
  const std::size_t k = cfg.embed_dim, s = cfg.hidden_dim;
  patch_weight_ = init.truncated_normal({cfg.patch_rows * cfg.patch_width, k});
  patch_bias_ = Initializer::constant({k}, 0.0f);
  cls_ = Initializer::constant({k}, 0.0f);
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    Layer layer;
    layer.ln1_gain = Initializer::constant({k}, 1.0f);
    layer.ln1_bias = Initializer::constant({k}, 0.0f);
    layer.wq = init.truncated_normal({k, k});
    layer.wk = init.truncated_normal({k, k});
    layer.wv = init.truncated_normal({k, k});
    layer.wo = init.truncated_normal({k, k});
    layer.bo = Initializer::constant({k}, 0.0f);
    layer.ln2_gain = Initializer::constant({k}, 1.0f);
    layer.ln2_bias = Initializer::constant({k}, 0.0f);
    layer.w1 = init.truncated_normal({k, s});
    layer.b1 = Initializer::constant({s}, 0.0f);
    layer.w2 = init.truncated_normal({s, k});
    layer.b2 = Initializer::constant({k}, 0.0f);
    layers_.push_back(std::move(layer));
  }
  final_gain_ = Initializer::constant({k}, 1.0f);
  final_bias_ = Initializer::constant({k}, 0.0f);
  head_weight_ = init.truncated_normal({k, cfg.classes});
  head_bias_ = Initializer::constant({cfg.classes}, 0.0f);
  rebuild_index();
}

void TransformerModel::rebuild_index() {
  params_.clear();
  params_.push_back({"patch.weight", patch_weight_});
  params_.push_back({"patch.bias", patch_bias_});
  params_.push_back({"cls", cls_});
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    const Layer& l = layers_[i];
    params_.push_back({p + "ln1.gain", l.ln1_gain});
    params_.push_back({p + "ln1.bias", l.ln1_bias});
    params_.push_back({p + "attn.wq", l.wq});
    params_.push_back({p + "attn.wk", l.wk});
    params_.push_back({p + "attn.wv", l.wv});
    params_.push_back({p + "attn.wo", l.wo});
    params_.push_back({p + "attn.bo", l.bo});
    params_.push_back({p + "ln2.gain", l.ln2_gain});
    params_.push_back({p + "ln2.bias", l.ln2_bias});
    params_.push_back({p + "ffn.w1", l.w1});
    params_.push_back({p + "ffn.b1", l.b1});
    params_.push_back({p + "ffn.w2", l.w2});
    params_.push_back({p + "ffn.b2", l.b2});
  }
  params_.push_back({"final_ln.gain", final_gain_});
  params_.push_back({"final_ln.bias", final_bias_});
  params_.push_back({"head.weight", head_weight_});
  params_.push_back({"head.bias", head_bias_});
}

TransformerModel::Output TransformerModel::forward(const Tensor& batch) const {
  const auto& cfg = config_;
  if (batch.rank() != 3 || batch.dim(1) != cfg.input_rows || batch.dim(2) != cfg.input_length) {
    throw DimensionError("transformer input must be [B," + std::to_string(cfg.input_rows) + "," +
                         std::to_string(cfg.input_length) + "], got " +
                         ad::to_string(batch.shape()));
  }
  const std::size_t b = batch.dim(0);
  const std::size_t t = cfg.token_count();
  const std::size_t h = cfg.heads;
  const float inv_sqrt_dk = 1.0f / std::sqrt(static_cast<float>(cfg.head_dim()));

  Tensor patches = ad::extract_patches(batch, cfg.patch_width, cfg.patch_stride);
  Tensor z = ad::add_bias(ad::matmul(patches, patch_weight_), patch_bias_);
  z = ad::prepend_token(z, cls_, b);  // [B*T, k]

  Output out;
  out.attention.reserve(layers_.size());
  for (const Layer& layer : layers_) {
    // z' = MSA(LN(z)) + z
    Tensor x = ad::layer_norm(z, layer.ln1_gain, layer.ln1_bias);
    Tensor q = ad::split_heads(ad::matmul(x, layer.wq), b, h);
    Tensor k = ad::split_heads(ad::matmul(x, layer.wk), b, h);
    Tensor v = ad::split_heads(ad::matmul(x, layer.wv), b, h);
    Tensor attn = ad::softmax(ad::scale(ad::bmm(q, k, true), inv_sqrt_dk), 2);  // [B*h,T,T]
    out.attention.push_back(ad::sum_axis(ad::reshape(attn, {b, h, t, t}), 1));
    Tensor ctx = ad::merge_heads(ad::bmm(attn, v), b, h);
    z = ad::add(z, ad::add_bias(ad::matmul(ctx, layer.wo), layer.bo));

    // z = FFN(LN(z')) + z'
    Tensor y = ad::layer_norm(z, layer.ln2_gain, layer.ln2_bias);
    y = ad::gelu(ad::add_bias(ad::matmul(y, layer.w1), layer.b1));
    z = ad::add(z, ad::add_bias(ad::matmul(y, layer.w2), layer.b2));
  }
  // LN is row-wise, so normalising only the CLS rows is equivalent.
  Tensor cls_state = ad::select_position(z, t, 0);
  cls_state = ad::layer_norm(cls_state, final_gain_, final_bias_);
  out.logits = ad::add_bias(ad::matmul(cls_state, head_weight_), head_bias_);
  return out;
}

std::vector<AttentionMap> TransformerModel::attention_maps(const Tensor& batch) const {
  ad::NoGradGuard no_grad;
  Tensor input = batch.rank() == 2 ? ad::reshape(batch, {1, batch.dim(0), batch.dim(1)}) : batch;
  auto out = forward(input);
  std::vector<AttentionMap> maps;
  for (std::size_t i = 0; i < out.attention.size(); ++i) {
    const Tensor& a = out.attention[i];
    maps.push_back({i, a.dim(0), a.dim(1), {a.data().begin(), a.data().end()}});
  }
  return maps;
}

std::uint64_t TransformerModel::parameter_count() const {
  std::uint64_t total = 0;
  for (const auto& p : params_) total += p.tensor.numel();
  return total;
}

std::uint64_t TransformerModel::checksum() const {
  std::uint64_t hash = 1469598103934665603ULL;
  for (const auto& p : params_) {
    for (float v : p.tensor.data()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      for (int i = 0; i < 4; ++i) {
        hash ^= (bits >> (8 * i)) & 0xffu;
        hash *= 1099511628211ULL;
      }
    }
  }
  return hash;
}

TransformerModel TransformerModel::clone() const {
  TransformerModel copy;
  copy.config_ = config_;
  auto dup = [](const Tensor& t) { return t.clone(); };
  copy.patch_weight_ = dup(patch_weight_);
  copy.patch_bias_ = dup(patch_bias_);
  copy.cls_ = dup(cls_);
  for (const Layer& l : layers_) {
    copy.layers_.push_back({dup(l.ln1_gain), dup(l.ln1_bias), dup(l.wq), dup(l.wk), dup(l.wv),
                            dup(l.wo), dup(l.bo), dup(l.ln2_gain), dup(l.ln2_bias), dup(l.w1),
                            dup(l.b1), dup(l.w2), dup(l.b2)});
  }
  copy.final_gain_ = dup(final_gain_);
  copy.final_bias_ = dup(final_bias_);
  copy.head_weight_ = dup(head_weight_);
  copy.head_bias_ = dup(head_bias_);
  copy.rebuild_index();
  return copy;
}

void TransformerModel::copy_parameters_from(const TransformerModel& other) {
  if (!(other.config_ == config_)) throw ConfigError("copy_parameters_from: architectures differ");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto src = other.params_[i].tensor.data();
    auto dst = params_[i].tensor.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

void TransformerModel::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

Tensor& TransformerModel::parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw ConfigError("no parameter named '" + name + "'");
}

const Tensor& TransformerModel::parameter(const std::string& name) const {
  return const_cast<TransformerModel*>(this)->parameter(name);
}

}  // namespace amc::model
