// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "amc/autodiff/tensor.hpp"

namespace amc::model {

/// Architecture hyperparameters of a patch-embedding transformer classifier.
///
/// The input is a 1 x rows x length "image" of I/Q samples. A convolution
/// with a (patch_rows x patch_width) kernel and `patch_stride` column stride
/// produces patch_count() embeddings of width embed_dim; a learned CLS token
/// is prepended and its final state feeds the dense classification head.
struct TransformerConfig {
  std::size_t patch_rows = 2;
  std::size_t patch_width = 32;
  std::size_t patch_stride = 32;
  std::size_t embed_dim = 128;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t hidden_dim = 512;
  std::size_t classes = 11;
  std::size_t input_rows = 2;
  std::size_t input_length = 128;

  /// Throws ConfigError when the geometry is inconsistent.
  void validate() const;
  std::size_t patch_count() const;
  std::size_t token_count() const { return patch_count() + 1; }
  std::size_t head_dim() const { return embed_dim / heads; }

  // Reference architectures.
  static TransformerConfig teacher(std::size_t classes = 11);
  static TransformerConfig student(std::size_t classes = 11);
  /// Small surrogate: patch (2,16), embed 64, 2 layers, 4 heads, hidden 256.
  static TransformerConfig surrogate_small(std::size_t classes = 11);
  /// Large surrogate; same shape as the teacher.
  static TransformerConfig surrogate_large(std::size_t classes = 11);
  /// Looks up "teacher", "student", "model1"/"surrogate-small",
  /// "model2"/"surrogate-large".
  static TransformerConfig preset(const std::string& name, std::size_t classes = 11);

  nlohmann::json to_json() const;
  static TransformerConfig from_json(const nlohmann::json& j);

  bool operator==(const TransformerConfig&) const = default;
};

/// Closed-form parameter count:
///   conv (n*m*1+1)*k + cls k + final LN 2k + head (k*c+c)
///   + layers * (MSA 4k^2+k + two LNs 4k + FFN 2ks+k+s)
std::uint64_t count_parameters(const TransformerConfig& cfg);

/// Head-summed attention of one encoder layer for a batch. Entry (b,i,j) is
/// the sum over heads of softmax(Q_i K_i^T / sqrt(d_k))[i][j] for record b;
/// each row therefore sums to the number of heads.
struct AttentionMap {
  std::size_t layer = 0;
  std::size_t batch = 0;
  std::size_t tokens = 0;
  std::vector<float> values;

  float at(std::size_t b, std::size_t i, std::size_t j) const {
    return values[(b * tokens + i) * tokens + j];
  }
};

struct NamedParameter {
  std::string name;
  ad::Tensor tensor;
};

class TransformerModel {
 public:
  /// Builds a model with freshly initialised weights: truncated normal
  /// (sigma 0.02, cut at 2 sigma) for every projection, zeros for biases and
  /// the CLS token, unit LN gains.
  TransformerModel(const TransformerConfig& cfg, std::uint64_t seed);

  // Parameter tensors are shared handles, so copying is explicit via clone().
  TransformerModel(const TransformerModel&) = delete;
  TransformerModel& operator=(const TransformerModel&) = delete;
  TransformerModel(TransformerModel&&) noexcept = default;
  TransformerModel& operator=(TransformerModel&&) noexcept = default;

  struct Output {
    ad::Tensor logits;                 // [B, classes]
    std::vector<ad::Tensor> attention; // per layer, [B, T, T], differentiable
  };

  /// Runs a batch [B, rows, length]. Differentiable with respect to the input
  /// and all parameters.
  Output forward(const ad::Tensor& batch) const;
  ad::Tensor logits(const ad::Tensor& batch) const { return forward(batch).logits; }
  std::vector<AttentionMap> attention_maps(const ad::Tensor& batch) const;

  const TransformerConfig& config() const { return config_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  /// Number of scalars across all parameter tensors.
  std::uint64_t parameter_count() const;
  /// FNV-1a over every parameter's bytes; used to confirm models are untouched.
  std::uint64_t checksum() const;
  /// Deep copy with independent parameter storage.
  TransformerModel clone() const;
  /// Copies parameter values from `other`, which must share the architecture.
  void copy_parameters_from(const TransformerModel& other);
  void zero_grad();

  /// Finds a parameter by name; throws ConfigError when absent.
  ad::Tensor& parameter(const std::string& name);
  const ad::Tensor& parameter(const std::string& name) const;

  /// Shape the model expects for a batch of `batch` records.
  ad::Shape input_shape(std::size_t batch) const {
    return {batch, config_.input_rows, config_.input_length};
  }

 private:
  struct Layer {
    ad::Tensor ln1_gain, ln1_bias;
    ad::Tensor wq, wk, wv, wo, bo;
    ad::Tensor ln2_gain, ln2_bias;
    ad::Tensor w1, b1, w2, b2;
  };

  TransformerModel() = default;
  void rebuild_index();

  TransformerConfig config_;
  ad::Tensor patch_weight_, patch_bias_, cls_;
  std::vector<Layer> layers_;
  ad::Tensor final_gain_, final_bias_, head_weight_, head_bias_;
  std::vector<NamedParameter> params_;
};

}  // namespace amc::model
