// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "amc/autodiff/tensor.hpp"

namespace amc::training {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Parameters without a gradient are skipped, so
/// a step after a partial backward pass leaves the untouched tensors alone.
class Adam {
 public:
  Adam(std::vector<ad::Tensor> params, AdamConfig cfg = {});

  void step();
  void zero_grad();
  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<ad::Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
};

}  // namespace amc::training
