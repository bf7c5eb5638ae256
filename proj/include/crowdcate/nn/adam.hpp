#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "crowdcate/nn/tensor.hpp"

namespace crowdcate::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected ADAM. Moments are created zeroed on the first step and are bound to the
/// parameter list by position from then on.
class AdamState {
 public:
  explicit AdamState(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  std::size_t step_count() const { return step_count_; }
  const std::vector<Tensor>& first_moments() const { return first_; }
  const std::vector<Tensor>& second_moments() const { return second_; }

  /// Applies one update from the gradients stored on `params`; throws if any grad is missing.
  void step(std::span<Tensor* const> params);

 private:
  AdamConfig config_;
  std::size_t step_count_ = 0;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
};

inline void adam_step(AdamState& state, std::span<Tensor* const> params) { state.step(params); }

}  // namespace crowdcate::nn
