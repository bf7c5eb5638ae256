#pragma once

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "crowdcate/nn/layers.hpp"
#include "crowdcate/nn/tensor.hpp"

namespace crowdcate::nn {

/// Records the forward ops of one loss evaluation so gradients can be replayed in reverse.
///
/// Intermediates live inside the tape and keep stable addresses until clear(). Parameters
/// and inputs are referenced, not copied: they must outlive the tape, and receive gradients
/// only if their grad buffer has been allocated (Tensor::zero_grad) before backward().
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor& hold(Tensor value);
  void record(std::function<void()> backward_fn) { backward_.push_back(std::move(backward_fn)); }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward step in reverse order.
  void backward(Tensor& loss);
  void clear();

 private:
  std::deque<Tensor> values_;
  std::vector<std::function<void()>> backward_;
};

void accumulate_grad(Tensor& target, std::span<const double> grad);

Tensor& conv2d(Tape& tape, Tensor& input, ConvKernel& kernel, std::size_t padding, std::size_t stride);
Tensor& avg_pool2d(Tape& tape, Tensor& input, std::size_t window, std::size_t stride, PoolMode mode);
Tensor& relu(Tape& tape, Tensor& input);
Tensor& linear(Tape& tape, Tensor& input, MlpLayer& layer);
Tensor& mlp(Tape& tape, Tensor& input, std::vector<MlpLayer>& layers);

/// [N, ...] -> [N, prod(...)].
Tensor& flatten(Tape& tape, Tensor& input);
/// [N, a] ++ [N, b] -> [N, a + b].
Tensor& concat_columns(Tape& tape, Tensor& left, Tensor& right);

Tensor& sum(Tape& tape, Tensor& input);
/// Mean of (prediction - target)^2 over all elements; target receives no gradient.
Tensor& mse(Tape& tape, Tensor& prediction, const Tensor& target);
/// a + scale * b for same-shape tensors.
Tensor& add_scaled(Tape& tape, Tensor& a, Tensor& b, double scale);

}  // namespace crowdcate::nn
