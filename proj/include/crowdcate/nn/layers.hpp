#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "crowdcate/common/rng.hpp"
#include "crowdcate/nn/tensor.hpp"

namespace crowdcate::nn {

enum class Activation { relu, identity };

/// Mean divides each window sum by the window area; sum keeps the raw all-ones kernel response.
enum class PoolMode { mean, sum };

/// Cross-correlation kernel bank. weights: [out_channels, in_channels, k1, k2]; bias: [out_channels].
struct ConvKernel {
  ConvKernel() = default;
  ConvKernel(std::size_t out_channels, std::size_t in_channels, std::size_t k1, std::size_t k2);

  std::size_t out_channels() const { return weights.dim(0); }
  std::size_t in_channels() const { return weights.dim(1); }
  std::size_t k1() const { return weights.dim(2); }
  std::size_t k2() const { return weights.dim(3); }

  Tensor weights;
  Tensor bias;
};

/// Affine map followed by an activation. weights: [out_dim, in_dim]; bias: [out_dim].
struct MlpLayer {
  MlpLayer() = default;
  MlpLayer(std::size_t in_dim, std::size_t out_dim, Activation activation);

  std::size_t in_dim() const { return weights.dim(1); }
  std::size_t out_dim() const { return weights.dim(0); }

  Tensor weights;
  Tensor bias;
  Activation activation = Activation::identity;
};

// Uniform in +-sqrt(6 / (fan_in + fan_out)); biases zero.
void glorot_init(ConvKernel& kernel, Rng& rng);
void glorot_init(MlpLayer& layer, Rng& rng);

std::size_t conv_output_extent(std::size_t extent, std::size_t window, std::size_t padding, std::size_t stride);

// Kernels accept [C,H,W] or batched [N,C,H,W] input and return the same rank.
Tensor conv2d_forward(const Tensor& input, const ConvKernel& kernel, std::size_t padding, std::size_t stride);

struct Conv2dGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
/// With want_input_grad == false the input gradient is skipped and left empty.
Conv2dGrads conv2d_backward(const Tensor& input, const ConvKernel& kernel, std::size_t padding,
                            std::size_t stride, const Tensor& grad_output, bool want_input_grad = true);

Tensor avg_pool2d_forward(const Tensor& input, std::size_t window, std::size_t stride,
                          PoolMode mode = PoolMode::mean);
Tensor avg_pool2d_backward(const Shape& input_shape, std::size_t window, std::size_t stride, PoolMode mode,
                           const Tensor& grad_output);

/// Input [in_dim] or [N, in_dim].
Tensor linear_forward(const Tensor& input, const MlpLayer& layer);
Tensor mlp_forward(const std::vector<MlpLayer>& layers, const Tensor& input);

/// Accumulates gradients of a linear layer given delta = dL/d(pre-activation), [N, out].
/// Null targets are skipped.
void linear_backward(const Tensor& input, const MlpLayer& layer, std::span<const double> delta, double* grad_weights,
                     double* grad_bias, double* grad_input);

}  // namespace crowdcate::nn
