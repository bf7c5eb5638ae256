#include "crowdcate/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>
#include <fmt/format.h>

namespace crowdcate::nn {

namespace {

struct Dims4 {
  std::size_t n, c, h, w;
};

Dims4 image_dims(const Tensor& t, const char* what) {
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2)};
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3)};
  throw ShapeError(fmt::format("{} expects [C,H,W] or [N,C,H,W], got {}", what, shape_string(t.shape())));
}

Shape image_shape(bool batched, std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  if (batched) return {n, c, h, w};
  return {c, h, w};
}

// Copies one sample into a zero-padded [C, H+2p, W+2p] buffer.
void pad_sample(const double* src, std::size_t c, std::size_t h, std::size_t w, std::size_t p,
                std::vector<double>& dst) {
  const std::size_t hp = h + 2 * p;
  const std::size_t wp = w + 2 * p;
  dst.assign(c * hp * wp, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t r = 0; r < h; ++r) {
      const double* row = src + (ch * h + r) * w;
      std::copy(row, row + w, dst.begin() + static_cast<std::ptrdiff_t>((ch * hp + r + p) * wp + p));
    }
  }
}

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

ConvKernel::ConvKernel(std::size_t out_channels, std::size_t in_channels, std::size_t k1, std::size_t k2)
    : weights({out_channels, in_channels, k1, k2}), bias({out_channels}) {}

MlpLayer::MlpLayer(std::size_t in_dim, std::size_t out_dim, Activation act)
    : weights({out_dim, in_dim}), bias({out_dim}), activation(act) {}

void glorot_init(ConvKernel& kernel, Rng& rng) {
  const std::size_t area = kernel.k1() * kernel.k2();
  const double limit = glorot_limit(kernel.in_channels() * area, kernel.out_channels() * area);
  for (double& v : kernel.weights.data()) v = uniform(rng, -limit, limit);
  std::fill(kernel.bias.data().begin(), kernel.bias.data().end(), 0.0);
}

void glorot_init(MlpLayer& layer, Rng& rng) {
  const double limit = glorot_limit(layer.in_dim(), layer.out_dim());
  for (double& v : layer.weights.data()) v = uniform(rng, -limit, limit);
  std::fill(layer.bias.data().begin(), layer.bias.data().end(), 0.0);
}

std::size_t conv_output_extent(std::size_t extent, std::size_t window, std::size_t padding, std::size_t stride) {
  if (stride == 0) throw ShapeError("stride must be at least 1");
  if (window == 0) throw ShapeError("window must be at least 1");
  if (extent + 2 * padding < window) {
    throw ShapeError(fmt::format("window {} exceeds padded extent {}", window, extent + 2 * padding));
  }
  return (extent + 2 * padding - window) / stride + 1;
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

struct ConvGeometry {
  Dims4 in;
  std::size_t k1, k2, co, ho, wo, padding, stride;
  std::size_t patch() const { return in.c * k1 * k2; }
  std::size_t positions() const { return ho * wo; }
};

ConvGeometry conv_geometry(const Tensor& input, const ConvKernel& kernel, std::size_t padding, std::size_t stride) {
  const Dims4 d = image_dims(input, "conv2d");
  if (kernel.weights.rank() != 4) throw ShapeError("conv kernel weights must be [out, in, k1, k2]");
  if (d.c != kernel.in_channels()) {
    throw ShapeError(fmt::format("conv2d input has {} channels but kernel expects {} (input {}, kernel {})", d.c,
                                 kernel.in_channels(), shape_string(input.shape()),
                                 shape_string(kernel.weights.shape())));
  }
  const std::size_t k1 = kernel.k1(), k2 = kernel.k2();
  return {d,
          k1,
          k2,
          kernel.out_channels(),
          conv_output_extent(d.h, k1, padding, stride),
          conv_output_extent(d.w, k2, padding, stride),
          padding,
          stride};
}

// Patch matrix [C*k1*k2, ho*wo] of one sample; row (c, m, q) holds input_padded(c, i*s+m, j*s+q).
void im2col(const double* src, const ConvGeometry& g, std::vector<double>& padded, std::vector<double>& cols) {
  pad_sample(src, g.in.c, g.in.h, g.in.w, g.padding, padded);
  const std::size_t hp = g.in.h + 2 * g.padding, wp = g.in.w + 2 * g.padding;
  cols.resize(g.patch() * g.positions());
  double* dst = cols.data();
  for (std::size_t c = 0; c < g.in.c; ++c) {
    for (std::size_t m = 0; m < g.k1; ++m) {
      for (std::size_t q = 0; q < g.k2; ++q) {
        for (std::size_t i = 0; i < g.ho; ++i) {
          const double* row = padded.data() + (c * hp + i * g.stride + m) * wp + q;
          for (std::size_t j = 0; j < g.wo; ++j) *dst++ = row[j * g.stride];
        }
      }
    }
  }
}

// Adjoint of im2col: scatters patch gradients back onto the unpadded input gradient.
void col2im(const double* cols, const ConvGeometry& g, std::vector<double>& grad_padded, double* grad_input) {
  const std::size_t hp = g.in.h + 2 * g.padding, wp = g.in.w + 2 * g.padding;
  grad_padded.assign(g.in.c * hp * wp, 0.0);
  const double* src = cols;
  for (std::size_t c = 0; c < g.in.c; ++c) {
    for (std::size_t m = 0; m < g.k1; ++m) {
      for (std::size_t q = 0; q < g.k2; ++q) {
        for (std::size_t i = 0; i < g.ho; ++i) {
          double* row = grad_padded.data() + (c * hp + i * g.stride + m) * wp + q;
          for (std::size_t j = 0; j < g.wo; ++j) row[j * g.stride] += *src++;
        }
      }
    }
  }
  for (std::size_t c = 0; c < g.in.c; ++c) {
    for (std::size_t r = 0; r < g.in.h; ++r) {
      const double* s = grad_padded.data() + (c * hp + r + g.padding) * wp + g.padding;
      std::copy(s, s + g.in.w, grad_input + (c * g.in.h + r) * g.in.w);
    }
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const ConvKernel& kernel, std::size_t padding, std::size_t stride) {
  const ConvGeometry g = conv_geometry(input, kernel, padding, stride);
  Tensor out(image_shape(input.rank() == 4, g.in.n, g.co, g.ho, g.wo));
  const ConstMap w(kernel.weights.data().data(), static_cast<Eigen::Index>(g.co), static_cast<Eigen::Index>(g.patch()));
  const Eigen::Map<const Eigen::VectorXd> bias(kernel.bias.data().data(), static_cast<Eigen::Index>(g.co));
  std::vector<double> padded, cols;
  for (std::size_t n = 0; n < g.in.n; ++n) {
    im2col(input.data().data() + n * g.in.c * g.in.h * g.in.w, g, padded, cols);
    const ConstMap c(cols.data(), static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.positions()));
    MutMap o(out.data().data() + n * g.co * g.positions(), static_cast<Eigen::Index>(g.co),
             static_cast<Eigen::Index>(g.positions()));
    o.noalias() = w * c;
    o.colwise() += bias;
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const ConvKernel& kernel, std::size_t padding,
                            std::size_t stride, const Tensor& grad_output, bool want_input_grad) {
  const ConvGeometry g = conv_geometry(input, kernel, padding, stride);
  if (grad_output.size() != g.in.n * g.co * g.positions()) {
    throw ShapeError("conv2d grad_output does not match the forward output shape");
  }
  Conv2dGrads grads{want_input_grad ? Tensor(input.shape()) : Tensor(), Tensor(kernel.weights.shape()),
                    Tensor(kernel.bias.shape())};
  const auto rows = static_cast<Eigen::Index>(g.co);
  const auto patch = static_cast<Eigen::Index>(g.patch());
  const auto pos = static_cast<Eigen::Index>(g.positions());
  const ConstMap w(kernel.weights.data().data(), rows, patch);
  MutMap gw(grads.weights.data().data(), rows, patch);
  Eigen::Map<Eigen::VectorXd> gb(grads.bias.data().data(), rows);
  std::vector<double> padded, cols, grad_padded, grad_cols(g.patch() * g.positions());
  for (std::size_t n = 0; n < g.in.n; ++n) {
    im2col(input.data().data() + n * g.in.c * g.in.h * g.in.w, g, padded, cols);
    const ConstMap c(cols.data(), patch, pos);
    const ConstMap go(grad_output.data().data() + n * g.co * g.positions(), rows, pos);
    gb += go.rowwise().sum();
    gw.noalias() += go * c.transpose();
    if (!want_input_grad) continue;
    MutMap gc(grad_cols.data(), patch, pos);
    gc.noalias() = w.transpose() * go;
    col2im(grad_cols.data(), g, grad_padded, grads.input.data().data() + n * g.in.c * g.in.h * g.in.w);
  }
  return grads;
}

Tensor avg_pool2d_forward(const Tensor& input, std::size_t window, std::size_t stride, PoolMode mode) {
  const Dims4 d = image_dims(input, "avg_pool2d");
  if (window > d.h || window > d.w) {
    throw ShapeError(fmt::format("pooling window {} larger than input {}", window, shape_string(input.shape())));
  }
  const std::size_t ho = conv_output_extent(d.h, window, 0, stride);
  const std::size_t wo = conv_output_extent(d.w, window, 0, stride);
  const double scale = mode == PoolMode::mean ? 1.0 / static_cast<double>(window * window) : 1.0;
  Tensor out(image_shape(input.rank() == 4, d.n, d.c, ho, wo));
  for (std::size_t plane = 0; plane < d.n * d.c; ++plane) {
    const double* src = input.data().data() + plane * d.h * d.w;
    double* dst = out.data().data() + plane * ho * wo;
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        double acc = 0.0;
        for (std::size_t m = 0; m < window; ++m) {
          const double* row = src + (i * stride + m) * d.w + j * stride;
          for (std::size_t q = 0; q < window; ++q) acc += row[q];
        }
        dst[i * wo + j] = acc * scale;
      }
    }
  }
  return out;
}

Tensor avg_pool2d_backward(const Shape& input_shape, std::size_t window, std::size_t stride, PoolMode mode,
                           const Tensor& grad_output) {
  Tensor grad_input(input_shape);
  const Dims4 d = image_dims(grad_input, "avg_pool2d");
  const std::size_t ho = conv_output_extent(d.h, window, 0, stride);
  const std::size_t wo = conv_output_extent(d.w, window, 0, stride);
  if (grad_output.size() != d.n * d.c * ho * wo) {
    throw ShapeError("avg_pool2d grad_output does not match the forward output shape");
  }
  const double scale = mode == PoolMode::mean ? 1.0 / static_cast<double>(window * window) : 1.0;
  for (std::size_t plane = 0; plane < d.n * d.c; ++plane) {
    double* dst = grad_input.data().data() + plane * d.h * d.w;
    const double* go = grad_output.data().data() + plane * ho * wo;
    for (std::size_t i = 0; i < ho; ++i) {
      for (std::size_t j = 0; j < wo; ++j) {
        const double g = go[i * wo + j] * scale;
        for (std::size_t m = 0; m < window; ++m) {
          double* row = dst + (i * stride + m) * d.w + j * stride;
          for (std::size_t q = 0; q < window; ++q) row[q] += g;
        }
      }
    }
  }
  return grad_input;
}

Tensor linear_forward(const Tensor& input, const MlpLayer& layer) {
  const bool batched = input.rank() == 2;
  if (input.rank() != 1 && !batched) {
    throw ShapeError("linear layer expects [in] or [N, in], got " + shape_string(input.shape()));
  }
  const std::size_t n = batched ? input.dim(0) : 1;
  const std::size_t in = batched ? input.dim(1) : input.dim(0);
  if (in != layer.in_dim()) {
    throw ShapeError(fmt::format("linear layer expects input dim {}, got {}", layer.in_dim(), in));
  }
  const std::size_t out_dim = layer.out_dim();
  Tensor out(batched ? Shape{n, out_dim} : Shape{out_dim});
  const ConstMap x(input.data().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
  const ConstMap w(layer.weights.data().data(), static_cast<Eigen::Index>(out_dim), static_cast<Eigen::Index>(in));
  const Eigen::Map<const Eigen::RowVectorXd> b(layer.bias.data().data(), static_cast<Eigen::Index>(out_dim));
  MutMap y(out.data().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out_dim));
  y.noalias() = x * w.transpose();
  y.rowwise() += b;
  if (layer.activation == Activation::relu) {
    for (double& v : out.data()) v = v < 0.0 ? 0.0 : v;
  }
  return out;
}

void linear_backward(const Tensor& input, const MlpLayer& layer, std::span<const double> delta, double* grad_weights,
                     double* grad_bias, double* grad_input) {
  const auto in = static_cast<Eigen::Index>(layer.in_dim());
  const auto out_dim = static_cast<Eigen::Index>(layer.out_dim());
  const auto n = static_cast<Eigen::Index>(input.size()) / in;
  const ConstMap d(delta.data(), n, out_dim);
  const ConstMap x(input.data().data(), n, in);
  if (grad_weights) {
    MutMap gw(grad_weights, out_dim, in);
    gw.noalias() += d.transpose() * x;
  }
  if (grad_bias) {
    Eigen::Map<Eigen::RowVectorXd> gb(grad_bias, out_dim);
    gb += d.colwise().sum();
  }
  if (grad_input) {
    const ConstMap w(layer.weights.data().data(), out_dim, in);
    MutMap gi(grad_input, n, in);
    gi.noalias() += d * w;
  }
}

Tensor mlp_forward(const std::vector<MlpLayer>& layers, const Tensor& input) {
  if (layers.empty()) throw ShapeError("mlp_forward needs at least one layer");
  for (std::size_t i = 1; i < layers.size(); ++i) {
    if (layers[i - 1].out_dim() != layers[i].in_dim()) {
      throw ShapeError(fmt::format("layer {} outputs {} values but layer {} expects {}", i - 1,
                                   layers[i - 1].out_dim(), i, layers[i].in_dim()));
    }
  }
  Tensor x = input;
  for (const auto& layer : layers) x = linear_forward(x, layer);
  return x;
}

}  // namespace crowdcate::nn
