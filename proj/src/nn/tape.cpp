#include "crowdcate/nn/tape.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace crowdcate::nn {

Tensor& Tape::hold(Tensor value) {
  Tensor& stored = values_.emplace_back(std::move(value));
  stored.zero_grad();
  return stored;
}

void Tape::backward(Tensor& loss) {
  if (loss.size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  loss.zero_grad();
  loss.grad()[0] = 1.0;
  for (auto it = backward_.rbegin(); it != backward_.rend(); ++it) (*it)();
}

void Tape::clear() {
  backward_.clear();
  values_.clear();
}

void accumulate_grad(Tensor& target, std::span<const double> grad) {
  if (!target.has_grad()) return;
  auto dst = target.grad();
  if (dst.size() != grad.size()) throw ShapeError("gradient size mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += grad[i];
}

Tensor& conv2d(Tape& tape, Tensor& input, ConvKernel& kernel, std::size_t padding, std::size_t stride) {
  Tensor& out = tape.hold(conv2d_forward(input, kernel, padding, stride));
  tape.record([&input, &kernel, &out, padding, stride] {
    Tensor grad_out(out.shape(), std::vector<double>(out.grad().begin(), out.grad().end()));
    Conv2dGrads g = conv2d_backward(input, kernel, padding, stride, grad_out, input.has_grad());
    if (input.has_grad()) accumulate_grad(input, g.input.data());
    accumulate_grad(kernel.weights, g.weights.data());
    accumulate_grad(kernel.bias, g.bias.data());
  });
  return out;
}

Tensor& avg_pool2d(Tape& tape, Tensor& input, std::size_t window, std::size_t stride, PoolMode mode) {
  Tensor& out = tape.hold(avg_pool2d_forward(input, window, stride, mode));
  tape.record([&input, &out, window, stride, mode] {
    if (!input.has_grad()) return;
    Tensor grad_out(out.shape(), std::vector<double>(out.grad().begin(), out.grad().end()));
    Tensor g = avg_pool2d_backward(input.shape(), window, stride, mode, grad_out);
    accumulate_grad(input, g.data());
  });
  return out;
}

Tensor& relu(Tape& tape, Tensor& input) {
  Tensor value = input;
  value.drop_grad();
  for (double& v : value.data()) v = v < 0.0 ? 0.0 : v;
  Tensor& out = tape.hold(std::move(value));
  tape.record([&input, &out] {
    if (!input.has_grad()) return;
    auto gi = input.grad();
    auto go = out.grad();
    for (std::size_t i = 0; i < gi.size(); ++i) {
      if (input[i] > 0.0) gi[i] += go[i];
    }
  });
  return out;
}

Tensor& linear(Tape& tape, Tensor& input, MlpLayer& layer) {
  Tensor& out = tape.hold(linear_forward(input, layer));
  tape.record([&input, &layer, &out] {
    std::vector<double> delta(out.grad().begin(), out.grad().end());
    if (layer.activation == Activation::relu) {
      for (std::size_t k = 0; k < delta.size(); ++k) {
        if (out[k] <= 0.0) delta[k] = 0.0;
      }
    }
    linear_backward(input, layer, delta, layer.weights.has_grad() ? layer.weights.grad().data() : nullptr,
                    layer.bias.has_grad() ? layer.bias.grad().data() : nullptr,
                    input.has_grad() ? input.grad().data() : nullptr);
  });
  return out;
}

Tensor& mlp(Tape& tape, Tensor& input, std::vector<MlpLayer>& layers) {
  Tensor* x = &input;
  for (auto& layer : layers) x = &linear(tape, *x, layer);
  return *x;
}

Tensor& flatten(Tape& tape, Tensor& input) {
  if (input.rank() < 2) throw ShapeError("flatten expects a batched tensor");
  const std::size_t n = input.dim(0);
  Tensor value = input.reshaped({n, input.size() / n});
  value.drop_grad();
  Tensor& out = tape.hold(std::move(value));
  tape.record([&input, &out] { accumulate_grad(input, out.grad()); });
  return out;
}

Tensor& concat_columns(Tape& tape, Tensor& left, Tensor& right) {
  if (left.rank() != 2 || right.rank() != 2 || left.dim(0) != right.dim(0)) {
    throw ShapeError(fmt::format("concat_columns needs [N,a] and [N,b], got {} and {}",
                                 shape_string(left.shape()), shape_string(right.shape())));
  }
  const std::size_t n = left.dim(0), a = left.dim(1), b = right.dim(1);
  Tensor value({n, a + b});
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(left.data().begin() + static_cast<std::ptrdiff_t>(s * a), a,
                value.data().begin() + static_cast<std::ptrdiff_t>(s * (a + b)));
    std::copy_n(right.data().begin() + static_cast<std::ptrdiff_t>(s * b), b,
                value.data().begin() + static_cast<std::ptrdiff_t>(s * (a + b) + a));
  }
  Tensor& out = tape.hold(std::move(value));
  tape.record([&left, &right, &out, n, a, b] {
    auto go = out.grad();
    if (left.has_grad()) {
      auto gl = left.grad();
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t k = 0; k < a; ++k) gl[s * a + k] += go[s * (a + b) + k];
    }
    if (right.has_grad()) {
      auto gr = right.grad();
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t k = 0; k < b; ++k) gr[s * b + k] += go[s * (a + b) + a + k];
    }
  });
  return out;
}

Tensor& sum(Tape& tape, Tensor& input) {
  double total = 0.0;
  for (double v : input.data()) total += v;
  Tensor& out = tape.hold(Tensor::scalar(total));
  tape.record([&input, &out] {
    if (!input.has_grad()) return;
    const double g = out.grad()[0];
    for (double& v : input.grad()) v += g;
  });
  return out;
}

Tensor& mse(Tape& tape, Tensor& prediction, const Tensor& target) {
  if (prediction.size() != target.size()) {
    throw ShapeError(fmt::format("mse shapes differ: {} vs {}", shape_string(prediction.shape()),
                                 shape_string(target.shape())));
  }
  const double n = static_cast<double>(prediction.size());
  double total = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double e = prediction[i] - target[i];
    total += e * e;
  }
  Tensor& out = tape.hold(Tensor::scalar(total / n));
  tape.record([&prediction, &target, &out, n] {
    if (!prediction.has_grad()) return;
    const double g = out.grad()[0] * 2.0 / n;
    auto gp = prediction.grad();
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g * (prediction[i] - target[i]);
  });
  return out;
}

Tensor& add_scaled(Tape& tape, Tensor& a, Tensor& b, double scale) {
  if (a.size() != b.size()) throw ShapeError("add_scaled needs same-size tensors");
  Tensor value = a;
  value.drop_grad();
  for (std::size_t i = 0; i < value.size(); ++i) value[i] += scale * b[i];
  Tensor& out = tape.hold(std::move(value));
  tape.record([&a, &b, &out, scale] {
    accumulate_grad(a, out.grad());
    if (b.has_grad()) {
      auto gb = b.grad();
      auto go = out.grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += scale * go[i];
    }
  });
  return out;
}

}  // namespace crowdcate::nn
