#include "crowdcate/nn/adam.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace crowdcate::nn {

void AdamState::step(std::span<Tensor* const> params) {
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k]->has_grad()) {
      throw std::invalid_argument(fmt::format("adam_step: parameter {} has no gradient", k));
    }
  }
  if (step_count_ == 0 && first_.empty()) {
    for (const Tensor* p : params) {
      first_.emplace_back(p->shape());
      second_.emplace_back(p->shape());
    }
  }
  if (first_.size() != params.size()) {
    throw std::invalid_argument(fmt::format("adam_step: optimizer tracks {} parameters, got {}", first_.size(),
                                            params.size()));
  }

  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    if (p.size() != first_[k].size()) {
      throw std::invalid_argument(fmt::format("adam_step: parameter {} changed size", k));
    }
    auto g = p.grad();
    auto m = first_[k].data();
    auto v = second_[k].data();
    auto w = p.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      w[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

}  // namespace crowdcate::nn
