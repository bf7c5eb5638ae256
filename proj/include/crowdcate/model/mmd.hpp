#pragma once

#include <cstddef>
#include <vector>

#include "crowdcate/nn/tape.hpp"
#include "crowdcate/nn/tensor.hpp"

namespace crowdcate::model {

enum class MmdKernel { linear, rbf };

struct MmdConfig {
  MmdKernel kernel = MmdKernel::linear;
  /// rbf only: k(a, b) = exp(-|a - b|^2 / (2 h^2)). h <= 0 selects the median heuristic,
  /// h = median pairwise distance over the pooled sample (treated as a constant).
  double bandwidth = 0.0;
};

/// Squared MMD between row sets p [n, d] and q [m, d]. Linear: |mean(p) - mean(q)|^2.
/// rbf: biased V-statistic. Throws std::invalid_argument on an empty sample.
double empirical_mmd(const nn::Tensor& p, const nn::Tensor& q, const MmdConfig& config);

/// Differentiable MMD between two row subsets of `rep` [N, d].
nn::Tensor& mmd(nn::Tape& tape, nn::Tensor& rep, const std::vector<std::size_t>& rows_p,
                const std::vector<std::size_t>& rows_q, const MmdConfig& config);

/// Most frequent label; ties go to the smallest label.
std::size_t modal_treatment(const std::vector<std::size_t>& treatments);

/// Sum of MMD(control, group) over every non-control treatment group present in the batch,
/// where control is the modal treatment. Groups (control included) smaller than
/// min_group_size are skipped; a degenerate batch gives 0.
nn::Tensor& batch_ipm_penalty(nn::Tape& tape, nn::Tensor& rep, const std::vector<std::size_t>& treatments,
                              const MmdConfig& config, std::size_t min_group_size = 2);

/// Value-only version of batch_ipm_penalty.
double batch_ipm_value(const nn::Tensor& rep, const std::vector<std::size_t>& treatments, const MmdConfig& config,
                       std::size_t min_group_size = 2);

}  // namespace crowdcate::model
