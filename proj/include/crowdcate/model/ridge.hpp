#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "crowdcate/model/train.hpp"

namespace crowdcate::model {

/// Linear model on [x, z] with an unpenalized intercept.
struct RidgeModel {
  Eigen::VectorXd coef;
  double intercept = 0.0;
  double alpha = 0.0;

  double predict(const Eigen::VectorXd& features) const { return coef.dot(features) + intercept; }
};

/// Minimizes |y - Xb - c|^2 + alpha |b|^2 through an SVD of the centred design, so rank
/// deficient designs get the minimum-norm solution.
RidgeModel fit_ridge(const Eigen::MatrixXd& features, const Eigen::VectorXd& y, double alpha);

const std::vector<double>& ridge_alpha_grid();

struct RidgeSelection {
  RidgeModel model;
  std::vector<double> validation_mse;  // per grid entry
};

/// Picks alpha on a seeded validation hold-out, then refits on all of `data`.
RidgeSelection train_ridge(const TrainingSet& data, double validation_fraction, std::uint64_t seed);

/// Rows of [seat bits, z bits].
Eigen::MatrixXd ridge_features(const TrainingSet& data);
Eigen::VectorXd ridge_features(const sim::Occupancy& x, const sim::Treatment& z);

}  // namespace crowdcate::model
