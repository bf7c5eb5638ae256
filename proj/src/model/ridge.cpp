#include "crowdcate/model/ridge.hpp"

#include <cmath>
#include <limits>

#include <Eigen/SVD>

namespace crowdcate::model {

Eigen::VectorXd ridge_features(const sim::Occupancy& x, const sim::Treatment& z) {
  Eigen::VectorXd f(static_cast<Eigen::Index>(x.size() + sim::kTreatmentDims));
  for (std::size_t s = 0; s < x.size(); ++s) f(static_cast<Eigen::Index>(s)) = x[s] ? 1.0 : 0.0;
  const auto bits = z.encode();
  for (std::size_t k = 0; k < sim::kTreatmentDims; ++k) f(static_cast<Eigen::Index>(x.size() + k)) = bits[k];
  return f;
}

Eigen::MatrixXd ridge_features(const TrainingSet& data) {
  if (data.size() == 0) return {};
  const auto cols = static_cast<Eigen::Index>(data.x.front().size() + sim::kTreatmentDims);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(data.size()), cols);
  for (std::size_t i = 0; i < data.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = ridge_features(data.x[i], data.z[i]);
  return m;
}

RidgeModel fit_ridge(const Eigen::MatrixXd& features, const Eigen::VectorXd& y, double alpha) {
  if (features.rows() != y.size() || features.rows() == 0) throw std::invalid_argument("ridge needs aligned nonempty data");
  if (!(alpha >= 0.0)) throw std::invalid_argument("ridge alpha must be >= 0");
  const Eigen::RowVectorXd mean_x = features.colwise().mean();
  const double mean_y = y.mean();
  const Eigen::MatrixXd xc = features.rowwise() - mean_x;
  const Eigen::VectorXd yc = y.array() - mean_y;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(xc, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double cutoff = s.size() ? s(0) * 1e-12 * static_cast<double>(std::max(xc.rows(), xc.cols())) : 0.0;
  Eigen::VectorXd shrink(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    // Directions below the numerical rank are dropped (pseudo-inverse behaviour at alpha = 0).
    shrink(i) = s(i) > cutoff ? s(i) / (s(i) * s(i) + alpha) : 0.0;
  }
  RidgeModel m;
  m.alpha = alpha;
  m.coef = svd.matrixV() * shrink.asDiagonal() * (svd.matrixU().transpose() * yc);
  m.intercept = mean_y - mean_x.dot(m.coef);
  return m;
}

const std::vector<double>& ridge_alpha_grid() {
  static const std::vector<double> grid{1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
  return grid;
}

RidgeSelection train_ridge(const TrainingSet& data, double validation_fraction, std::uint64_t seed) {
  if (data.size() < 2) throw std::invalid_argument("ridge needs at least two observations");
  Rng rng(derive_seed(seed, {2}));
  const auto order = permutation(rng, data.size());
  std::size_t n_val = static_cast<std::size_t>(std::lround(validation_fraction * static_cast<double>(data.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, data.size() - 1);
  const std::vector<std::size_t> val_rows(order.begin(), order.begin() + static_cast<long>(n_val));
  const std::vector<std::size_t> train_rows(order.begin() + static_cast<long>(n_val), order.end());
  const TrainingSet tr = data.subset(train_rows), va = data.subset(val_rows);
  const Eigen::MatrixXd xtr = ridge_features(tr), xva = ridge_features(va);
  const Eigen::VectorXd ytr = Eigen::Map<const Eigen::VectorXd>(tr.y.data(), static_cast<Eigen::Index>(tr.y.size()));
  const Eigen::VectorXd yva = Eigen::Map<const Eigen::VectorXd>(va.y.data(), static_cast<Eigen::Index>(va.y.size()));

  RidgeSelection sel;
  double best = std::numeric_limits<double>::infinity();
  double best_alpha = ridge_alpha_grid().front();
  for (double alpha : ridge_alpha_grid()) {
    const RidgeModel m = fit_ridge(xtr, ytr, alpha);
    const Eigen::VectorXd resid = (xva * m.coef).array() + m.intercept - yva.array();
    const double mse = resid.squaredNorm() / static_cast<double>(resid.size());
    sel.validation_mse.push_back(mse);
    if (mse < best) {
      best = mse;
      best_alpha = alpha;
    }
  }
  const Eigen::VectorXd yall = Eigen::Map<const Eigen::VectorXd>(data.y.data(), static_cast<Eigen::Index>(data.y.size()));
  sel.model = fit_ridge(ridge_features(data), yall, best_alpha);
  return sel;
}

}  // namespace crowdcate::model
