#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "crowdcate/model/mmd.hpp"
#include "crowdcate/model/network.hpp"
#include "crowdcate/nn/adam.hpp"
#include "crowdcate/sim/layout.hpp"
#include "crowdcate/sim/types.hpp"

namespace crowdcate::model {

/// Factual observations only: covariates, assigned treatment, one noisy outcome component.
struct TrainingSet {
  std::vector<sim::Occupancy> x;
  std::vector<sim::Treatment> z;
  std::vector<double> y;

  std::size_t size() const { return y.size(); }
  TrainingSet subset(const std::vector<std::size_t>& rows) const;
};

struct TrainConfig {
  double ipm_weight = 0.0;
  std::size_t batch_size = 64;
  std::size_t epochs = 60;
  MmdConfig mmd;
  std::size_t min_group_size = 2;
  nn::AdamConfig adam;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;     // mean batch loss, standardized targets
  double validation_mse = 0.0; // original outcome units
  double mean_batch_ipm = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_validation_mse = 0.0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t epoch, double loss);
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

/// y_std = (y - mean) / scale; scale is the training std (1 if degenerate).
struct TargetScaler {
  double mean = 0.0;
  double scale = 1.0;

  static TargetScaler fit(const std::vector<double>& y);
  double forward(double y) const { return (y - mean) / scale; }
  double inverse(double y) const { return y * scale + mean; }
};

/// Holds out validation_fraction of `data` (seeded), trains with seeded per-epoch shuffling,
/// and keeps the parameters of the epoch with the lowest validation MSE.
struct TrainedNetwork {
  Network network;
  TargetScaler scaler;
  TrainLog log;
};
TrainedNetwork train_network(const Architecture& arch, const sim::TheaterLayout& layout, const TrainingSet& data,
                             const TrainConfig& config);

/// Mean squared factual error in outcome units.
double factual_mse(const Network& network, const TargetScaler& scaler, const sim::TheaterLayout& layout,
                   const TrainingSet& data);

/// One mini-batch in network form; y is already standardized.
struct Batch {
  nn::Tensor x;
  nn::Tensor z;
  nn::Tensor y;
  std::vector<std::size_t> treatment_ids;  // enumerate order, for IPM grouping
};
Batch make_batch(const Architecture& arch, const sim::TheaterLayout& layout, const TrainingSet& data,
                 const std::vector<std::size_t>& rows, const TargetScaler& scaler);

struct LossParts {
  double total = 0.0;
  double mse = 0.0;
  double ipm = 0.0;
};

/// MSE + ipm_weight * batch IPM. The IPM term is not evaluated at all when ipm_weight == 0.
/// With `with_gradients`, parameter gradients are reset and then filled by backward().
LossParts batch_loss(Network& network, Batch& batch, const TrainConfig& config, bool with_gradients);

}  // namespace crowdcate::model
