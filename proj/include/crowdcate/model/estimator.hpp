#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdcate/model/ridge.hpp"
#include "crowdcate/model/train.hpp"
#include "crowdcate/scenario/generate.hpp"
#include "crowdcate/sim/simulate.hpp"

namespace crowdcate::model {

enum class ModelKind { sccfr, sctarnet, cfr, tarnet, mlp, ridge };

const std::vector<std::string>& model_kind_names();
std::string to_string(ModelKind kind);
/// Throws std::invalid_argument listing the valid names.
ModelKind parse_model_kind(const std::string& name);

/// Default architecture per estimator: conv encoder for the SC variants, a two-layer dense
/// encoder for TARNET/CFR, and a five-layer MLP on [x, z] for mlp.
Architecture default_architecture(ModelKind kind, const sim::TheaterLayout& layout);

const std::vector<double>& lambda_grid();

using OutcomeRow = std::array<double, scenario::kTreatmentCount>;

/// A trained single-outcome estimator (network or ridge) plus its manifest.
class Estimator {
 public:
  enum class Family { network, ridge };

  Estimator() = default;
  Estimator(Network network, TargetScaler scaler, nlohmann::json meta);
  Estimator(RidgeModel ridge, nlohmann::json meta);

  Family family() const { return family_; }
  const nlohmann::json& meta() const { return meta_; }
  nlohmann::json& meta() { return meta_; }
  const Network& network() const { return network_; }
  const RidgeModel& ridge() const { return ridge_; }
  const TargetScaler& scaler() const { return scaler_; }
  void set_optimizer(const nn::AdamConfig& adam) { optimizer_ = adam; }

  /// "SC-CFR", "SC-TARNET", "CFR", "TARNET", "MLP" or "Ridge", derived from the architecture
  /// and the IPM weight.
  std::string method_label() const;

  double predict(const sim::TheaterLayout& layout, const sim::Occupancy& x, const sim::Treatment& z) const;
  /// One row per occupancy, treatments in enumerate_treatments() order.
  std::vector<OutcomeRow> predict_tables(const sim::TheaterLayout& layout, const std::vector<sim::Occupancy>& xs) const;

  nn::Checkpoint to_checkpoint() const;
  static Estimator from_checkpoint(const nn::Checkpoint& checkpoint);
  void save(const std::filesystem::path& path) const;
  static Estimator load(const std::filesystem::path& path);

 private:
  Family family_ = Family::network;
  Network network_;
  TargetScaler scaler_;
  RidgeModel ridge_;
  nlohmann::json meta_ = nlohmann::json::object();
  std::optional<nn::AdamConfig> optimizer_;
};

struct LambdaTrial {
  double lambda = 0.0;
  double validation_mse = 0.0;
};

struct FitResult {
  Estimator estimator;
  TrainLog log;  // of the selected run; empty for ridge
  std::vector<LambdaTrial> lambda_trials;
};

/// Trains `kind` on factual data. sccfr/cfr without an explicit lambda run the lambda grid
/// and keep the run with the lowest validation MSE; sctarnet/tarnet/mlp force lambda 0.
/// `context` is merged into the manifest (outcome, layout hash, dataset hashes, ...).
FitResult fit_estimator(ModelKind kind, std::optional<double> lambda, const sim::TheaterLayout& layout,
                        const TrainingSet& data, const TrainConfig& base, const nlohmann::json& context);

/// Ground truth by simulation: reproduces the noiseless table exactly.
class OracleModel {
 public:
  OracleModel(const sim::Simulator& simulator, scenario::Outcome outcome) : sim_(&simulator), outcome_(outcome) {}
  std::vector<OutcomeRow> predict_tables(const std::vector<sim::Occupancy>& xs) const;

 private:
  const sim::Simulator* sim_;
  scenario::Outcome outcome_;
};

}  // namespace crowdcate::model
