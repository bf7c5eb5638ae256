#include "crowdcate/model/estimator.hpp"

#include <algorithm>

#include <fmt/format.h>

namespace crowdcate::model {

using nlohmann::json;

const std::vector<std::string>& model_kind_names() {
  static const std::vector<std::string> names{"sccfr", "sctarnet", "cfr", "tarnet", "mlp", "ridge"};
  return names;
}

std::string to_string(ModelKind kind) { return model_kind_names().at(static_cast<std::size_t>(kind)); }

ModelKind parse_model_kind(const std::string& name) {
  const auto& names = model_kind_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    std::string valid;
    for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
    throw std::invalid_argument(fmt::format("unknown model '{}' (valid: {})", name, valid));
  }
  return static_cast<ModelKind>(it - names.begin());
}

Architecture default_architecture(ModelKind kind, const sim::TheaterLayout& layout) {
  Architecture a;
  a.grid_rows = layout.rows();
  a.grid_cols = layout.cols();
  a.seats = layout.seat_count();
  switch (kind) {
    case ModelKind::sccfr:
    case ModelKind::sctarnet:
    case ModelKind::ridge:
      a.encoder = EncoderKind::conv;
      break;
    case ModelKind::cfr:
    case ModelKind::tarnet:
      a.encoder = EncoderKind::dense;
      break;
    case ModelKind::mlp:
      a.encoder = EncoderKind::none;
      a.head_hidden = {64, 64, 32, 16};
      break;
  }
  return a;
}

const std::vector<double>& lambda_grid() {
  static const std::vector<double> grid{0.1, 1.0, 10.0};
  return grid;
}

Estimator::Estimator(Network network, TargetScaler scaler, json meta)
    : family_(Family::network), network_(std::move(network)), scaler_(scaler), meta_(std::move(meta)) {}

Estimator::Estimator(RidgeModel ridge, json meta) : family_(Family::ridge), ridge_(std::move(ridge)), meta_(std::move(meta)) {}

std::string Estimator::method_label() const {
  if (family_ == Family::ridge) return "Ridge";
  const double lambda = meta_.value("ipm_weight", 0.0);
  switch (network_.architecture().encoder) {
    case EncoderKind::conv:
      return lambda > 0.0 ? "SC-CFR" : "SC-TARNET";
    case EncoderKind::dense:
      return lambda > 0.0 ? "CFR" : "TARNET";
    case EncoderKind::none:
      return "MLP";
  }
  return "?";
}

double Estimator::predict(const sim::TheaterLayout& layout, const sim::Occupancy& x, const sim::Treatment& z) const {
  if (family_ == Family::ridge) return ridge_.predict(ridge_features(x, z));
  const nn::Tensor rep = network_.encode(encode_inputs(network_.architecture(), layout, {&x}));
  return scaler_.inverse(network_.predict_from_representation(rep, encode_treatments({z}))[0]);
}

std::vector<OutcomeRow> Estimator::predict_tables(const sim::TheaterLayout& layout,
                                                  const std::vector<sim::Occupancy>& xs) const {
  const auto& treatments = scenario::enumerate_treatments();
  std::vector<OutcomeRow> out(xs.size());
  if (family_ == Family::ridge) {
    for (std::size_t n = 0; n < xs.size(); ++n) {
      for (std::size_t t = 0; t < treatments.size(); ++t) out[n][t] = ridge_.predict(ridge_features(xs[n], treatments[t]));
    }
    return out;
  }
  if (meta_.contains("layout_hash") && meta_["layout_hash"].get<std::string>() != layout.hash()) {
    throw std::invalid_argument("model was trained on a different layout");
  }
  const nn::Tensor z = encode_treatments(treatments);
  for (std::size_t n = 0; n < xs.size(); ++n) {
    const nn::Tensor rep = network_.encode(encode_inputs(network_.architecture(), layout, {&xs[n]}));
    // Broadcast the single representation row against all treatments.
    nn::Tensor reps({treatments.size(), rep.dim(1)});
    for (std::size_t t = 0; t < treatments.size(); ++t) {
      std::copy(rep.data().begin(), rep.data().end(), reps.data().begin() + static_cast<long>(t * rep.dim(1)));
    }
    const nn::Tensor pred = network_.predict_from_representation(reps, z);
    for (std::size_t t = 0; t < treatments.size(); ++t) out[n][t] = scaler_.inverse(pred[t]);
  }
  return out;
}

nn::Checkpoint Estimator::to_checkpoint() const {
  nn::Checkpoint ck;
  ck.meta = meta_;
  ck.optimizer = optimizer_;
  if (family_ == Family::ridge) {
    ck.meta["family"] = "ridge";
    ck.meta["ridge_alpha"] = ridge_.alpha;
    nn::Tensor coef({static_cast<std::size_t>(ridge_.coef.size())});
    std::copy(ridge_.coef.data(), ridge_.coef.data() + ridge_.coef.size(), coef.data().begin());
    ck.tensors.push_back({"ridge.coef", std::move(coef)});
    ck.tensors.push_back({"ridge.intercept", nn::Tensor::scalar(ridge_.intercept)});
    return ck;
  }
  ck.meta["family"] = "network";
  ck.meta["architecture"] = network_.architecture().to_json();
  ck.meta["target_scaler"] = {{"mean", scaler_.mean}, {"scale", scaler_.scale}};
  ck.tensors = network_.named_parameters();
  return ck;
}

Estimator Estimator::from_checkpoint(const nn::Checkpoint& ck) {
  const std::string family = ck.meta.value("family", std::string());
  Estimator e;
  e.meta_ = ck.meta;
  e.optimizer_ = ck.optimizer;
  if (family == "ridge") {
    e.family_ = Family::ridge;
    const nn::Tensor& coef = ck.find("ridge.coef");
    e.ridge_.coef = Eigen::Map<const Eigen::VectorXd>(coef.data().data(), static_cast<Eigen::Index>(coef.size()));
    e.ridge_.intercept = ck.find("ridge.intercept").item();
    e.ridge_.alpha = ck.meta.value("ridge_alpha", 0.0);
    return e;
  }
  if (family != "network") throw nn::CheckpointError("checkpoint does not describe a known model family");
  try {
    e.family_ = Family::network;
    e.network_ = Network(Architecture::from_json(ck.meta.at("architecture")));
    e.network_.load_parameters(ck);
    e.scaler_.mean = ck.meta.at("target_scaler").at("mean").get<double>();
    e.scaler_.scale = ck.meta.at("target_scaler").at("scale").get<double>();
  } catch (const json::exception& ex) {
    throw nn::CheckpointError(fmt::format("malformed model manifest: {}", ex.what()));
  }
  return e;
}

void Estimator::save(const std::filesystem::path& path) const { nn::save_checkpoint(path, to_checkpoint()); }

Estimator Estimator::load(const std::filesystem::path& path) { return from_checkpoint(nn::load_checkpoint(path)); }

FitResult fit_estimator(ModelKind kind, std::optional<double> lambda, const sim::TheaterLayout& layout,
                        const TrainingSet& data, const TrainConfig& base, const json& context) {
  json meta = context;
  meta["layout_hash"] = layout.hash();
  FitResult result;
  if (kind == ModelKind::ridge) {
    const RidgeSelection sel = train_ridge(data, base.validation_fraction, base.seed);
    meta["train_config"] = {{"validation_fraction", base.validation_fraction}, {"seed", base.seed}};
    meta["ridge_validation_mse"] = sel.validation_mse;
    result.estimator = Estimator(sel.model, std::move(meta));
    return result;
  }

  const bool balanced = kind == ModelKind::sccfr || kind == ModelKind::cfr;
  std::vector<double> candidates;
  if (!balanced) {
    candidates = {0.0};
  } else if (lambda) {
    candidates = {*lambda};
  } else {
    candidates = lambda_grid();
  }
  const Architecture arch = default_architecture(kind, layout);
  std::optional<TrainedNetwork> best;
  double best_lambda = 0.0;
  for (double lam : candidates) {
    TrainConfig cfg = base;
    cfg.ipm_weight = lam;
    TrainedNetwork run = train_network(arch, layout, data, cfg);
    result.lambda_trials.push_back({lam, run.log.best_validation_mse});
    if (!best || run.log.best_validation_mse < best->log.best_validation_mse) {
      best = std::move(run);
      best_lambda = lam;
    }
  }
  TrainConfig chosen = base;
  chosen.ipm_weight = best_lambda;
  meta["ipm_weight"] = best_lambda;
  meta["train_config"] = chosen.to_json();
  meta["best_epoch"] = best->log.best_epoch;
  meta["validation_mse"] = best->log.best_validation_mse;
  result.log = best->log;
  result.estimator = Estimator(std::move(best->network), best->scaler, std::move(meta));
  result.estimator.set_optimizer(chosen.adam);
  return result;
}

std::vector<OutcomeRow> OracleModel::predict_tables(const std::vector<sim::Occupancy>& xs) const {
  std::vector<OutcomeRow> out(xs.size());
  for (std::size_t n = 0; n < xs.size(); ++n) {
    const auto table = scenario::simulate_table(*sim_, xs[n]);
    for (std::size_t t = 0; t < table.size(); ++t) out[n][t] = table[t].get(outcome_);
  }
  return out;
}

}  // namespace crowdcate::model
