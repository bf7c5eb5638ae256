#include "crowdcate/model/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "crowdcate/scenario/generate.hpp"

namespace crowdcate::model {

using nn::Tensor;

TrainingSet TrainingSet::subset(const std::vector<std::size_t>& rows) const {
  TrainingSet out;
  for (std::size_t r : rows) {
    out.x.push_back(x.at(r));
    out.z.push_back(z.at(r));
    out.y.push_back(y.at(r));
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(ipm_weight >= 0.0) || !std::isfinite(ipm_weight)) throw std::invalid_argument("ipm_weight must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (epochs == 0) throw std::invalid_argument("epochs must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("validation_fraction must be in [0, 1)");
  }
  if (!(adam.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"ipm_weight", ipm_weight},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"mmd_kernel", mmd.kernel == MmdKernel::linear ? "linear" : "rbf"},
          {"mmd_bandwidth", mmd.bandwidth},
          {"min_group_size", min_group_size},
          {"learning_rate", adam.learning_rate},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"epsilon", adam.epsilon},
          {"validation_fraction", validation_fraction},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.ipm_weight = j.at("ipm_weight").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.mmd.kernel = j.at("mmd_kernel").get<std::string>() == "rbf" ? MmdKernel::rbf : MmdKernel::linear;
  c.mmd.bandwidth = j.at("mmd_bandwidth").get<double>();
  c.min_group_size = j.at("min_group_size").get<std::size_t>();
  c.adam.learning_rate = j.at("learning_rate").get<double>();
  c.adam.beta1 = j.at("beta1").get<double>();
  c.adam.beta2 = j.at("beta2").get<double>();
  c.adam.epsilon = j.at("epsilon").get<double>();
  c.validation_fraction = j.at("validation_fraction").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

TrainingDiverged::TrainingDiverged(std::size_t epoch, double loss)
    : std::runtime_error(fmt::format("training diverged at epoch {} (loss {})", epoch, loss)), epoch_(epoch) {}

TargetScaler TargetScaler::fit(const std::vector<double>& y) {
  TargetScaler s;
  if (y.empty()) return s;
  double total = 0.0;
  for (double v : y) total += v;
  s.mean = total / static_cast<double>(y.size());
  double sq = 0.0;
  for (double v : y) sq += (v - s.mean) * (v - s.mean);
  const double sd = std::sqrt(sq / static_cast<double>(y.size()));
  s.scale = sd > 1e-12 ? sd : 1.0;
  return s;
}

Batch make_batch(const Architecture& arch, const sim::TheaterLayout& layout, const TrainingSet& data,
                 const std::vector<std::size_t>& rows, const TargetScaler& scaler) {
  std::vector<const sim::Occupancy*> xs;
  std::vector<sim::Treatment> zs;
  Batch b;
  b.y = Tensor({rows.size(), 1});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    xs.push_back(&data.x.at(rows[i]));
    zs.push_back(data.z.at(rows[i]));
    b.y[i] = scaler.forward(data.y.at(rows[i]));
    b.treatment_ids.push_back(scenario::treatment_index(data.z[rows[i]]));
  }
  b.x = encode_inputs(arch, layout, xs);
  b.z = encode_treatments(zs);
  return b;
}

LossParts batch_loss(Network& network, Batch& batch, const TrainConfig& config, bool with_gradients) {
  auto params = network.parameters();
  if (with_gradients) {
    for (Tensor* p : params) p->zero_grad();
  }
  nn::Tape tape;
  Tensor& rep = network.representation(tape, batch.x);
  Tensor& pred = network.head(tape, rep, batch.z);
  Tensor& fit = nn::mse(tape, pred, batch.y);
  LossParts parts;
  parts.mse = fit.item();
  Tensor* total = &fit;
  if (config.ipm_weight > 0.0) {
    Tensor& ipm = batch_ipm_penalty(tape, rep, batch.treatment_ids, config.mmd, config.min_group_size);
    parts.ipm = ipm.item();
    total = &nn::add_scaled(tape, fit, ipm, config.ipm_weight);
  }
  parts.total = total->item();
  if (with_gradients) tape.backward(*total);
  return parts;
}

namespace {

constexpr std::size_t kEvalChunk = 256;

std::vector<double> predict_factual(const Network& network, const TargetScaler& scaler,
                                    const sim::TheaterLayout& layout, const TrainingSet& data) {
  std::vector<double> out;
  out.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += kEvalChunk) {
    const std::size_t end = std::min(data.size(), start + kEvalChunk);
    std::vector<const sim::Occupancy*> xs;
    std::vector<sim::Treatment> zs;
    for (std::size_t i = start; i < end; ++i) {
      xs.push_back(&data.x[i]);
      zs.push_back(data.z[i]);
    }
    const Tensor rep = network.encode(encode_inputs(network.architecture(), layout, xs));
    const Tensor pred = network.predict_from_representation(rep, encode_treatments(zs));
    for (double v : pred.data()) out.push_back(scaler.inverse(v));
  }
  return out;
}

}  // namespace

double factual_mse(const Network& network, const TargetScaler& scaler, const sim::TheaterLayout& layout,
                   const TrainingSet& data) {
  if (data.size() == 0) return 0.0;
  const auto pred = predict_factual(network, scaler, layout, data);
  double sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sq += (pred[i] - data.y[i]) * (pred[i] - data.y[i]);
  return sq / static_cast<double>(pred.size());
}

TrainedNetwork train_network(const Architecture& arch, const sim::TheaterLayout& layout, const TrainingSet& data,
                             const TrainConfig& config) {
  config.validate();
  if (data.size() == 0) throw std::invalid_argument("cannot train on an empty dataset");

  std::vector<std::size_t> train_rows, val_rows;
  {
    Rng split_rng(derive_seed(config.seed, {2}));
    const auto order = permutation(split_rng, data.size());
    std::size_t n_val = static_cast<std::size_t>(std::lround(config.validation_fraction * static_cast<double>(data.size())));
    if (config.validation_fraction > 0.0 && n_val == 0 && data.size() > 1) n_val = 1;
    if (n_val >= data.size()) n_val = data.size() - 1;
    val_rows.assign(order.begin(), order.begin() + static_cast<long>(n_val));
    train_rows.assign(order.begin() + static_cast<long>(n_val), order.end());
  }
  const TrainingSet train_set = data.subset(train_rows);
  const TrainingSet val_set = val_rows.empty() ? train_set : data.subset(val_rows);

  TrainedNetwork result{Network(arch), TargetScaler::fit(train_set.y), {}};
  Network& net = result.network;
  {
    Rng init_rng(derive_seed(config.seed, {1}));
    net.init(init_rng);
  }
  nn::AdamState adam(config.adam);
  auto params = net.parameters();
  std::vector<Tensor> best;
  double best_mse = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(config.seed, {3, epoch}));
    const auto order = permutation(shuffle_rng, train_set.size());
    double loss_sum = 0.0, ipm_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::vector<std::size_t> rows(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(end));
      Batch batch = make_batch(arch, layout, train_set, rows, result.scaler);
      const LossParts parts = batch_loss(net, batch, config, true);
      if (!std::isfinite(parts.total)) throw TrainingDiverged(epoch, parts.total);
      adam.step(params);
      loss_sum += parts.total;
      ipm_sum += parts.ipm;
      ++batches;
    }
    const double val_mse = factual_mse(net, result.scaler, layout, val_set);
    if (!std::isfinite(val_mse)) throw TrainingDiverged(epoch, val_mse);
    result.log.epochs.push_back({epoch, loss_sum / static_cast<double>(batches), val_mse,
                                 ipm_sum / static_cast<double>(batches)});
    if (val_mse < best_mse) {
      best_mse = val_mse;
      result.log.best_epoch = epoch;
      best.clear();
      for (Tensor* p : params) best.push_back(*p);
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    *params[i] = best[i];
    params[i]->drop_grad();
  }
  result.log.best_validation_mse = best_mse;
  return result;
}

}  // namespace crowdcate::model
