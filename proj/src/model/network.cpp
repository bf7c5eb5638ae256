#include "crowdcate/model/network.hpp"

#include <stdexcept>

#include <fmt/format.h>

namespace crowdcate::model {

using nn::Tensor;

std::string to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::conv:
      return "conv";
    case EncoderKind::dense:
      return "dense";
    case EncoderKind::none:
      return "none";
  }
  return "?";
}

EncoderKind parse_encoder(const std::string& name) {
  if (name == "conv") return EncoderKind::conv;
  if (name == "dense") return EncoderKind::dense;
  if (name == "none") return EncoderKind::none;
  throw std::invalid_argument(fmt::format("unknown encoder '{}'", name));
}

std::size_t Architecture::input_size() const {
  return encoder == EncoderKind::conv ? grid_rows * grid_cols : seats;
}

nn::Shape Architecture::input_shape(std::size_t batch) const {
  if (encoder == EncoderKind::conv) return {batch, 1, grid_rows, grid_cols};
  return {batch, seats};
}

std::size_t Architecture::representation_dim() const {
  switch (encoder) {
    case EncoderKind::conv: {
      std::size_t h = nn::conv_output_extent(grid_rows, kernel, padding, 1);
      std::size_t w = nn::conv_output_extent(grid_cols, kernel, padding, 1);
      h = nn::conv_output_extent(h, pool_window, 0, pool_stride);
      w = nn::conv_output_extent(w, pool_window, 0, pool_stride);
      h = nn::conv_output_extent(h, kernel, padding, 1);
      w = nn::conv_output_extent(w, kernel, padding, 1);
      h = nn::conv_output_extent(h, pool_window, 0, pool_stride);
      w = nn::conv_output_extent(w, pool_window, 0, pool_stride);
      return channels2 * h * w;
    }
    case EncoderKind::dense:
      if (dense_dims.empty()) throw nn::ShapeError("dense encoder needs at least one layer");
      return dense_dims.back();
    case EncoderKind::none:
      return seats;
  }
  return 0;
}

nlohmann::json Architecture::to_json() const {
  nlohmann::json j{{"encoder", to_string(encoder)},
                   {"grid_rows", grid_rows},
                   {"grid_cols", grid_cols},
                   {"seats", seats},
                   {"head_hidden", head_hidden}};
  if (encoder == EncoderKind::conv) {
    j["channels"] = {channels1, channels2};
    j["kernel"] = kernel;
    j["padding"] = padding;
    j["pool_window"] = pool_window;
    j["pool_stride"] = pool_stride;
    j["pool_mode"] = pool_mode == nn::PoolMode::mean ? "mean" : "sum";
  } else if (encoder == EncoderKind::dense) {
    j["dense_dims"] = dense_dims;
  }
  return j;
}

Architecture Architecture::from_json(const nlohmann::json& j) {
  Architecture a;
  a.encoder = parse_encoder(j.at("encoder").get<std::string>());
  a.grid_rows = j.at("grid_rows").get<std::size_t>();
  a.grid_cols = j.at("grid_cols").get<std::size_t>();
  a.seats = j.at("seats").get<std::size_t>();
  a.head_hidden = j.at("head_hidden").get<std::vector<std::size_t>>();
  if (a.encoder == EncoderKind::conv) {
    const auto ch = j.at("channels").get<std::vector<std::size_t>>();
    if (ch.size() != 2) throw std::invalid_argument("conv encoder needs two channel counts");
    a.channels1 = ch[0];
    a.channels2 = ch[1];
    a.kernel = j.at("kernel").get<std::size_t>();
    a.padding = j.at("padding").get<std::size_t>();
    a.pool_window = j.at("pool_window").get<std::size_t>();
    a.pool_stride = j.at("pool_stride").get<std::size_t>();
    a.pool_mode = j.at("pool_mode").get<std::string>() == "sum" ? nn::PoolMode::sum : nn::PoolMode::mean;
  } else if (a.encoder == EncoderKind::dense) {
    a.dense_dims = j.at("dense_dims").get<std::vector<std::size_t>>();
  }
  return a;
}

Network::Network(Architecture arch) : arch_(std::move(arch)) {
  if (arch_.encoder == EncoderKind::conv) {
    conv1_ = nn::ConvKernel(arch_.channels1, 1, arch_.kernel, arch_.kernel);
    conv2_ = nn::ConvKernel(arch_.channels2, arch_.channels1, arch_.kernel, arch_.kernel);
  } else if (arch_.encoder == EncoderKind::dense) {
    std::size_t in = arch_.seats;
    for (std::size_t width : arch_.dense_dims) {
      encoder_.emplace_back(in, width, nn::Activation::relu);
      in = width;
    }
  }
  std::size_t in = arch_.representation_dim() + sim::kTreatmentDims;
  for (std::size_t width : arch_.head_hidden) {
    head_.emplace_back(in, width, nn::Activation::relu);
    in = width;
  }
  head_.emplace_back(in, 1, nn::Activation::identity);
}

void Network::init(Rng& rng) {
  if (arch_.encoder == EncoderKind::conv) {
    nn::glorot_init(conv1_, rng);
    nn::glorot_init(conv2_, rng);
  }
  for (auto& layer : encoder_) nn::glorot_init(layer, rng);
  for (auto& layer : head_) nn::glorot_init(layer, rng);
}

std::vector<Tensor*> Network::parameters() {
  std::vector<Tensor*> out;
  if (arch_.encoder == EncoderKind::conv) {
    out.insert(out.end(), {&conv1_.weights, &conv1_.bias, &conv2_.weights, &conv2_.bias});
  }
  for (auto& layer : encoder_) out.insert(out.end(), {&layer.weights, &layer.bias});
  for (auto& layer : head_) out.insert(out.end(), {&layer.weights, &layer.bias});
  return out;
}

std::vector<nn::NamedTensor> Network::named_parameters() const {
  std::vector<nn::NamedTensor> out;
  auto add = [&out](std::string name, const Tensor& t) {
    Tensor copy = t;
    copy.drop_grad();
    out.push_back({std::move(name), std::move(copy)});
  };
  if (arch_.encoder == EncoderKind::conv) {
    add("conv1.weights", conv1_.weights);
    add("conv1.bias", conv1_.bias);
    add("conv2.weights", conv2_.weights);
    add("conv2.bias", conv2_.bias);
  }
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    add(fmt::format("encoder.{}.weights", i), encoder_[i].weights);
    add(fmt::format("encoder.{}.bias", i), encoder_[i].bias);
  }
  for (std::size_t i = 0; i < head_.size(); ++i) {
    add(fmt::format("head.{}.weights", i), head_[i].weights);
    add(fmt::format("head.{}.bias", i), head_[i].bias);
  }
  return out;
}

void Network::load_parameters(const nn::Checkpoint& checkpoint) {
  const auto names = named_parameters();
  const auto params = parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& src = checkpoint.find(names[i].name);
    if (src.shape() != params[i]->shape()) {
      throw nn::CheckpointError(fmt::format("tensor {} has shape {}, architecture expects {}", names[i].name,
                                            nn::shape_string(src.shape()), nn::shape_string(params[i]->shape())));
    }
    *params[i] = src;
  }
}

Tensor& Network::representation(nn::Tape& tape, Tensor& x) {
  switch (arch_.encoder) {
    case EncoderKind::conv: {
      Tensor* h = &nn::conv2d(tape, x, conv1_, arch_.padding, 1);
      h = &nn::relu(tape, *h);
      h = &nn::avg_pool2d(tape, *h, arch_.pool_window, arch_.pool_stride, arch_.pool_mode);
      h = &nn::conv2d(tape, *h, conv2_, arch_.padding, 1);
      h = &nn::relu(tape, *h);
      h = &nn::avg_pool2d(tape, *h, arch_.pool_window, arch_.pool_stride, arch_.pool_mode);
      return nn::flatten(tape, *h);
    }
    case EncoderKind::dense:
      return nn::mlp(tape, x, encoder_);
    case EncoderKind::none:
      return x;
  }
  throw std::logic_error("unknown encoder");
}

Tensor& Network::head(nn::Tape& tape, Tensor& rep, Tensor& z) {
  Tensor& joined = nn::concat_columns(tape, rep, z);
  return nn::mlp(tape, joined, head_);
}

Tensor Network::encode(const Tensor& x) const {
  switch (arch_.encoder) {
    case EncoderKind::conv: {
      auto relu_in_place = [](Tensor& t) {
        for (double& v : t.data()) v = v < 0.0 ? 0.0 : v;
      };
      Tensor h = nn::conv2d_forward(x, conv1_, arch_.padding, 1);
      relu_in_place(h);
      h = nn::avg_pool2d_forward(h, arch_.pool_window, arch_.pool_stride, arch_.pool_mode);
      h = nn::conv2d_forward(h, conv2_, arch_.padding, 1);
      relu_in_place(h);
      h = nn::avg_pool2d_forward(h, arch_.pool_window, arch_.pool_stride, arch_.pool_mode);
      const std::size_t n = h.dim(0);
      h.reshape({n, h.size() / n});
      return h;
    }
    case EncoderKind::dense:
      return nn::mlp_forward(encoder_, x);
    case EncoderKind::none:
      return x.reshaped({x.dim(0), x.size() / x.dim(0)});
  }
  throw std::logic_error("unknown encoder");
}

Tensor Network::predict_from_representation(const Tensor& rep, const Tensor& z) const {
  const std::size_t n = rep.dim(0), a = rep.dim(1), b = z.dim(1);
  if (z.dim(0) != n) throw nn::ShapeError("representation and treatment batches differ in size");
  Tensor joined({n, a + b});
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(rep.data().begin() + static_cast<std::ptrdiff_t>(s * a), a,
                joined.data().begin() + static_cast<std::ptrdiff_t>(s * (a + b)));
    std::copy_n(z.data().begin() + static_cast<std::ptrdiff_t>(s * b), b,
                joined.data().begin() + static_cast<std::ptrdiff_t>(s * (a + b) + a));
  }
  return nn::mlp_forward(head_, joined);
}

Tensor encode_inputs(const Architecture& arch, const sim::TheaterLayout& layout,
                     const std::vector<const sim::Occupancy*>& batch) {
  if (layout.rows() != arch.grid_rows || layout.cols() != arch.grid_cols || layout.seat_count() != arch.seats) {
    throw nn::ShapeError(fmt::format("layout {}x{} with {} seats does not match the model input {}x{} with {} seats",
                                     layout.rows(), layout.cols(), layout.seat_count(), arch.grid_rows,
                                     arch.grid_cols, arch.seats));
  }
  Tensor x(arch.input_shape(batch.size()));
  const std::size_t stride = arch.input_size();
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const sim::Occupancy& occ = *batch[n];
    if (occ.size() != layout.seat_count()) throw nn::ShapeError("occupancy size does not match the layout");
    double* row = x.data().data() + n * stride;
    for (std::size_t s = 0; s < occ.size(); ++s) {
      if (!occ[s]) continue;
      row[arch.encoder == EncoderKind::conv ? layout.seat_cell(s) : s] = 1.0;
    }
  }
  return x;
}

Tensor encode_treatments(const std::vector<sim::Treatment>& treatments) {
  Tensor z({treatments.size(), sim::kTreatmentDims});
  for (std::size_t n = 0; n < treatments.size(); ++n) {
    const auto bits = treatments[n].encode();
    for (std::size_t k = 0; k < sim::kTreatmentDims; ++k) z[n * sim::kTreatmentDims + k] = bits[k];
  }
  return z;
}

}  // namespace crowdcate::model
