#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "crowdcate/common/rng.hpp"
#include "crowdcate/nn/checkpoint.hpp"
#include "crowdcate/nn/layers.hpp"
#include "crowdcate/nn/tape.hpp"
#include "crowdcate/sim/layout.hpp"
#include "crowdcate/sim/types.hpp"

namespace crowdcate::model {

/// conv: two conv+relu+pool blocks over the [1, rows, cols] seat grid.
/// dense: MLP over the flat seat vector. none: the flat seat vector itself.
enum class EncoderKind { conv, dense, none };

std::string to_string(EncoderKind kind);
EncoderKind parse_encoder(const std::string& name);

struct Architecture {
  EncoderKind encoder = EncoderKind::conv;
  std::size_t grid_rows = sim::kDefaultRows;
  std::size_t grid_cols = sim::kDefaultCols;
  std::size_t seats = sim::kDefaultSeatCount;

  std::size_t channels1 = 8;
  std::size_t channels2 = 16;
  std::size_t kernel = 3;
  std::size_t padding = 1;
  std::size_t pool_window = 2;
  std::size_t pool_stride = 2;
  nn::PoolMode pool_mode = nn::PoolMode::mean;

  std::vector<std::size_t> dense_dims{64, 64};
  /// Hidden widths of the outcome head; the head adds a final identity layer of width 1.
  std::vector<std::size_t> head_hidden{64, 32};

  /// Values per sample fed to the encoder.
  std::size_t input_size() const;
  nn::Shape input_shape(std::size_t batch) const;
  /// Width of the flattened representation; throws nn::ShapeError if the pooling chain
  /// does not fit the grid.
  std::size_t representation_dim() const;

  nlohmann::json to_json() const;
  static Architecture from_json(const nlohmann::json& j);
  bool operator==(const Architecture&) const = default;
};

/// Encoder g plus single-head predictor h(g(x), z).
class Network {
 public:
  Network() = default;
  explicit Network(Architecture arch);

  const Architecture& architecture() const { return arch_; }

  void init(Rng& rng);
  std::vector<nn::Tensor*> parameters();
  std::vector<nn::NamedTensor> named_parameters() const;
  void load_parameters(const nn::Checkpoint& checkpoint);

  /// x: input_shape(N); returns the representation [N, representation_dim()].
  nn::Tensor& representation(nn::Tape& tape, nn::Tensor& x);
  /// z: [N, 7]; returns predictions [N, 1].
  nn::Tensor& head(nn::Tape& tape, nn::Tensor& rep, nn::Tensor& z);

  /// Tape-free inference using the same kernels.
  nn::Tensor encode(const nn::Tensor& x) const;
  nn::Tensor predict_from_representation(const nn::Tensor& rep, const nn::Tensor& z) const;

  const nn::ConvKernel& conv1() const { return conv1_; }
  const nn::ConvKernel& conv2() const { return conv2_; }
  const std::vector<nn::MlpLayer>& encoder_layers() const { return encoder_; }
  const std::vector<nn::MlpLayer>& head_layers() const { return head_; }

 private:
  Architecture arch_;
  nn::ConvKernel conv1_;
  nn::ConvKernel conv2_;
  std::vector<nn::MlpLayer> encoder_;
  std::vector<nn::MlpLayer> head_;
};

/// Encodes occupancies as rows of the network input (grid or seat vector).
nn::Tensor encode_inputs(const Architecture& arch, const sim::TheaterLayout& layout,
                         const std::vector<const sim::Occupancy*>& batch);
nn::Tensor encode_treatments(const std::vector<sim::Treatment>& treatments);

}  // namespace crowdcate::model
