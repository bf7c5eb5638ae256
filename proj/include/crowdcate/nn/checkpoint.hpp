#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "crowdcate/nn/adam.hpp"
#include "crowdcate/nn/tensor.hpp"

namespace crowdcate::nn {

// Layout: [version:u8][magic "CCKP"][manifest_len:u32 LE][manifest JSON][payload]
// The payload is each tensor's values as little-endian float64, in manifest order.
inline constexpr std::uint8_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::optional<AdamConfig> optimizer;
  std::vector<NamedTensor> tensors;

  const Tensor& find(std::string_view name) const;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace crowdcate::nn
