#include "crowdcate/nn/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "crowdcate/common/digest.hpp"

namespace crowdcate::nn {

namespace {

constexpr char kMagic[4] = {'C', 'C', 'K', 'P'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f64(std::string& out, double value) {
  const auto bits = std::bit_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

std::uint64_t get_le(std::string_view bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(i)]))
         << (8 * i);
  }
  return v;
}

}  // namespace

const Tensor& Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw CheckpointError("checkpoint has no tensor named " + std::string(name));
}

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  nlohmann::json manifest;
  manifest["meta"] = checkpoint.meta;
  manifest["tensors"] = nlohmann::json::array();
  for (const auto& t : checkpoint.tensors) {
    manifest["tensors"].push_back({{"name", t.name}, {"shape", t.tensor.shape()}});
  }
  if (checkpoint.optimizer) {
    const auto& o = *checkpoint.optimizer;
    manifest["optimizer"] = {{"kind", "adam"},
                             {"learning_rate", o.learning_rate},
                             {"beta1", o.beta1},
                             {"beta2", o.beta2},
                             {"epsilon", o.epsilon}};
  }
  const std::string text = manifest.dump();

  std::string out;
  out.push_back(static_cast<char>(kCheckpointVersion));
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto& t : checkpoint.tensors) {
    for (double v : t.tensor.data()) put_f64(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 9) throw CheckpointError("checkpoint truncated before header");
  const auto version = static_cast<std::uint8_t>(bytes[0]);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  if (std::memcmp(bytes.data() + 1, kMagic, sizeof(kMagic)) != 0) throw CheckpointError("bad checkpoint magic");
  const auto manifest_len = static_cast<std::size_t>(get_le(bytes, 5, 4));
  if (bytes.size() < 9 + manifest_len) throw CheckpointError("checkpoint truncated inside manifest");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(9, manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }

  Checkpoint checkpoint;
  checkpoint.meta = manifest.value("meta", nlohmann::json::object());
  if (manifest.contains("optimizer")) {
    const auto& o = manifest["optimizer"];
    checkpoint.optimizer = AdamConfig{o.at("learning_rate").get<double>(), o.at("beta1").get<double>(),
                                      o.at("beta2").get<double>(), o.at("epsilon").get<double>()};
  }
  std::size_t offset = 9 + manifest_len;
  for (const auto& entry : manifest.at("tensors")) {
    Shape shape = entry.at("shape").get<Shape>();
    const std::size_t count = shape_size(shape);
    if (bytes.size() < offset + 8 * count) throw CheckpointError("checkpoint truncated inside tensor payload");
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<double>(get_le(bytes, offset + 8 * i, 8));
    offset += 8 * count;
    checkpoint.tensors.push_back({entry.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values))});
  }
  if (offset != bytes.size()) throw CheckpointError("trailing bytes after checkpoint payload");
  return checkpoint;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace crowdcate::nn
