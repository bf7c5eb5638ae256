#include "crowdcate/sim/types.hpp"

#include <algorithm>
#include <stdexcept>

namespace crowdcate::sim {

Occupancy::Occupancy(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t Occupancy::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<std::uint8_t> Occupancy::packed() const {
  std::vector<std::uint8_t> bytes((bits_.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) bytes[i / 8] = static_cast<std::uint8_t>(bytes[i / 8] | (1u << (i % 8)));
  }
  return bytes;
}

Occupancy Occupancy::from_packed(const std::vector<std::uint8_t>& bytes, std::size_t seats) {
  if (bytes.size() != (seats + 7) / 8) {
    throw std::invalid_argument("packed occupancy has " + std::to_string(bytes.size()) + " bytes, expected " +
                                std::to_string((seats + 7) / 8));
  }
  Occupancy occ(seats);
  for (std::size_t i = 0; i < seats; ++i) occ.set(i, (bytes[i / 8] >> (i % 8)) & 1u);
  return occ;
}

Treatment Treatment::with_doors(bool guide, std::size_t first, std::size_t second) {
  if (first >= kExitCount || second >= kExitCount || first == second) {
    throw std::invalid_argument("treatment needs two distinct door indices in [0, 6)");
  }
  Treatment t;
  t.route_guide = guide;
  t.doors[first] = true;
  t.doors[second] = true;
  return t;
}

Treatment Treatment::from_bits(const std::array<int, kTreatmentDims>& bits) {
  Treatment t;
  for (int b : bits) {
    if (b != 0 && b != 1) throw std::invalid_argument("treatment bits must be 0 or 1");
  }
  t.route_guide = bits[0] == 1;
  for (std::size_t d = 0; d < kExitCount; ++d) t.doors[d] = bits[d + 1] == 1;
  if (!t.valid()) throw std::invalid_argument("treatment must open exactly two doors fully, got " + t.to_string());
  return t;
}

std::size_t Treatment::open_door_count() const {
  return static_cast<std::size_t>(std::count(doors.begin(), doors.end(), true));
}

bool Treatment::valid() const { return open_door_count() == 2; }

std::array<int, kTreatmentDims> Treatment::bits() const {
  std::array<int, kTreatmentDims> z{};
  z[0] = route_guide ? 1 : 0;
  for (std::size_t d = 0; d < kExitCount; ++d) z[d + 1] = doors[d] ? 1 : 0;
  return z;
}

std::array<double, kTreatmentDims> Treatment::encode() const {
  std::array<double, kTreatmentDims> z{};
  const auto b = bits();
  for (std::size_t i = 0; i < kTreatmentDims; ++i) z[i] = b[i];
  return z;
}

std::string Treatment::to_string() const {
  std::string s;
  for (int b : bits()) s.push_back(b ? '1' : '0');
  return s;
}

}  // namespace crowdcate::sim
