#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace crowdcate::sim {

inline constexpr std::size_t kExitCount = 6;
inline constexpr std::size_t kTreatmentDims = 1 + kExitCount;

/// Seat occupancy bit vector, indexed by seat id (row-major seat order of the layout).
class Occupancy {
 public:
  Occupancy() = default;
  explicit Occupancy(std::size_t seats, bool occupied = false) : bits_(seats, occupied ? 1 : 0) {}
  explicit Occupancy(std::vector<std::uint8_t> bits);

  std::size_t size() const { return bits_.size(); }
  std::size_t count() const;
  bool operator[](std::size_t seat) const { return bits_[seat] != 0; }
  void set(std::size_t seat, bool occupied) { bits_[seat] = occupied ? 1 : 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  /// Packed little-endian bitset (seat i -> byte i/8, bit i%8).
  std::vector<std::uint8_t> packed() const;
  static Occupancy from_packed(const std::vector<std::uint8_t>& bytes, std::size_t seats);

  bool operator==(const Occupancy&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// Guidance plan: route guide on/off plus which exit doors are fully open (others half-open).
struct Treatment {
  bool route_guide = false;
  std::array<bool, kExitCount> doors{};

  /// Treatment with the two given doors (0-based exit indices) fully open.
  static Treatment with_doors(bool guide, std::size_t first, std::size_t second);
  static Treatment from_bits(const std::array<int, kTreatmentDims>& bits);

  bool valid() const;
  std::size_t open_door_count() const;
  /// z in {0,1}^7, route guide first.
  std::array<int, kTreatmentDims> bits() const;
  std::array<double, kTreatmentDims> encode() const;
  std::string to_string() const;

  bool operator==(const Treatment&) const = default;
};

}  // namespace crowdcate::sim
