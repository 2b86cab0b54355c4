#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "simrod/tensor.hpp"

namespace simrod {

enum class BayerPattern { rggb };

/// Raw sensor mosaic: height x width u16 samples, row-major.
struct BayerFrame {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint16_t> samples;
  BayerPattern pattern = BayerPattern::rggb;
  std::uint16_t black_level = 0;
  std::uint16_t white_level = 65535;

  std::uint16_t at(std::size_t row, std::size_t col) const { return samples[row * width + col]; }
  std::uint16_t& at(std::size_t row, std::size_t col) { return samples[row * width + col]; }

  /// Throws ConfigError if the frame breaks its invariants.
  void validate() const;

  friend bool operator==(const BayerFrame&, const BayerFrame&) = default;
};

/// Packed plane order.
enum Plane : std::size_t { kR = 0, kG1 = 1, kG2 = 2, kB = 3 };
inline constexpr std::size_t kPackedPlanes = 4;

/// Half-resolution four-plane image (R, G1, G2, B), values in [0, 1].
class PackedRaw {
 public:
  PackedRaw() = default;
  PackedRaw(std::size_t height, std::size_t width);
  /// Adopts a [4, H, W] tensor; throws ShapeError on other shapes and
  /// ConfigError on values outside [0, 1].
  explicit PackedRaw(Tensor planes);

  std::size_t height() const { return planes_.dim(1); }
  std::size_t width() const { return planes_.dim(2); }
  float& at(std::size_t plane, std::size_t row, std::size_t col) {
    return planes_[(plane * height() + row) * width() + col];
  }
  float at(std::size_t plane, std::size_t row, std::size_t col) const {
    return planes_[(plane * height() + row) * width() + col];
  }
  const Tensor& tensor() const { return planes_; }

  friend bool operator==(const PackedRaw&, const PackedRaw&) = default;

 private:
  Tensor planes_{Shape{kPackedPlanes, 0, 0}};
};

/// Binary P5 PGM (maxval 65535, big-endian) plus JSON sidecar
/// {"pattern":"RGGB","black_level":..,"white_level":..}.
BayerFrame load_bayer(const std::filesystem::path& pgm_path, const std::filesystem::path& meta_path);
void save_bayer(const BayerFrame& frame, const std::filesystem::path& pgm_path,
                const std::filesystem::path& meta_path);

/// Parses the PGM bytes only; levels come from the caller.
BayerFrame parse_pgm16(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_pgm16(const BayerFrame& frame);

PackedRaw pack(const BayerFrame& frame);
/// Inverse of pack for unclamped samples (round to nearest).
BayerFrame unpack(const PackedRaw& packed, std::uint16_t black_level, std::uint16_t white_level);

/// Copy with the G2 plane replaced by G1 (half green sampling).
PackedRaw reduce_green_sampling(const PackedRaw& packed);

/// Stacks packed images into an [N, 4, H, W] batch.
Tensor to_batch(const std::vector<const PackedRaw*>& images);

}  // namespace simrod
