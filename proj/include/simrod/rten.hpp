#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "simrod/tensor.hpp"

namespace simrod::rten {

// Layout: "RTEN", version (1), dtype (0 = f32), ndim, 3 zero bytes,
// ndim little-endian u64 dims, little-endian f32 payload.
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;
inline constexpr std::size_t kHeaderBytes = 10;

std::vector<std::uint8_t> encode(const Tensor& tensor);
Tensor decode(std::span<const std::uint8_t> bytes);

void write(const std::filesystem::path& path, const Tensor& tensor);
Tensor read(const std::filesystem::path& path);

}  // namespace simrod::rten
