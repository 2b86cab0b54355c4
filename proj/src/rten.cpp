#include "simrod/rten.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "simrod/errors.hpp"

namespace simrod::rten {

namespace {

constexpr char kMagic[4] = {'R', 'T', 'E', 'N'};

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{p[i]} << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode(const Tensor& tensor) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kVersion);
  out.push_back(kDtypeF32);
  out.push_back(static_cast<std::uint8_t>(tensor.rank()));
  out.insert(out.end(), 3, 0);
  for (std::size_t d : tensor.shape()) put_u64(out, d);
  out.reserve(out.size() + 4 * tensor.numel());
  for (float f : tensor.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  return out;
}

Tensor decode(std::span<const std::uint8_t> bytes) {
  using K = ParseError::Kind;
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ParseError(K::bad_magic, "not an RTEN tensor container");
  }
  if (bytes[4] != kVersion) {
    throw ParseError(K::bad_metadata, fmt::format("unsupported RTEN version {}", bytes[4]));
  }
  if (bytes[5] != kDtypeF32) {
    throw ParseError(K::bad_metadata, fmt::format("unsupported RTEN dtype {}", bytes[5]));
  }
  const std::size_t ndim = bytes[6];
  const std::size_t dims_end = kHeaderBytes + 8 * ndim;
  if (bytes.size() < dims_end) throw ParseError(K::truncated, "RTEN header truncated");
  Shape shape(ndim);
  for (std::size_t i = 0; i < ndim; ++i) shape[i] = get_u64(bytes.data() + kHeaderBytes + 8 * i);
  const std::size_t count = shape_numel(shape);
  if (bytes.size() != dims_end + 4 * count) {
    throw ParseError(K::truncated, fmt::format("RTEN payload has {} bytes, shape {} needs {}",
                                               bytes.size() - dims_end, shape_string(shape), 4 * count));
  }
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* p = bytes.data() + dims_end + 4 * i;
    const std::uint32_t bits = std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 |
                               std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24;
    data[i] = std::bit_cast<float>(bits);
  }
  return Tensor(std::move(shape), std::move(data));
}

void write(const std::filesystem::path& path, const Tensor& tensor) {
  const auto bytes = encode(tensor);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(ParseError::Kind::io, fmt::format("cannot open {} for writing", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParseError(ParseError::Kind::io, fmt::format("failed writing {}", path.string()));
}

Tensor read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseError::Kind::io, fmt::format("cannot open {}", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode(bytes);
}

}  // namespace simrod::rten
