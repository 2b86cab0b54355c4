#include "simrod/bayer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include <fmt/format.h>
#include <json.hpp>

#include "simrod/errors.hpp"

namespace simrod {

using Kind = ParseError::Kind;

void BayerFrame::validate() const {
  if (width == 0 || height == 0 || width % 2 || height % 2) {
    throw ConfigError(fmt::format("Bayer frame must have positive even dimensions, got {}x{}", width, height));
  }
  if (samples.size() != width * height) throw ConfigError("Bayer sample count does not match dimensions");
  if (black_level >= white_level) {
    throw ConfigError(fmt::format("black level {} must be below white level {}", black_level, white_level));
  }
}

PackedRaw::PackedRaw(std::size_t height, std::size_t width)
    : planes_(Shape{kPackedPlanes, height, width}) {}

PackedRaw::PackedRaw(Tensor planes) : planes_(std::move(planes)) {
  if (planes_.rank() != 3 || planes_.dim(0) != kPackedPlanes) {
    throw ShapeError(fmt::format("packed RAW must be [4,H,W], got {}", shape_string(planes_.shape())));
  }
  for (float v : planes_.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ConfigError("packed RAW values must lie in [0, 1]");
  }
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(Kind::io, fmt::format("cannot open {}", path.string()));
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(Kind::io, fmt::format("cannot open {} for writing", path.string()));
  out << text;
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(const std::vector<std::uint8_t>& b, std::size_t& pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < b.size() && !std::isspace(b[pos]) && b[pos] != '#') tok.push_back(static_cast<char>(b[pos++]));
  if (tok.empty()) throw ParseError(Kind::truncated, "PGM header truncated");
  return tok;
}

std::size_t parse_header_number(const std::string& tok, const char* field) {
  if (!std::all_of(tok.begin(), tok.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }) ||
      tok.size() > 9) {
    throw ParseError(Kind::bad_metadata, fmt::format("bad PGM {} '{}'", field, tok));
  }
  return std::stoul(tok);
}

}  // namespace

BayerFrame parse_pgm16(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw ParseError(Kind::bad_magic, "not a binary PGM (expected P5)");
  }
  pos = 2;
  const std::size_t width = parse_header_number(next_token(bytes, pos), "width");
  const std::size_t height = parse_header_number(next_token(bytes, pos), "height");
  const std::size_t maxval = parse_header_number(next_token(bytes, pos), "maxval");
  if (maxval != 65535) {
    throw ParseError(Kind::unsupported_depth, fmt::format("unsupported PGM maxval {} (need 65535)", maxval));
  }
  if (width == 0 || height == 0 || width % 2 || height % 2) {
    throw ParseError(Kind::odd_dimensions, fmt::format("Bayer mosaic must have even dimensions, got {}x{}", width, height));
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw ParseError(Kind::truncated, "PGM header truncated");
  ++pos;  // single whitespace before the raster
  const std::size_t count = width * height;
  if (bytes.size() - pos < 2 * count) {
    throw ParseError(Kind::truncated, fmt::format("PGM payload has {} bytes, expected {}", bytes.size() - pos, 2 * count));
  }
  BayerFrame frame;
  frame.width = width;
  frame.height = height;
  frame.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    frame.samples[i] = static_cast<std::uint16_t>(bytes[pos + 2 * i] << 8 | bytes[pos + 2 * i + 1]);
  }
  return frame;
}

std::vector<std::uint8_t> encode_pgm16(const BayerFrame& frame) {
  const std::string header = fmt::format("P5\n{} {}\n65535\n", frame.width, frame.height);
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + 2 * frame.samples.size());
  for (std::uint16_t s : frame.samples) {
    out.push_back(static_cast<std::uint8_t>(s >> 8));
    out.push_back(static_cast<std::uint8_t>(s & 0xFF));
  }
  return out;
}

BayerFrame load_bayer(const std::filesystem::path& pgm_path, const std::filesystem::path& meta_path) {
  BayerFrame frame = parse_pgm16(read_file(pgm_path));
  const auto meta_bytes = read_file(meta_path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_bytes.begin(), meta_bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(Kind::bad_metadata, fmt::format("{}: {}", meta_path.string(), e.what()));
  }
  if (!meta.is_object() || !meta.contains("pattern") || !meta["pattern"].is_string()) {
    throw ParseError(Kind::bad_metadata, "sidecar must be an object with a \"pattern\" string");
  }
  if (meta["pattern"].get<std::string>() != "RGGB") {
    throw ParseError(Kind::unknown_pattern, fmt::format("unsupported CFA pattern '{}'", meta["pattern"].get<std::string>()));
  }
  auto level = [&](const char* key) -> std::uint16_t {
    if (!meta.contains(key) || !meta[key].is_number_unsigned() || meta[key].get<std::uint64_t>() > 65535) {
      throw ParseError(Kind::bad_metadata, fmt::format("sidecar field \"{}\" must be an integer in [0, 65535]", key));
    }
    return static_cast<std::uint16_t>(meta[key].get<std::uint64_t>());
  };
  frame.black_level = level("black_level");
  frame.white_level = level("white_level");
  if (frame.black_level >= frame.white_level) {
    throw ParseError(Kind::bad_metadata, "black_level must be below white_level");
  }
  return frame;
}

void save_bayer(const BayerFrame& frame, const std::filesystem::path& pgm_path,
                const std::filesystem::path& meta_path) {
  frame.validate();
  const auto bytes = encode_pgm16(frame);
  write_file(pgm_path, std::string(bytes.begin(), bytes.end()));
  nlohmann::ordered_json meta;
  meta["pattern"] = "RGGB";
  meta["black_level"] = frame.black_level;
  meta["white_level"] = frame.white_level;
  write_file(meta_path, meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

PackedRaw pack(const BayerFrame& frame) {
  frame.validate();
  const std::size_t h = frame.height / 2, w = frame.width / 2;
  PackedRaw out(h, w);
  const float black = frame.black_level;
  const float range = static_cast<float>(frame.white_level - frame.black_level);
  auto norm = [&](std::uint16_t s) { return std::clamp((static_cast<float>(s) - black) / range, 0.0f, 1.0f); };
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      out.at(kR, i, j) = norm(frame.at(2 * i, 2 * j));
      out.at(kG1, i, j) = norm(frame.at(2 * i, 2 * j + 1));
      out.at(kG2, i, j) = norm(frame.at(2 * i + 1, 2 * j));
      out.at(kB, i, j) = norm(frame.at(2 * i + 1, 2 * j + 1));
    }
  }
  return out;
}

BayerFrame unpack(const PackedRaw& packed, std::uint16_t black_level, std::uint16_t white_level) {
  if (black_level >= white_level) throw ConfigError("black level must be below white level");
  BayerFrame frame;
  frame.height = 2 * packed.height();
  frame.width = 2 * packed.width();
  frame.samples.resize(frame.width * frame.height);
  frame.black_level = black_level;
  frame.white_level = white_level;
  const double range = white_level - black_level;
  auto denorm = [&](float v) {
    return static_cast<std::uint16_t>(std::lround(black_level + static_cast<double>(v) * range));
  };
  for (std::size_t i = 0; i < packed.height(); ++i) {
    for (std::size_t j = 0; j < packed.width(); ++j) {
      frame.at(2 * i, 2 * j) = denorm(packed.at(kR, i, j));
      frame.at(2 * i, 2 * j + 1) = denorm(packed.at(kG1, i, j));
      frame.at(2 * i + 1, 2 * j) = denorm(packed.at(kG2, i, j));
      frame.at(2 * i + 1, 2 * j + 1) = denorm(packed.at(kB, i, j));
    }
  }
  return frame;
}

PackedRaw reduce_green_sampling(const PackedRaw& packed) {
  PackedRaw out = packed;
  for (std::size_t i = 0; i < packed.height(); ++i) {
    for (std::size_t j = 0; j < packed.width(); ++j) out.at(kG2, i, j) = packed.at(kG1, i, j);
  }
  return out;
}

Tensor to_batch(const std::vector<const PackedRaw*>& images) {
  if (images.empty()) throw ShapeError("to_batch: no images");
  const std::size_t h = images.front()->height(), w = images.front()->width();
  Tensor batch({images.size(), kPackedPlanes, h, w});
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (images[n]->height() != h || images[n]->width() != w) {
      throw ShapeError("to_batch: images differ in size");
    }
    std::copy(images[n]->tensor().data().begin(), images[n]->tensor().data().end(),
              batch.data().begin() + n * kPackedPlanes * h * w);
  }
  return batch;
}

}  // namespace simrod
