#include "simrod/checkpoint.hpp"

#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "simrod/errors.hpp"
#include "simrod/rten.hpp"

namespace simrod {

namespace {
constexpr const char* kFormat = "simrod-checkpoint";
constexpr int kFormatVersion = 1;
}  // namespace

void save_checkpoint(Model<float>& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["format"] = kFormat;
  manifest["version"] = kFormatVersion;
  manifest["guidance_mode"] = std::string(to_string(model.mode()));
  manifest["gge"] = gamma_to_json(model.gge);
  nlohmann::ordered_json tensors = nlohmann::ordered_json::object();
  auto store = [&](const std::string& name, const Tensor& t) {
    const std::string file = name + ".rten";
    rten::write(dir / file, t);
    tensors[name] = file;
  };
  model.ggle.for_each_param([&](const std::string& name, Param& p) { store(name, p.value); });
  model.ggle.for_each_buffer([&](const std::string& name, Tensor& t) { store(name, t); });
  model.head.for_each_param([&](const std::string& name, Param& p) { store(name, p.value); });
  manifest["tensors"] = tensors;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw ParseError(ParseError::Kind::io, fmt::format("cannot write {}", (dir / "manifest.json").string()));
  out << manifest.dump(2) << "\n";
}

Model<float> load_checkpoint(const std::filesystem::path& dir, std::optional<GuidanceMode> expected_mode) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ParseError(ParseError::Kind::io, fmt::format("no checkpoint manifest in {}", dir.string()));
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseError::Kind::bad_metadata, fmt::format("bad checkpoint manifest: {}", e.what()));
  }
  if (manifest.value("format", "") != kFormat || manifest.value("version", 0) != kFormatVersion) {
    throw ConfigError("not a version-1 simrod checkpoint");
  }
  const GuidanceMode mode = parse_guidance_mode(manifest.value("guidance_mode", ""));
  if (expected_mode && *expected_mode != mode) {
    throw ConfigError(fmt::format("checkpoint was trained with guidance mode {}, requested {}",
                                  to_string(mode), to_string(*expected_mode)));
  }
  if (!manifest.contains("gge") || !manifest.contains("tensors")) throw ConfigError("checkpoint manifest is incomplete");

  Model<float> model{gamma_from_json(manifest["gge"]), make_ggle<float>(mode), ToyHead<float>{}};
  const auto& tensors = manifest["tensors"];
  auto fetch = [&](const std::string& name, Tensor& dst) {
    if (!tensors.contains(name)) throw ConfigError(fmt::format("checkpoint lacks tensor '{}'", name));
    Tensor t = rten::read(dir / tensors[name].get<std::string>());
    if (t.shape() != dst.shape()) {
      throw ConfigError(fmt::format("checkpoint tensor '{}' has shape {}, architecture needs {}", name,
                                    shape_string(t.shape()), shape_string(dst.shape())));
    }
    dst = std::move(t);
  };
  model.ggle.for_each_param([&](const std::string& name, Param& p) { fetch(name, p.value); });
  model.ggle.for_each_buffer([&](const std::string& name, Tensor& t) { fetch(name, t); });
  model.head.for_each_param([&](const std::string& name, Param& p) { fetch(name, p.value); });
  // Anything left over belongs to a different architecture.
  std::size_t expected = 0;
  model.ggle.for_each_param([&](const std::string&, Param&) { ++expected; });
  model.ggle.for_each_buffer([&](const std::string&, Tensor&) { ++expected; });
  model.head.for_each_param([&](const std::string&, Param&) { ++expected; });
  if (tensors.size() != expected) {
    throw ConfigError("checkpoint contains tensors that do not belong to the requested architecture");
  }
  return model;
}

}  // namespace simrod
