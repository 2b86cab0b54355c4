#include "simrod/sensor.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "simrod/errors.hpp"
#include "simrod/random.hpp"

namespace simrod {

void SensorModel::validate() const {
  for (double qe : quantum_efficiency) {
    if (!(qe > 0.0) || !std::isfinite(qe)) throw ConfigError("quantum efficiencies must be positive");
  }
  if (!(exposure >= 0.0) || !std::isfinite(exposure)) throw ConfigError("exposure must be non-negative");
  if (!(read_noise_sigma >= 0.0)) throw ConfigError("read noise must be non-negative");
  if (!(full_well > 0.0)) throw ConfigError("full well must be positive");
  if (black_level >= white_level) throw ConfigError("black level must be below white level");
}

SensorModel sensor_from_json(const nlohmann::json& j) {
  SensorModel m;
  try {
    if (j.contains("quantum_efficiency")) m.quantum_efficiency = j.at("quantum_efficiency").get<std::array<double, 3>>();
    m.exposure = j.value("exposure", m.exposure);
    m.read_noise_sigma = j.value("read_noise_sigma", m.read_noise_sigma);
    m.full_well = j.value("full_well", m.full_well);
    m.shot_noise = j.value("shot_noise", m.shot_noise);
    m.black_level = j.value("black_level", m.black_level);
    m.white_level = j.value("white_level", m.white_level);
    m.seed = j.value("seed", m.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("bad sensor model: {}", e.what()));
  }
  m.validate();
  return m;
}

nlohmann::ordered_json sensor_to_json(const SensorModel& m) {
  nlohmann::ordered_json j;
  j["quantum_efficiency"] = m.quantum_efficiency;
  j["exposure"] = m.exposure;
  j["read_noise_sigma"] = m.read_noise_sigma;
  j["full_well"] = m.full_well;
  j["shot_noise"] = m.shot_noise;
  j["black_level"] = m.black_level;
  j["white_level"] = m.white_level;
  j["seed"] = m.seed;
  return j;
}

SensorModel low_light_sensor() {
  SensorModel m;
  m.quantum_efficiency = {0.5, 1.0, 0.5};
  m.exposure = 40.0;
  m.read_noise_sigma = 3.0;
  m.full_well = 20000.0;
  m.black_level = 2048;
  m.white_level = 65535;
  return m;
}

SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec s;
  try {
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    if (j.contains("background")) s.background = j.at("background").get<std::array<double, 3>>();
    if (j.contains("objects")) {
      for (const auto& o : j.at("objects")) {
        SceneObject obj;
        obj.cx = o.at("cx").get<double>();
        obj.cy = o.at("cy").get<double>();
        obj.size = o.at("size").get<double>();
        obj.radiance = o.at("radiance").get<std::array<double, 3>>();
        s.objects.push_back(obj);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("bad scene spec: {}", e.what()));
  }
  if (s.width == 0 || s.height == 0 || s.width % 2 || s.height % 2) {
    throw ConfigError("scene dimensions must be positive and even");
  }
  return s;
}

RadianceMap render_scene(const SceneSpec& spec) {
  RadianceMap map({3, spec.height, spec.width});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < spec.height; ++y) {
      for (std::size_t x = 0; x < spec.width; ++x) {
        double v = spec.background[c];
        for (const auto& o : spec.objects) {
          const double half = o.size / 2.0;
          const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
          if (std::abs(px - o.cx) <= half && std::abs(py - o.cy) <= half) v = o.radiance[c];
        }
        map[(c * spec.height + y) * spec.width + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return map;
}

BayerFrame synthesize_raw(const RadianceMap& scene, const SensorModel& model) {
  model.validate();
  if (scene.rank() != 3 || scene.dim(0) != 3) {
    throw ShapeError(fmt::format("scene must be [3,H,W], got {}", shape_string(scene.shape())));
  }
  const std::size_t height = scene.dim(1), width = scene.dim(2);
  BayerFrame frame;
  frame.width = width;
  frame.height = height;
  frame.black_level = model.black_level;
  frame.white_level = model.white_level;
  frame.samples.resize(width * height);
  frame.validate();

  Rng rng(model.seed);
  std::normal_distribution<double> read_noise(0.0, 1.0);
  const double gain = (model.white_level - model.black_level) / model.full_well;  // DN per electron
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      // RGGB: even row -> R,G; odd row -> G,B
      const std::size_t color = (y % 2 == 0) ? (x % 2 == 0 ? 0 : 1) : (x % 2 == 0 ? 1 : 2);
      const double radiance = scene[(color * height + y) * width + x];
      const double mean_e = model.quantum_efficiency[color] * model.exposure * radiance;
      double electrons = mean_e;
      if (model.shot_noise && mean_e > 0.0) {
        electrons = static_cast<double>(std::poisson_distribution<long long>(mean_e)(rng));
      }
      if (model.read_noise_sigma > 0.0) electrons += model.read_noise_sigma * read_noise(rng);
      const double dn = std::round(model.black_level + electrons * gain);
      frame.at(y, x) = static_cast<std::uint16_t>(
          std::clamp(dn, static_cast<double>(model.black_level), static_cast<double>(model.white_level)));
    }
  }
  return frame;
}

}  // namespace simrod
