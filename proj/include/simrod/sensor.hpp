#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "simrod/bayer.hpp"
#include "simrod/tensor.hpp"

namespace simrod {

/// Poisson-Gaussian sensor used to synthesize Bayer captures.
struct SensorModel {
  std::array<double, 3> quantum_efficiency{1.0, 1.0, 1.0};  // R, G, B gains
  double exposure = 100.0;         // electrons per unit radiance at unit gain
  double read_noise_sigma = 2.0;   // electrons
  double full_well = 10000.0;      // electrons mapped to white_level
  bool shot_noise = true;
  std::uint16_t black_level = 1024;
  std::uint16_t white_level = 65535;
  std::uint64_t seed = 0;

  /// Throws ConfigError on non-positive gains, negative exposure, etc.
  void validate() const;
};

SensorModel sensor_from_json(const nlohmann::json& j);
nlohmann::ordered_json sensor_to_json(const SensorModel& model);

/// Dim, noisy capture settings used by the toy dataset and SNR studies.
SensorModel low_light_sensor();

/// Scene radiance at mosaic resolution: [3, height, width], values in [0, 1].
using RadianceMap = Tensor;

struct SceneObject {
  double cx = 0.0;  // center, mosaic pixels
  double cy = 0.0;
  double size = 1.0;  // square side, mosaic pixels
  std::array<double, 3> radiance{1.0, 1.0, 1.0};
};

struct SceneSpec {
  std::size_t width = 32;
  std::size_t height = 32;
  std::array<double, 3> background{0.5, 0.5, 0.5};
  std::vector<SceneObject> objects;
};

SceneSpec scene_from_json(const nlohmann::json& j);
RadianceMap render_scene(const SceneSpec& spec);

/// electrons_c = qe_c * exposure * radiance_c, Poisson shot noise plus
/// Gaussian read noise, sampled through the RGGB mosaic and digitized into
/// [black_level, white_level]. Deterministic for a fixed model.seed.
BayerFrame synthesize_raw(const RadianceMap& scene, const SensorModel& model);

}  // namespace simrod
