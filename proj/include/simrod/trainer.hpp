#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include <json.hpp>

#include "simrod/model.hpp"
#include "simrod/sensor.hpp"

namespace simrod {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t warmup_epochs = 2;
  std::size_t batch_size = 8;
  double base_lr = 0.01;
  double min_lr = 1e-4;
  double momentum = 0.9;
  double lambda = kDefaultLambda;
  std::uint64_t seed = 0;
  double gamma_min = kDefaultGammaMin;
  double gamma_max = kDefaultGammaMax;
  GuidanceMode guidance_mode = GuidanceMode::gg;
  bool freeze_gge = false;

  // Synthetic dataset used when no manifest is supplied.
  std::size_t dataset_size = 200;
  std::size_t frame_size = kDefaultFrameSize;
  std::uint64_t dataset_seed = 1234;
  SensorModel sensor = low_light_sensor();

  /// Throws ConfigError. warmup_epochs < epochs is only required when epochs > 0.
  void validate() const;
};

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg);

/// Linear warmup from 0 to base_lr, then cosine decay to min_lr at total_steps.
double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double base_lr, double min_lr);

/// v <- momentum * v + g; p <- p - lr * v; then g <- 0.
/// `velocity` is resized to match `params` on first use.
void sgd_step(std::span<Param* const> params, std::vector<Tensor>& velocity, double lr, double momentum);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double lr = 0.0;
  std::array<double, kGammaChannels> gamma{};
};

struct TrainReport {
  double initial_loss = 0.0;  // dataset mean loss before any update
  std::size_t iterations = 0;
  std::vector<EpochLog> logs;
  Model<float> model;

  double final_loss() const { return logs.empty() ? initial_loss : logs.back().mean_loss; }
};

std::string format_epoch_line(const EpochLog& log);
nlohmann::ordered_json report_to_json(const TrainReport& report);

/// Single-threaded and deterministic for a fixed cfg.seed. Writes one
/// progress line per epoch to `progress` when given. Throws NumericalError if
/// a batch loss is non-finite or exceeds 100x the initial loss.
TrainReport train(const TrainConfig& cfg, const std::vector<ToySample>& dataset, std::ostream* progress = nullptr);

/// Dataset described by cfg (dataset_size, frame_size, dataset_seed, sensor).
std::vector<ToySample> make_config_dataset(const TrainConfig& cfg);

}  // namespace simrod
