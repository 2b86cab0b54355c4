#include "simrod/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "simrod/errors.hpp"
#include "simrod/random.hpp"

namespace simrod {

namespace {
constexpr double kDivergenceFactor = 100.0;
constexpr std::uint64_t kShuffleStream = 1000;
}  // namespace

void TrainConfig::validate() const {
  if (epochs > 0 && warmup_epochs >= epochs) throw ConfigError("warmup_epochs must be smaller than epochs");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(base_lr > min_lr) || !(min_lr >= 0.0)) throw ConfigError("learning rates must satisfy base_lr > min_lr >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (!(gamma_min > 0.0 && gamma_min < gamma_max)) throw ConfigError("gamma bounds must satisfy 0 < min < max");
  if (dataset_size == 0) throw ConfigError("dataset_size must be positive");
  sensor.validate();
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.base_lr = j.value("base_lr", c.base_lr);
    c.min_lr = j.value("min_lr", c.min_lr);
    c.momentum = j.value("momentum", c.momentum);
    c.lambda = j.value("lambda", c.lambda);
    c.seed = j.value("seed", c.seed);
    c.gamma_min = j.value("gamma_min", c.gamma_min);
    c.gamma_max = j.value("gamma_max", c.gamma_max);
    if (j.contains("guidance_mode")) c.guidance_mode = parse_guidance_mode(j.at("guidance_mode").get<std::string>());
    c.freeze_gge = j.value("freeze_gge", c.freeze_gge);
    c.dataset_size = j.value("dataset_size", c.dataset_size);
    c.frame_size = j.value("frame_size", c.frame_size);
    c.dataset_seed = j.value("dataset_seed", c.dataset_seed);
    if (j.contains("sensor")) c.sensor = sensor_from_json(j.at("sensor"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("bad training config: {}", e.what()));
  }
  c.validate();
  return c;
}

nlohmann::ordered_json train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["epochs"] = c.epochs;
  j["warmup_epochs"] = c.warmup_epochs;
  j["batch_size"] = c.batch_size;
  j["base_lr"] = c.base_lr;
  j["min_lr"] = c.min_lr;
  j["momentum"] = c.momentum;
  j["lambda"] = c.lambda;
  j["seed"] = c.seed;
  j["gamma_min"] = c.gamma_min;
  j["gamma_max"] = c.gamma_max;
  j["guidance_mode"] = std::string(to_string(c.guidance_mode));
  j["freeze_gge"] = c.freeze_gge;
  j["dataset_size"] = c.dataset_size;
  j["frame_size"] = c.frame_size;
  j["dataset_seed"] = c.dataset_seed;
  j["sensor"] = sensor_to_json(c.sensor);
  return j;
}

double lr_at(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double base_lr, double min_lr) {
  if (total_steps <= warmup_steps) throw ConfigError("schedule needs more total steps than warmup steps");
  if (step > total_steps) throw ConfigError("schedule step beyond total steps");
  if (step < warmup_steps) return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const double t = static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return min_lr + (base_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * t)) / 2.0;
}

void sgd_step(std::span<Param* const> params, std::vector<Tensor>& velocity, double lr, double momentum) {
  if (velocity.empty()) {
    for (const Param* p : params) velocity.emplace_back(p->value.shape());
  }
  if (velocity.size() != params.size()) throw ConfigError("optimizer state does not match parameter list");
  const auto mu = static_cast<float>(momentum);
  const auto rate = static_cast<float>(lr);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    Tensor& v = velocity[k];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      v[i] = mu * v[i] + p.grad[i];
      p.value[i] -= rate * v[i];
    }
    p.zero_grad();
  }
}

std::string format_epoch_line(const EpochLog& log) {
  return fmt::format("epoch={} loss={:.6f} lr={:.6g} gamma=[{:.6f},{:.6f},{:.6f},{:.6f}]", log.epoch,
                     log.mean_loss, log.lr, log.gamma[0], log.gamma[1], log.gamma[2], log.gamma[3]);
}

nlohmann::ordered_json report_to_json(const TrainReport& report) {
  nlohmann::ordered_json j;
  j["initial_loss"] = report.initial_loss;
  j["iterations"] = report.iterations;
  j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& log : report.logs) {
    nlohmann::ordered_json e;
    e["epoch"] = log.epoch;
    e["loss"] = log.mean_loss;
    e["lr"] = log.lr;
    e["gamma"] = log.gamma;
    j["epochs"].push_back(e);
  }
  return j;
}

std::vector<ToySample> make_config_dataset(const TrainConfig& cfg) {
  return make_dataset(cfg.dataset_size, cfg.sensor, cfg.dataset_seed, cfg.frame_size);
}

namespace {

struct PreparedData {
  std::vector<PackedRaw> packed;
  std::vector<int> labels;
  std::vector<std::array<double, 2>> reg;
};

PreparedData prepare(const std::vector<ToySample>& dataset) {
  PreparedData d;
  for (const auto& s : dataset) {
    d.packed.push_back(pack(s.frame));
    d.labels.push_back(s.cls_label);
    d.reg.push_back(s.reg_target);
  }
  return d;
}

std::pair<Tensor, BatchTargets> gather(const PreparedData& d, std::span<const std::size_t> indices) {
  std::vector<const PackedRaw*> images;
  BatchTargets targets;
  for (std::size_t i : indices) {
    images.push_back(&d.packed[i]);
    targets.labels.push_back(d.labels[i]);
    targets.reg.push_back(d.reg[i]);
  }
  return {to_batch(images), std::move(targets)};
}

}  // namespace

TrainReport train(const TrainConfig& cfg, const std::vector<ToySample>& dataset, std::ostream* progress) {
  cfg.validate();
  if (dataset.empty()) throw ConfigError("training dataset is empty");
  const PreparedData data = prepare(dataset);
  const std::size_t n = dataset.size();

  TrainReport report;
  report.model = init_model<float>(cfg.guidance_mode, cfg.seed, cfg.gamma_min, cfg.gamma_max);
  Model<float>& model = report.model;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  // Baseline on untouched weights; batch statistics, running stats left alone.
  {
    Model<float> probe = model;
    double sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      auto [x, targets] = gather(data, std::span(order).subspan(start, count));
      sum += model_forward(probe, x, targets, cfg.lambda, nn::NormMode::train, false).loss * count;
    }
    report.initial_loss = sum / static_cast<double>(n);
    if (!std::isfinite(report.initial_loss)) throw NumericalError("initial loss is not finite");
  }
  if (cfg.epochs == 0) return report;

  std::vector<Param*> params;
  model.for_each_param([&](const std::string& name, Param& p) {
    if (!(cfg.freeze_gge && name == "gge.alpha")) params.push_back(&p);
  });
  std::vector<Tensor> velocity;

  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  const std::size_t warmup_steps = steps_per_epoch * cfg.warmup_epochs;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, kShuffleStream + epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0, lr = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      auto [x, targets] = gather(data, std::span(order).subspan(start, count));
      auto fwd = model_forward(model, x, targets, cfg.lambda, nn::NormMode::train);
      if (!std::isfinite(fwd.loss) || fwd.loss > kDivergenceFactor * report.initial_loss) {
        throw NumericalError(fmt::format("training diverged at epoch {} step {}: loss {} (initial {})",
                                         epoch + 1, step + 1, fwd.loss, report.initial_loss));
      }
      model_backward(model, fwd.cache);
      lr = lr_at(++step, total_steps, warmup_steps, cfg.base_lr, cfg.min_lr);
      sgd_step(params, velocity, lr, cfg.momentum);
      model.gge.alpha.zero_grad();
      loss_sum += fwd.loss * count;
    }
    EpochLog log{epoch + 1, loss_sum / static_cast<double>(n), lr, model.gge.gammas()};
    if (progress) *progress << format_epoch_line(log) << '\n';
    report.logs.push_back(log);
  }
  report.iterations = step;
  return report;
}

}  // namespace simrod
