#include "simrod/surrogate.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "simrod/errors.hpp"
#include "simrod/random.hpp"

namespace simrod {

template <typename T>
void ToyHead<T>::for_each_param(const std::function<void(const std::string&, BasicParam<T>&)>& fn) {
  fn("head.conv.weight", conv_weight);
  fn("head.conv.bias", conv_bias);
  fn("head.fc.weight", fc_weight);
  fn("head.fc.bias", fc_bias);
}

template <typename T>
ToyHead<T> init_head(std::uint64_t seed) {
  ToyHead<T> head;
  Rng rng(seed);
  const double gain = std::sqrt(2.0 / (1.0 + nn::kLeakySlope * nn::kLeakySlope));
  std::normal_distribution<double> conv_dist(0.0, gain / std::sqrt(27.0));
  for (auto& v : head.conv_weight.value.data()) v = static_cast<T>(conv_dist(rng));
  std::normal_distribution<double> fc_dist(0.0, 1.0 / std::sqrt(static_cast<double>(kHeadFeatures)));
  for (auto& v : head.fc_weight.value.data()) v = static_cast<T>(fc_dist(rng));
  return head;
}

template <typename T>
nn::Forward<T, HeadCache<T>> head_forward(const BasicTensor<T>& image, const ToyHead<T>& head) {
  auto conv = nn::conv2d_forward(image, head.conv_weight, head.conv_bias);
  auto act = nn::leaky_relu_forward(conv.output);
  const auto pooled = nn::global_avg_pool(act.output);
  auto fc = nn::linear_forward(pooled, head.fc_weight, head.fc_bias);
  return {std::move(fc.output),
          HeadCache<T>{std::move(conv.cache), std::move(act.cache), act.output.shape(), std::move(fc.cache)}};
}

template <typename T>
BasicTensor<T> head_backward(const HeadCache<T>& cache, const BasicTensor<T>& grad_out, ToyHead<T>& head) {
  auto g = nn::linear_backward(cache.fc, grad_out, head.fc_weight, head.fc_bias);
  g = nn::global_avg_pool_backward(g, cache.pooled_from);
  g = nn::leaky_relu_backward(cache.act, g);
  return nn::conv2d_backward(cache.conv, g, head.conv_weight, head.conv_bias);
}

LossTerms total_loss(double cls_logit, std::array<double, 2> reg_pred, int cls_label,
                     std::array<double, 2> reg_target, double lambda) {
  if (!std::isfinite(cls_logit) || !std::isfinite(reg_pred[0]) || !std::isfinite(reg_pred[1]) ||
      !std::isfinite(lambda)) {
    throw NumericalError("total_loss: non-finite input");
  }
  if (cls_label != 0 && cls_label != 1) throw ConfigError("class label must be 0 or 1");
  LossTerms t;
  const double y = cls_label;
  // Stable BCE with logits.
  t.cls = std::max(cls_logit, 0.0) - cls_logit * y + std::log1p(std::exp(-std::abs(cls_logit)));
  t.d_logit = 1.0 / (1.0 + std::exp(-cls_logit)) - y;
  if (cls_label == 1) {
    for (std::size_t k = 0; k < 2; ++k) {
      const double d = reg_pred[k] - reg_target[k];
      t.reg += d * d;
      t.d_reg[k] = lambda * 2.0 * d;
    }
  }
  t.total = t.cls + lambda * t.reg;
  return t;
}

// ---------------------------------------------------------------------------

namespace {
constexpr double kBackgroundRadiance = 0.05;
constexpr double kObjectRadiance = 0.6;
}  // namespace

SceneSpec toy_scene(std::size_t frame_size, bool with_object, std::uint64_t seed,
                    std::array<double, 2>* reg_target) {
  SceneSpec spec;
  spec.width = spec.height = frame_size;
  spec.background = {kBackgroundRadiance, kBackgroundRadiance, kBackgroundRadiance};
  if (with_object) {
    const double side = static_cast<double>(frame_size) / 4.0;
    Rng rng(seed);
    std::uniform_real_distribution<double> center(side / 2.0, frame_size - side / 2.0);
    SceneObject obj;
    obj.cx = center(rng);
    obj.cy = center(rng);
    obj.size = side;
    obj.radiance = {kObjectRadiance, kObjectRadiance, kObjectRadiance};
    spec.objects.push_back(obj);
    if (reg_target) *reg_target = {obj.cx / frame_size, obj.cy / frame_size};
  }
  return spec;
}

std::vector<ToySample> make_dataset(std::size_t n, const SensorModel& model, std::uint64_t seed,
                                    std::size_t frame_size) {
  if (n == 0) throw ConfigError("dataset size must be at least 1");
  if (frame_size < 6 || frame_size % 2) throw ConfigError("frame size must be even and at least 6");
  std::vector<ToySample> samples;
  samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ToySample s;
    s.cls_label = i % 2 == 0 ? 1 : 0;
    const std::uint64_t sample_seed = derive_seed(seed, i);
    const SceneSpec scene = toy_scene(frame_size, s.cls_label == 1, derive_seed(sample_seed, 0), &s.reg_target);
    SensorModel m = model;
    m.seed = derive_seed(sample_seed, 1);
    s.frame = synthesize_raw(render_scene(scene), m);
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_dataset(const std::vector<ToySample>& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["samples"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string stem = fmt::format("sample_{:04d}", i);
    save_bayer(samples[i].frame, dir / (stem + ".pgm"), dir / (stem + ".json"));
    nlohmann::ordered_json entry;
    entry["pgm"] = stem + ".pgm";
    entry["meta"] = stem + ".json";
    entry["label"] = samples[i].cls_label;
    if (samples[i].cls_label == 1) entry["reg_target"] = samples[i].reg_target;
    manifest["samples"].push_back(entry);
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
}

std::vector<ToySample> read_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ParseError(ParseError::Kind::io, fmt::format("cannot open {}", manifest_path.string()));
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseError::Kind::bad_metadata, e.what());
  }
  const auto base = manifest_path.parent_path();
  std::vector<ToySample> samples;
  try {
    for (const auto& entry : manifest.at("samples")) {
      ToySample s;
      s.frame = load_bayer(base / entry.at("pgm").get<std::string>(), base / entry.at("meta").get<std::string>());
      s.cls_label = entry.at("label").get<int>();
      if (s.cls_label == 1) s.reg_target = entry.at("reg_target").get<std::array<double, 2>>();
      samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseError::Kind::bad_metadata, fmt::format("bad dataset manifest: {}", e.what()));
  }
  if (samples.empty()) throw ConfigError("dataset manifest lists no samples");
  return samples;
}

#define SIMROD_INSTANTIATE_HEAD(T)                                                                    \
  template struct ToyHead<T>;                                                                         \
  template ToyHead<T> init_head<T>(std::uint64_t);                                                    \
  template nn::Forward<T, HeadCache<T>> head_forward(const BasicTensor<T>&, const ToyHead<T>&);       \
  template BasicTensor<T> head_backward(const HeadCache<T>&, const BasicTensor<T>&, ToyHead<T>&);

SIMROD_INSTANTIATE_HEAD(float)
SIMROD_INSTANTIATE_HEAD(double)

#undef SIMROD_INSTANTIATE_HEAD

}  // namespace simrod
