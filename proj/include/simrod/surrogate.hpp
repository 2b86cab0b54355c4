#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "simrod/bayer.hpp"
#include "simrod/layers.hpp"
#include "simrod/sensor.hpp"

namespace simrod {

inline constexpr double kDefaultLambda = 3.0;
inline constexpr std::size_t kHeadFeatures = 8;
inline constexpr std::size_t kHeadOutputs = 3;  // logit, reg x, reg y
inline constexpr std::size_t kDefaultFrameSize = 32;

/// Minimal downstream model: conv 3->8, leaky, global average pool, linear 8->3.
template <typename T>
struct ToyHead {
  BasicParam<T> conv_weight{Shape{kHeadFeatures, 3, nn::kKernel, nn::kKernel}};
  BasicParam<T> conv_bias{Shape{kHeadFeatures}};
  BasicParam<T> fc_weight{Shape{kHeadOutputs, kHeadFeatures}};
  BasicParam<T> fc_bias{Shape{kHeadOutputs}};

  void for_each_param(const std::function<void(const std::string&, BasicParam<T>&)>& fn);
  std::size_t param_count() const {
    return conv_weight.numel() + conv_bias.numel() + fc_weight.numel() + fc_bias.numel();
  }

  template <typename U>
  ToyHead<U> cast() const {
    ToyHead<U> out;
    out.conv_weight = conv_weight.template cast<U>();
    out.conv_bias = conv_bias.template cast<U>();
    out.fc_weight = fc_weight.template cast<U>();
    out.fc_bias = fc_bias.template cast<U>();
    return out;
  }
};

template <typename T>
ToyHead<T> init_head(std::uint64_t seed);

template <typename T>
struct HeadCache {
  nn::Conv2dCache<T> conv;
  nn::LeakyReluCache<T> act;
  Shape pooled_from;
  nn::LinearCache<T> fc;
};

/// image: [N, 3, H, W] -> [N, 3] (column 0 is the class logit).
template <typename T>
nn::Forward<T, HeadCache<T>> head_forward(const BasicTensor<T>& image, const ToyHead<T>& head);

template <typename T>
BasicTensor<T> head_backward(const HeadCache<T>& cache, const BasicTensor<T>& grad_out, ToyHead<T>& head);

/// One synthetic detection-like sample.
struct ToySample {
  BayerFrame frame;
  int cls_label = 0;                       // 1 = object present
  std::array<double, 2> reg_target{0, 0};  // object center / frame size, only for positives
};

/// Loss value and its gradient wrt the head outputs.
struct LossTerms {
  double cls = 0.0;
  double reg = 0.0;
  double total = 0.0;
  double d_logit = 0.0;
  std::array<double, 2> d_reg{0.0, 0.0};
};

/// total = BCE(logit, label) + lambda * squared error on the regression
/// target, the latter masked to zero for negative samples.
LossTerms total_loss(double cls_logit, std::array<double, 2> reg_pred, int cls_label,
                     std::array<double, 2> reg_target, double lambda = kDefaultLambda);

/// Dark scenes, every even index carrying a bright square at a uniform random
/// center. Each sample draws from its own seed stream.
std::vector<ToySample> make_dataset(std::size_t n, const SensorModel& model, std::uint64_t seed,
                                    std::size_t frame_size = kDefaultFrameSize);

/// Scene used for sample `index` (exposed for tests).
SceneSpec toy_scene(std::size_t frame_size, bool with_object, std::uint64_t seed,
                    std::array<double, 2>* reg_target = nullptr);

/// Writes sample_NNNN.{pgm,json} plus manifest.json into `dir`.
void write_dataset(const std::vector<ToySample>& samples, const std::filesystem::path& dir);
std::vector<ToySample> read_dataset(const std::filesystem::path& manifest_path);

}  // namespace simrod
