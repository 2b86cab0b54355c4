#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "simrod/bayer.hpp"
#include "simrod/gge.hpp"
#include "simrod/ggle.hpp"
#include "simrod/surrogate.hpp"

namespace simrod {

/// GGE -> GGLE -> toy head, trained jointly.
template <typename T>
struct Model {
  GammaParams<T> gge;
  GgleWeights<T> ggle;
  ToyHead<T> head;

  GuidanceMode mode() const { return ggle.mode; }
  /// Visits "gge.alpha", then the GGLE parameters, then the head.
  void for_each_param(const std::function<void(const std::string&, BasicParam<T>&)>& fn);
  void for_each_buffer(const std::function<void(const std::string&, BasicTensor<T>&)>& fn);
  /// GGE + GGLE learnable parameters (the enhancement budget).
  std::size_t enhancement_param_count() const { return gge.param_count() + param_count(ggle); }
  void zero_grad();

  template <typename U>
  Model<U> cast() const {
    return Model<U>{gge.template cast<U>(), ggle.template cast<U>(), head.template cast<U>()};
  }
};

template <typename T>
Model<T> init_model(GuidanceMode mode, std::uint64_t seed, double gamma_min = kDefaultGammaMin,
                    double gamma_max = kDefaultGammaMax);

struct BatchTargets {
  std::vector<int> labels;
  std::vector<std::array<double, 2>> reg;
};

template <typename T>
struct ModelCache {
  GgeCache<T> gge;
  GgleCache<T> ggle;
  HeadCache<T> head;
  BasicTensor<T> d_outputs;  // dLoss / d head outputs, [N, 3]
};

template <typename T>
struct ModelStep {
  double loss = 0.0;  // batch mean of the total loss
  double cls = 0.0;
  double reg = 0.0;
  ModelCache<T> cache;
};

/// x: packed batch [N, 4, H, W] in [0, 1].
template <typename T>
ModelStep<T> model_forward(Model<T>& model, const BasicTensor<T>& x, const BatchTargets& targets,
                           double lambda, nn::NormMode mode, bool update_running = true);

/// Accumulates gradients of the batch loss into every parameter.
template <typename T>
void model_backward(Model<T>& model, const ModelCache<T>& cache);

template <typename T>
void append_activation_signs(const ModelCache<T>& cache, std::vector<unsigned char>& out);

/// GGE then GGLE in eval mode; returns X-hat as [3, H, W].
Tensor enhance(const GammaParams<float>& gge, GgleWeights<float>& ggle, const PackedRaw& packed);

}  // namespace simrod
