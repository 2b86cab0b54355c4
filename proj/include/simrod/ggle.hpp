#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "simrod/layers.hpp"
#include "simrod/tensor.hpp"

namespace simrod {

/// Which packed planes feed the guidance branch.
enum class GuidanceMode { none, r, b, rb, gg, rggb };

inline constexpr std::array<GuidanceMode, 6> kAllGuidanceModes = {
    GuidanceMode::none, GuidanceMode::r, GuidanceMode::b,
    GuidanceMode::rb,   GuidanceMode::gg, GuidanceMode::rggb};

std::string_view to_string(GuidanceMode mode);
/// Accepts None, R, B, RB, GG, RGGB (case-insensitive). Throws ConfigError.
GuidanceMode parse_guidance_mode(std::string_view name);
/// Packed plane indices for the mode, in plane order. Empty for none.
std::vector<std::size_t> guidance_planes(GuidanceMode mode);

inline constexpr std::size_t kGgleFeatures = 8;
inline constexpr std::size_t kGgleOutputs = 3;

/// Two-branch local enhancement network:
///   out = fusion(concat[f_l(x) + f_l_g(x_guide), f_l(x)])
/// with f_l = two conv-BN-leaky blocks (4->8->8), f_l_g = one block (k->8)
/// and a 3x3 fusion convolution (16->3).
template <typename T>
struct GgleWeights {
  GuidanceMode mode = GuidanceMode::gg;
  std::array<nn::ConvBlock<T>, 2> f_l;
  std::optional<nn::ConvBlock<T>> f_l_g;
  BasicParam<T> fusion_weight;
  BasicParam<T> fusion_bias;

  /// Visits learnable tensors with their checkpoint names ("ggle.f_l.0.conv.weight", ...).
  void for_each_param(const std::function<void(const std::string&, BasicParam<T>&)>& fn);
  /// Visits BN running statistics ("ggle.f_l.0.bn.running_mean", ...).
  void for_each_buffer(const std::function<void(const std::string&, BasicTensor<T>&)>& fn);

  template <typename U>
  GgleWeights<U> cast() const {
    GgleWeights<U> out;
    out.mode = mode;
    out.f_l = {f_l[0].template cast<U>(), f_l[1].template cast<U>()};
    if (f_l_g) out.f_l_g = f_l_g->template cast<U>();
    out.fusion_weight = fusion_weight.template cast<U>();
    out.fusion_bias = fusion_bias.template cast<U>();
    return out;
  }
};

/// Zero-initialized weights with the architecture for `mode`.
template <typename T>
GgleWeights<T> make_ggle(GuidanceMode mode);

/// Fan-in scaled normal init (gain for leaky slope 0.1), BN scale 1 / shift 0.
/// Every layer draws from its own seed stream, so f_l and the fusion conv are
/// identical across guidance modes for the same seed.
template <typename T>
GgleWeights<T> init_ggle(GuidanceMode mode, std::uint64_t seed);

/// Learnable parameter count (conv weights and biases, BN scale and shift).
template <typename T>
std::size_t param_count(const GgleWeights<T>& weights);

template <typename T>
struct GgleCache {
  std::array<nn::ConvBlockCache<T>, 2> f_l;
  std::optional<nn::ConvBlockCache<T>> f_l_g;
  nn::Conv2dCache<T> fusion;
  Shape input_shape;
};

/// x_gamma: [N, 4, H, W] -> [N, 3, H, W].
template <typename T>
nn::Forward<T, GgleCache<T>> ggle_forward(const BasicTensor<T>& x_gamma, GgleWeights<T>& weights,
                                          nn::NormMode mode, bool update_running = true);

/// Accumulates all weight gradients; returns the gradient wrt x_gamma.
template <typename T>
BasicTensor<T> ggle_backward(const GgleCache<T>& cache, const BasicTensor<T>& grad_out,
                             GgleWeights<T>& weights);

/// Sign pattern of every leaky-relu input in the cache, in a fixed order.
template <typename T>
void append_activation_signs(const GgleCache<T>& cache, std::vector<unsigned char>& out);

}  // namespace simrod
