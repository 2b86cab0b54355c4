#pragma once

#include <array>
#include <cstddef>

#include <json.hpp>

#include "simrod/layers.hpp"
#include "simrod/tensor.hpp"

namespace simrod {

inline constexpr double kDefaultGammaMin = 1.0 / 10.5;
inline constexpr double kDefaultGammaMax = 1.0 / 7.0;
/// Lower clamp applied to inputs before exponentiation.
inline constexpr double kGammaInputEps = 1e-6;
inline constexpr double kGammaOutputScale = 255.0;
inline constexpr std::size_t kGammaChannels = 4;

/// Bounded reparameterization: gamma = min + (tanh(alpha) + 1) / 2 * (max - min).
/// Throws NumericalError for non-finite alpha and ConfigError for bad bounds.
double gamma_of_alpha(double alpha, double gamma_min, double gamma_max);

/// d gamma / d alpha.
double gamma_of_alpha_derivative(double alpha, double gamma_min, double gamma_max);

/// Four per-channel exponents (R, G1, G2, B) learned through unconstrained alphas.
template <typename T>
struct GammaParams {
  BasicParam<T> alpha{Shape{kGammaChannels}};
  T gamma_min = static_cast<T>(kDefaultGammaMin);
  T gamma_max = static_cast<T>(kDefaultGammaMax);

  GammaParams() = default;
  GammaParams(double gmin, double gmax);

  std::array<double, kGammaChannels> gammas() const;
  std::size_t param_count() const { return alpha.numel(); }
  void validate() const;

  template <typename U>
  GammaParams<U> cast() const {
    GammaParams<U> out;
    out.alpha = alpha.template cast<U>();
    out.gamma_min = static_cast<U>(gamma_min);
    out.gamma_max = static_cast<U>(gamma_max);
    return out;
  }
};

template <typename T>
struct GgeCache {
  BasicTensor<T> input;   // clamped input
  BasicTensor<T> output;
  std::vector<unsigned char> clamped;  // 1 where the clamp was active
  std::array<T, kGammaChannels> gamma{};
  std::array<T, kGammaChannels> dgamma_dalpha{};
};

/// x: [N, 4, H, W] in [0, 1]; output 255 * clamp(x, eps, 1)^gamma_c.
template <typename T>
nn::Forward<T, GgeCache<T>> gge_forward(const BasicTensor<T>& x, const GammaParams<T>& params);

/// Accumulates alpha gradients; returns the input gradient (zero where clamped).
template <typename T>
BasicTensor<T> gge_backward(const GgeCache<T>& cache, const BasicTensor<T>& grad_out,
                            GammaParams<T>& params);

nlohmann::ordered_json gamma_to_json(const GammaParams<float>& params);
GammaParams<float> gamma_from_json(const nlohmann::json& j);

}  // namespace simrod
