#include "simrod/gge.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "simrod/errors.hpp"

namespace simrod {

namespace {

void check_bounds(double gamma_min, double gamma_max) {
  if (!(gamma_min > 0.0) || !(gamma_min < gamma_max) || !std::isfinite(gamma_max)) {
    throw ConfigError(fmt::format("gamma bounds must satisfy 0 < min < max, got ({}, {})", gamma_min, gamma_max));
  }
}

}  // namespace

double gamma_of_alpha(double alpha, double gamma_min, double gamma_max) {
  check_bounds(gamma_min, gamma_max);
  if (!std::isfinite(alpha)) throw NumericalError("gamma_of_alpha: alpha is not finite");
  // (tanh(a) + 1) / 2 == logistic(2a)
  const double e = std::exp(-2.0 * std::abs(alpha));
  const double s = alpha >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
  const double gamma = gamma_min + s * (gamma_max - gamma_min);
  // tanh saturates in double for |alpha| > ~19; keep the open interval anyway.
  return std::clamp(gamma, std::nextafter(gamma_min, gamma_max), std::nextafter(gamma_max, gamma_min));
}

double gamma_of_alpha_derivative(double alpha, double gamma_min, double gamma_max) {
  check_bounds(gamma_min, gamma_max);
  const double t = std::tanh(alpha);
  return (gamma_max - gamma_min) / 2.0 * (1.0 - t * t);
}

template <typename T>
GammaParams<T>::GammaParams(double gmin, double gmax)
    : gamma_min(static_cast<T>(gmin)), gamma_max(static_cast<T>(gmax)) {
  validate();
}

template <typename T>
std::array<double, kGammaChannels> GammaParams<T>::gammas() const {
  std::array<double, kGammaChannels> out{};
  for (std::size_t c = 0; c < kGammaChannels; ++c) out[c] = gamma_of_alpha(alpha.value[c], gamma_min, gamma_max);
  return out;
}

template <typename T>
void GammaParams<T>::validate() const {
  check_bounds(gamma_min, gamma_max);
  if (alpha.numel() != kGammaChannels) throw ConfigError("GGE needs exactly four alphas");
}

template <typename T>
nn::Forward<T, GgeCache<T>> gge_forward(const BasicTensor<T>& x, const GammaParams<T>& params) {
  require_4d(x, "gge_forward");
  if (x.dim(1) != kGammaChannels) {
    throw ShapeError(fmt::format("gge_forward expects 4 planes, got {}", x.dim(1)));
  }
  GgeCache<T> cache{BasicTensor<T>(x.shape()), BasicTensor<T>(x.shape()),
                    std::vector<unsigned char>(x.numel()), {}, {}};
  for (std::size_t c = 0; c < kGammaChannels; ++c) {
    const double a = params.alpha.value[c];
    cache.gamma[c] = static_cast<T>(gamma_of_alpha(a, params.gamma_min, params.gamma_max));
    cache.dgamma_dalpha[c] = static_cast<T>(gamma_of_alpha_derivative(a, params.gamma_min, params.gamma_max));
  }

  const T eps = static_cast<T>(kGammaInputEps);
  const T scale = static_cast<T>(kGammaOutputScale);
  const std::size_t n_batch = x.dim(0), plane = x.dim(2) * x.dim(3);
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t c = 0; c < kGammaChannels; ++c) {
      const std::size_t base = (n * kGammaChannels + c) * plane;
      const T g = cache.gamma[c];
      for (std::size_t i = base; i < base + plane; ++i) {
        const T v = x[i];
        const T clamped = std::clamp(v, eps, T{1});
        cache.clamped[i] = clamped != v;
        cache.input[i] = clamped;
        cache.output[i] = scale * std::pow(clamped, g);
      }
    }
  }
  return {cache.output, std::move(cache)};
}

template <typename T>
BasicTensor<T> gge_backward(const GgeCache<T>& cache, const BasicTensor<T>& grad_out,
                            GammaParams<T>& params) {
  if (grad_out.shape() != cache.output.shape()) throw ShapeError("gge_backward: gradient shape mismatch");
  const std::size_t n_batch = grad_out.dim(0), plane = grad_out.dim(2) * grad_out.dim(3);
  BasicTensor<T> grad_in(grad_out.shape());
  std::array<T, kGammaChannels> dgamma{};
  for (std::size_t n = 0; n < n_batch; ++n) {
    for (std::size_t c = 0; c < kGammaChannels; ++c) {
      const std::size_t base = (n * kGammaChannels + c) * plane;
      const T g = cache.gamma[c];
      T acc = 0;
      for (std::size_t i = base; i < base + plane; ++i) {
        const T x = cache.input[i];
        const T y = cache.output[i];
        acc += grad_out[i] * y * std::log(x);                       // dy/dgamma = y ln x
        grad_in[i] = cache.clamped[i] ? T{0} : grad_out[i] * g * y / x;  // dy/dx = gamma y / x
      }
      dgamma[c] += acc;
    }
  }
  for (std::size_t c = 0; c < kGammaChannels; ++c) params.alpha.grad[c] += dgamma[c] * cache.dgamma_dalpha[c];
  return grad_in;
}

nlohmann::ordered_json gamma_to_json(const GammaParams<float>& params) {
  nlohmann::ordered_json j;
  j["alpha"] = params.alpha.value.vec();
  j["gamma_min"] = params.gamma_min;
  j["gamma_max"] = params.gamma_max;
  return j;
}

GammaParams<float> gamma_from_json(const nlohmann::json& j) {
  GammaParams<float> p;
  try {
    const auto alpha = j.at("alpha").get<std::vector<float>>();
    if (alpha.size() != kGammaChannels) throw ConfigError("GGE alpha must have four entries");
    p.alpha = Param(Tensor({kGammaChannels}, alpha));
    p.gamma_min = j.at("gamma_min").get<float>();
    p.gamma_max = j.at("gamma_max").get<float>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("bad GGE parameters: {}", e.what()));
  }
  p.validate();
  return p;
}

template struct GammaParams<float>;
template struct GammaParams<double>;
template nn::Forward<float, GgeCache<float>> gge_forward(const Tensor&, const GammaParams<float>&);
template nn::Forward<double, GgeCache<double>> gge_forward(const Tensor64&, const GammaParams<double>&);
template Tensor gge_backward(const GgeCache<float>&, const Tensor&, GammaParams<float>&);
template Tensor64 gge_backward(const GgeCache<double>&, const Tensor64&, GammaParams<double>&);

}  // namespace simrod
