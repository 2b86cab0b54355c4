// Test-side finite-difference oracle, independent of the library's checker.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "simrod/tensor.hpp"

namespace simrod::testing {

/// Five-point central difference of f with respect to every entry of xs.
inline std::vector<double> numeric_gradient(const std::function<double()>& f, std::span<double> xs,
                                            double h = 1e-3) {
  std::vector<double> g(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double x0 = xs[i];
    auto at = [&](double d) {
      xs[i] = x0 + d;
      return f();
    };
    g[i] = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
    xs[i] = x0;
  }
  return g;
}

inline double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

inline double max_rel_err(std::span<const double> a, std::span<const double> n) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], n[i]));
  return worst;
}

inline Tensor64 random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor64 t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data()) v = d(rng);
  return t;
}

/// sum(w * y): a random linear readout that turns a tensor into a scalar loss.
inline double dot(const Tensor64& y, const Tensor64& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) s += y[i] * w[i];
  return s;
}

/// Five-point differences with the activation sign pattern held fixed; a probe
/// that crosses a kink is retried with a smaller step.
inline std::vector<double> kink_safe_gradient(const std::function<double()>& f,
                                              const std::function<std::vector<unsigned char>()>& signs,
                                              std::span<double> xs) {
  std::vector<double> g(xs.size());
  const auto base = signs();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double x0 = xs[i];
    for (double h = 1e-3;; h /= 4) {
      double acc = 0.0;
      bool crossed = false;
      for (auto [d, c] : {std::pair{2.0, -1.0}, {1.0, 8.0}, {-1.0, -8.0}, {-2.0, 1.0}}) {
        xs[i] = x0 + d * h;
        acc += c * f();
        crossed |= signs() != base;
      }
      xs[i] = x0;
      g[i] = acc / (12 * h);
      if (!crossed || h < 1e-9) break;
    }
  }
  return g;
}

inline std::vector<double> to_vec(const Tensor64& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace simrod::testing
