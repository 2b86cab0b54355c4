#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "oracle.hpp"
#include "simrod/errors.hpp"
#include "simrod/gge.hpp"

namespace simrod {
namespace {

using testing::max_rel_err;
using testing::numeric_gradient;
using testing::random_tensor;
using testing::to_vec;

constexpr double kMin = 1.0 / 10.5;
constexpr double kMax = 1.0 / 7.0;

TEST(GammaOfAlpha, Anchors) {
  EXPECT_NEAR(gamma_of_alpha(0.0, kMin, kMax), 0.1190476, 1e-6);
  EXPECT_DOUBLE_EQ(gamma_of_alpha(0.0, kMin, kMax), (kMin + kMax) / 2);
  EXPECT_NEAR(gamma_of_alpha(1.0, kMin, kMax), kMin + (kMax - kMin) * (0.7615941559557649 + 1) / 2, 1e-12);
  EXPECT_NEAR(gamma_of_alpha(1.0, kMin, kMax), 0.13718, 1e-5);
  EXPECT_NEAR(gamma_of_alpha(40.0, kMin, kMax), 0.142857, 1e-6);
  EXPECT_NEAR(gamma_of_alpha(-40.0, kMin, kMax), kMin, 1e-12);
}

TEST(GammaOfAlpha, StrictlyInsideBoundsForAnyFiniteAlpha) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> d(0.0, 5.0);
  for (int i = 0; i < 10000; ++i) {
    const double g = gamma_of_alpha(d(rng), kMin, kMax);
    ASSERT_GT(g, kMin);
    ASSERT_LT(g, kMax);
  }
  for (double a : {25.0, -25.0, 1e3, -1e3, std::numeric_limits<double>::max(), -std::numeric_limits<double>::max()}) {
    const double g = gamma_of_alpha(a, kMin, kMax);
    EXPECT_GT(g, kMin) << a;
    EXPECT_LT(g, kMax) << a;
  }
}

TEST(GammaOfAlpha, MonotoneIncreasing) {
  double prev = gamma_of_alpha(-6.0, kMin, kMax);
  for (double a = -6.0 + 1e-3; a <= 6.0; a += 1e-3) {
    const double g = gamma_of_alpha(a, kMin, kMax);
    ASSERT_GT(g, prev) << a;
    prev = g;
  }
}

TEST(GammaOfAlpha, Errors) {
  EXPECT_THROW(gamma_of_alpha(std::nan(""), kMin, kMax), NumericalError);
  EXPECT_THROW(gamma_of_alpha(INFINITY, kMin, kMax), NumericalError);
  EXPECT_THROW(gamma_of_alpha(0.0, kMax, kMin), ConfigError);
  EXPECT_THROW(gamma_of_alpha(0.0, 0.0, kMax), ConfigError);
  EXPECT_THROW((GammaParams<float>(0.2, 0.1)), ConfigError);
}

TEST(GammaOfAlpha, DerivativeMatchesFiniteDifference) {
  for (double a : {-2.0, -0.3, 0.0, 0.7, 1.9}) {
    const double h = 1e-5;
    const double fd = (gamma_of_alpha(a + h, kMin, kMax) - gamma_of_alpha(a - h, kMin, kMax)) / (2 * h);
    EXPECT_NEAR(gamma_of_alpha_derivative(a, kMin, kMax), fd, 1e-9);
  }
  EXPECT_NEAR(gamma_of_alpha_derivative(0.0, kMin, kMax), (kMax - kMin) / 2, 1e-15);
  EXPECT_LT(gamma_of_alpha_derivative(30.0, kMin, kMax), 1e-20);
  EXPECT_LT(gamma_of_alpha_derivative(-30.0, kMin, kMax), 1e-20);
}

TEST(GammaParams, FourParametersAtMidpoint) {
  GammaParams<float> p;
  EXPECT_EQ(p.param_count(), 4u);
  for (double g : p.gammas()) EXPECT_NEAR(g, 0.1190476, 1e-6);
}

TEST(GammaParams, JsonRoundtrip) {
  GammaParams<float> p(0.08, 0.13);
  p.alpha.value = Tensor({4}, std::vector<float>{0.1f, -0.25f, 3.0f, -7.5f});
  const auto back = gamma_from_json(gamma_to_json(p));
  EXPECT_EQ(back.alpha.value, p.alpha.value);
  EXPECT_EQ(back.gamma_min, p.gamma_min);
  EXPECT_EQ(back.gamma_max, p.gamma_max);
  EXPECT_THROW(gamma_from_json(nlohmann::json{{"alpha", {1, 2}}, {"gamma_min", 0.1}, {"gamma_max", 0.2}}),
               ConfigError);
  EXPECT_THROW(gamma_from_json(nlohmann::json{{"alpha", {0, 0, 0, 0}}, {"gamma_min", 0.3}, {"gamma_max", 0.2}}),
               ConfigError);
}

// A single-pixel image per plane, with gamma pinned to 0.5 via bounds (0.4, 0.6) and alpha = 0.
Tensor64 one_pixel(double v) { return Tensor64({1, 4, 1, 1}, v); }

TEST(GgeForward, Anchors) {
  GammaParams<double> p(0.4, 0.6);
  EXPECT_DOUBLE_EQ(gge_forward(one_pixel(1.0), p).output[0], 255.0);
  EXPECT_NEAR(gge_forward(one_pixel(0.25), p).output[0], 127.5, 1e-12);
  const double at_zero = gge_forward(one_pixel(0.0), p).output[0];
  EXPECT_GT(at_zero, 0.0);
  EXPECT_NEAR(at_zero, 255.0 * std::exp(0.5 * std::log(kGammaInputEps)), 1e-12);

  GammaParams<float> pf;
  pf.alpha.value = Tensor({4}, std::vector<float>{-3.f, 0.f, 1.f, 5.f});
  auto y = gge_forward(Tensor({1, 4, 1, 1}, 1.0f), pf).output;
  for (float v : y.data()) EXPECT_EQ(v, 255.0f);
}

TEST(GgeForward, GammaDerivativeAtQuarter) {
  // d/dgamma 255 x^gamma = 255 x^gamma ln x = 127.5 ln 0.25 at x = 0.25, gamma = 0.5
  const double h = 1e-4;
  const double fd = (255.0 * std::pow(0.25, 0.5 + h) - 255.0 * std::pow(0.25, 0.5 - h)) / (2 * h);
  EXPECT_NEAR(fd, -176.76, 0.01);

  GammaParams<double> p(0.4, 0.6);
  Tensor64 x({1, 4, 1, 1}, 0.25);
  auto fwd = gge_forward(x, p);
  Tensor64 g({1, 4, 1, 1});
  g[0] = 1.0;
  gge_backward(fwd.cache, g, p);
  // dgamma/dalpha at alpha = 0 is (0.6 - 0.4) / 2
  EXPECT_NEAR(p.alpha.grad[0] / 0.1, 127.5 * std::log(0.25), 1e-9);
  EXPECT_EQ(p.alpha.grad[1], 0.0);
}

TEST(GgeForward, ShapeChecks) {
  GammaParams<float> p;
  EXPECT_THROW(gge_forward(Tensor({1, 3, 2, 2}), p), ShapeError);
  EXPECT_THROW(gge_forward(Tensor({4, 2, 2}), p), ShapeError);
}

TEST(GgeForward, OrderPreservingPerChannel) {
  std::mt19937_64 rng(31);
  GammaParams<float> p;
  p.alpha.value = Tensor({4}, std::vector<float>{-1.5f, 0.2f, 0.9f, 2.0f});
  std::vector<float> vals(256);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  for (auto& v : vals) v = d(rng);
  vals[0] = 0.0f;
  vals[1] = 1.0f;
  std::sort(vals.begin(), vals.end());
  Tensor x({1, 4, 16, 16});
  for (std::size_t c = 0; c < 4; ++c) std::copy(vals.begin(), vals.end(), x.data().begin() + c * 256);
  auto y = gge_forward(x, p).output;
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 1; i < 256; ++i) ASSERT_LE(y[c * 256 + i - 1], y[c * 256 + i]);
  for (float v : y.data()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LE(v, 255.0f);
  }
}

TEST(GgeBackward, MatchesFiniteDifferencesOnRandomInput) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    GammaParams<double> p;
    p.alpha.value = random_tensor({4}, rng, -1.5, 1.5);
    auto x = random_tensor({2, 4, 8, 8}, rng, 0.02, 1.0);
    const auto readout = random_tensor({2, 4, 8, 8}, rng);
    auto fwd = gge_forward(x, p);
    auto gx = gge_backward(fwd.cache, readout, p);
    auto loss = [&] { return testing::dot(gge_forward(x, p).output, readout); };
    EXPECT_LE(max_rel_err(to_vec(p.alpha.grad), numeric_gradient(loss, p.alpha.value.data())), 1e-4);
    EXPECT_LE(max_rel_err(to_vec(gx), numeric_gradient(loss, x.data(), 1e-5)), 1e-4);
  }
}

TEST(GgeBackward, ClampedInputsGetNoGradient) {
  GammaParams<double> p;
  Tensor64 x({1, 4, 1, 2}, std::vector<double>{0.0, 0.5, -0.2, 0.5, 1.3, 0.5, 1.0, 0.5});
  auto fwd = gge_forward(x, p);
  auto gx = gge_backward(fwd.cache, Tensor64(x.shape(), 1.0), p);
  EXPECT_EQ(gx[0], 0.0);
  EXPECT_EQ(gx[2], 0.0);
  EXPECT_EQ(gx[4], 0.0);
  EXPECT_NE(gx[6], 0.0);  // exactly 1 is inside the range
  EXPECT_GT(gx[1], 0.0);
}

TEST(GgeBackward, SaturatedAlphaStopsLearning) {
  GammaParams<double> p;
  p.alpha.value.fill(40.0);
  Tensor64 x({1, 4, 2, 2}, 0.3);
  auto fwd = gge_forward(x, p);
  gge_backward(fwd.cache, Tensor64(x.shape(), 1.0), p);
  for (double g : p.alpha.grad.data()) EXPECT_EQ(g, 0.0);
}

}  // namespace
}  // namespace simrod
