#include "simrod/ggle.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <fmt/format.h>

#include "simrod/bayer.hpp"
#include "simrod/errors.hpp"
#include "simrod/random.hpp"

namespace simrod {

std::string_view to_string(GuidanceMode mode) {
  switch (mode) {
    case GuidanceMode::none: return "None";
    case GuidanceMode::r: return "R";
    case GuidanceMode::b: return "B";
    case GuidanceMode::rb: return "RB";
    case GuidanceMode::gg: return "GG";
    case GuidanceMode::rggb: return "RGGB";
  }
  return "?";
}

GuidanceMode parse_guidance_mode(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (GuidanceMode m : kAllGuidanceModes) {
    std::string candidate(to_string(m));
    std::transform(candidate.begin(), candidate.end(), candidate.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (candidate == upper) return m;
  }
  throw ConfigError(fmt::format("unknown guidance mode '{}' (expected None, R, B, RB, GG or RGGB)", name));
}

std::vector<std::size_t> guidance_planes(GuidanceMode mode) {
  switch (mode) {
    case GuidanceMode::none: return {};
    case GuidanceMode::r: return {kR};
    case GuidanceMode::b: return {kB};
    case GuidanceMode::rb: return {kR, kB};
    case GuidanceMode::gg: return {kG1, kG2};
    case GuidanceMode::rggb: return {kR, kG1, kG2, kB};
  }
  return {};
}

// ---------------------------------------------------------------------------

template <typename T>
void GgleWeights<T>::for_each_param(const std::function<void(const std::string&, BasicParam<T>&)>& fn) {
  for (std::size_t i = 0; i < f_l.size(); ++i) {
    const std::string p = fmt::format("ggle.f_l.{}.", i);
    fn(p + "conv.weight", f_l[i].weight);
    fn(p + "conv.bias", f_l[i].bias);
    fn(p + "bn.scale", f_l[i].bn.scale);
    fn(p + "bn.shift", f_l[i].bn.shift);
  }
  if (f_l_g) {
    fn("ggle.f_l_g.0.conv.weight", f_l_g->weight);
    fn("ggle.f_l_g.0.conv.bias", f_l_g->bias);
    fn("ggle.f_l_g.0.bn.scale", f_l_g->bn.scale);
    fn("ggle.f_l_g.0.bn.shift", f_l_g->bn.shift);
  }
  fn("ggle.fusion.weight", fusion_weight);
  fn("ggle.fusion.bias", fusion_bias);
}

template <typename T>
void GgleWeights<T>::for_each_buffer(const std::function<void(const std::string&, BasicTensor<T>&)>& fn) {
  for (std::size_t i = 0; i < f_l.size(); ++i) {
    const std::string p = fmt::format("ggle.f_l.{}.bn.", i);
    fn(p + "running_mean", f_l[i].bn.running_mean);
    fn(p + "running_var", f_l[i].bn.running_var);
  }
  if (f_l_g) {
    fn("ggle.f_l_g.0.bn.running_mean", f_l_g->bn.running_mean);
    fn("ggle.f_l_g.0.bn.running_var", f_l_g->bn.running_var);
  }
}

template <typename T>
GgleWeights<T> make_ggle(GuidanceMode mode) {
  GgleWeights<T> w;
  w.mode = mode;
  w.f_l = {nn::ConvBlock<T>(kPackedPlanes, kGgleFeatures), nn::ConvBlock<T>(kGgleFeatures, kGgleFeatures)};
  const auto planes = guidance_planes(mode);
  if (!planes.empty()) w.f_l_g = nn::ConvBlock<T>(planes.size(), kGgleFeatures);
  w.fusion_weight = BasicParam<T>(Shape{kGgleOutputs, 2 * kGgleFeatures, nn::kKernel, nn::kKernel});
  w.fusion_bias = BasicParam<T>(Shape{kGgleOutputs});
  return w;
}

namespace {

template <typename T>
void fill_he_normal(BasicTensor<T>& weight, std::uint64_t seed) {
  const std::size_t fan_in = weight.dim(1) * weight.dim(2) * weight.dim(3);
  const double gain = std::sqrt(2.0 / (1.0 + nn::kLeakySlope * nn::kLeakySlope));
  std::normal_distribution<double> dist(0.0, gain / std::sqrt(static_cast<double>(fan_in)));
  Rng rng(seed);
  for (auto& v : weight.data()) v = static_cast<T>(dist(rng));
}

}  // namespace

template <typename T>
GgleWeights<T> init_ggle(GuidanceMode mode, std::uint64_t seed) {
  GgleWeights<T> w = make_ggle<T>(mode);
  fill_he_normal(w.f_l[0].weight.value, derive_seed(seed, 0));
  fill_he_normal(w.f_l[1].weight.value, derive_seed(seed, 1));
  if (w.f_l_g) fill_he_normal(w.f_l_g->weight.value, derive_seed(seed, 2));
  fill_he_normal(w.fusion_weight.value, derive_seed(seed, 3));
  return w;
}

template <typename T>
std::size_t param_count(const GgleWeights<T>& weights) {
  std::size_t n = weights.f_l[0].param_count() + weights.f_l[1].param_count();
  if (weights.f_l_g) n += weights.f_l_g->param_count();
  return n + weights.fusion_weight.numel() + weights.fusion_bias.numel();
}

// ---------------------------------------------------------------------------

template <typename T>
nn::Forward<T, GgleCache<T>> ggle_forward(const BasicTensor<T>& x_gamma, GgleWeights<T>& weights,
                                          nn::NormMode mode, bool update_running) {
  require_4d(x_gamma, "ggle_forward");
  if (x_gamma.dim(1) != kPackedPlanes) {
    throw ShapeError(fmt::format("ggle_forward expects 4 planes, got {}", x_gamma.dim(1)));
  }
  if (x_gamma.dim(2) < nn::kKernel || x_gamma.dim(3) < nn::kKernel) {
    throw ShapeError(fmt::format("ggle_forward needs at least 3x3 spatial support, got {}x{}",
                                 x_gamma.dim(2), x_gamma.dim(3)));
  }
  const bool has_guidance = !guidance_planes(weights.mode).empty();
  if (has_guidance != weights.f_l_g.has_value()) {
    throw ConfigError("GGLE weights do not match their guidance mode");
  }

  GgleCache<T> cache;
  cache.input_shape = x_gamma.shape();
  auto h1 = nn::conv_block_forward(x_gamma, weights.f_l[0], mode, update_running);
  auto rggb = nn::conv_block_forward(h1.output, weights.f_l[1], mode, update_running);
  cache.f_l = {std::move(h1.cache), std::move(rggb.cache)};

  BasicTensor<T> fused = rggb.output;
  if (has_guidance) {
    const auto guide_in = nn::select_channels(x_gamma, guidance_planes(weights.mode));
    auto guide = nn::conv_block_forward(guide_in, *weights.f_l_g, mode, update_running);
    nn::add_inplace(fused, guide.output);
    cache.f_l_g = std::move(guide.cache);
  }
  auto out = nn::conv2d_forward(nn::concat_channels(fused, rggb.output), weights.fusion_weight,
                                weights.fusion_bias);
  cache.fusion = std::move(out.cache);
  return {std::move(out.output), std::move(cache)};
}

template <typename T>
BasicTensor<T> ggle_backward(const GgleCache<T>& cache, const BasicTensor<T>& grad_out,
                             GgleWeights<T>& weights) {
  const auto g_cat = nn::conv2d_backward(cache.fusion, grad_out, weights.fusion_weight, weights.fusion_bias);
  auto [g_fused, g_rggb] = nn::concat_channels_backward(g_cat, kGgleFeatures);
  // f_l(x) feeds both the sum and the second concat slot.
  nn::add_inplace(g_rggb, g_fused);
  auto g_h1 = nn::conv_block_backward(cache.f_l[1], g_rggb, weights.f_l[1]);
  auto g_x = nn::conv_block_backward(cache.f_l[0], g_h1, weights.f_l[0]);
  if (cache.f_l_g) {
    const auto g_guide = nn::conv_block_backward(*cache.f_l_g, g_fused, *weights.f_l_g);
    nn::scatter_add_channels(g_guide, guidance_planes(weights.mode), g_x);
  }
  return g_x;
}

template <typename T>
void append_activation_signs(const GgleCache<T>& cache, std::vector<unsigned char>& out) {
  auto append = [&](const nn::ConvBlockCache<T>& c) {
    for (T v : c.act.input.data()) out.push_back(v >= 0);
  };
  append(cache.f_l[0]);
  append(cache.f_l[1]);
  if (cache.f_l_g) append(*cache.f_l_g);
}

#define SIMROD_INSTANTIATE_GGLE(T)                                                                    \
  template struct GgleWeights<T>;                                                                     \
  template GgleWeights<T> make_ggle<T>(GuidanceMode);                                                 \
  template GgleWeights<T> init_ggle<T>(GuidanceMode, std::uint64_t);                                  \
  template std::size_t param_count(const GgleWeights<T>&);                                            \
  template nn::Forward<T, GgleCache<T>> ggle_forward(const BasicTensor<T>&, GgleWeights<T>&,          \
                                                     nn::NormMode, bool);                             \
  template BasicTensor<T> ggle_backward(const GgleCache<T>&, const BasicTensor<T>&, GgleWeights<T>&); \
  template void append_activation_signs(const GgleCache<T>&, std::vector<unsigned char>&);

SIMROD_INSTANTIATE_GGLE(float)
SIMROD_INSTANTIATE_GGLE(double)

#undef SIMROD_INSTANTIATE_GGLE

}  // namespace simrod
