#include "simrod/gradcheck.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "simrod/errors.hpp"
#include "simrod/model.hpp"
#include "simrod/random.hpp"

namespace simrod {

std::string_view to_string(GradCheckPipeline pipeline) {
  switch (pipeline) {
    case GradCheckPipeline::linear: return "linear";
    case GradCheckPipeline::gge: return "gge";
    case GradCheckPipeline::ggle: return "ggle";
    case GradCheckPipeline::gge_ggle: return "gge+ggle";
    case GradCheckPipeline::full: return "full";
  }
  return "?";
}

GradCheckPipeline parse_grad_check_pipeline(std::string_view name) {
  for (auto p : {GradCheckPipeline::linear, GradCheckPipeline::gge, GradCheckPipeline::ggle,
                 GradCheckPipeline::gge_ggle, GradCheckPipeline::full}) {
    if (to_string(p) == name) return p;
  }
  throw ConfigError(fmt::format("unknown pipeline '{}' (expected linear, gge, ggle, gge+ggle or full)", name));
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

namespace {
constexpr int kMaxHalvings = 30;
}  // namespace

FdStats finite_difference_check(const LossProbe& loss, std::span<double> values, std::span<const double> analytic,
                                double h, bool kink_guard, FdStencil stencil) {
  if (values.size() != analytic.size()) throw ShapeError("finite_difference_check: size mismatch");
  FdStats stats;
  std::vector<unsigned char> base, signs;
  if (kink_guard) loss(&base);
  const bool five = stencil == FdStencil::five_point;
  const std::vector<double> offsets = five ? std::vector<double>{2.0, 1.0, -1.0, -2.0} : std::vector<double>{1.0, -1.0};
  const std::vector<double> weights = five ? std::vector<double>{-1.0, 8.0, -8.0, 1.0} : std::vector<double>{1.0, -1.0};
  const double denom = five ? 12.0 : 2.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double original = values[i];
    double step = h;
    double numeric = 0.0;
    for (int attempt = 0;; ++attempt) {
      double acc = 0.0;
      bool crossed = false;
      for (std::size_t k = 0; k < offsets.size(); ++k) {
        values[i] = original + offsets[k] * step;
        acc += weights[k] * loss(kink_guard ? &signs : nullptr);
        if (kink_guard && signs != base) crossed = true;
      }
      values[i] = original;
      numeric = acc / (denom * step);
      if (!crossed || attempt == kMaxHalvings) {
        if (attempt > 0) ++stats.refined;
        break;
      }
      step /= 2.0;
    }
    const double err = relative_error(analytic[i], numeric);
    if (err > stats.max_rel_error) {
      stats.max_rel_error = err;
      stats.worst_index = i;
    }
  }
  return stats;
}

namespace {

using Model64 = Model<double>;

struct Coordinate {
  std::string name;
  double* value;
};

Tensor64 uniform_tensor(Shape shape, double lo, double hi, Rng& rng) {
  Tensor64 t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

// Snaps every entry to a multiple of 2^-8 so sums and products stay exact.
void quantize(Tensor64& t) {
  for (auto& v : t.data()) v = std::round(v * 256.0) / 256.0;
}

double project(const Tensor64& out, const Tensor64& weights, double scale) {
  double acc = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) acc += weights[i] * out[i];
  return acc * scale;
}

Tensor64 projection_grad(const Tensor64& weights, double scale) {
  Tensor64 g = weights;
  for (auto& v : g.data()) v *= scale;
  return g;
}

void collect(std::vector<Coordinate>& coords, std::vector<double>& analytic, const std::string& name,
             BasicParam<double>& p) {
  for (std::size_t i = 0; i < p.numel(); ++i) {
    coords.push_back({fmt::format("{}[{}]", name, i), &p.value[i]});
    analytic.push_back(p.grad[i]);
  }
}

// Runs the check over an arbitrary list of scalar coordinates living inside
// the pipeline state.
FdStats check_coordinates(const LossProbe& loss, const std::vector<Coordinate>& coords,
                          const std::vector<double>& analytic, double h, bool kink_guard, FdStencil stencil) {
  std::vector<double> shadow(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) shadow[i] = *coords[i].value;
  // Probe through the shadow buffer so the generic routine can perturb it.
  const LossProbe bound = [&](std::vector<unsigned char>* signs) {
    for (std::size_t i = 0; i < coords.size(); ++i) *coords[i].value = shadow[i];
    return loss(signs);
  };
  auto stats = finite_difference_check(bound, shadow, analytic, h, kink_guard, stencil);
  for (std::size_t i = 0; i < coords.size(); ++i) *coords[i].value = shadow[i];
  return stats;
}

}  // namespace

GradCheckResult grad_check(GradCheckPipeline pipeline, std::uint64_t seed, const GradCheckOptions& options) {
  if (!(options.h > 0.0)) throw ConfigError("finite-difference step must be positive");
  Rng rng(derive_seed(seed, 7));
  const std::size_t n = options.batch, s = options.size;
  const bool ggle_only = pipeline == GradCheckPipeline::ggle;
  // GGLE alone sees gamma-encoded values; everything else starts from packed [0, 1] data.
  Tensor64 x = ggle_only ? uniform_tensor({n, 4, s, s}, 5.0, 250.0, rng) : uniform_tensor({n, 4, s, s}, 0.05, 0.95, rng);

  Model64 model = init_model<double>(options.mode, seed);
  {
    // Move alphas off zero so every channel has its own gamma.
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& a : model.gge.alpha.value.data()) a = dist(rng);
  }
  BasicParam<double> conv_w(uniform_tensor({3, 2, 3, 3}, -1.0, 1.0, rng));
  BasicParam<double> conv_b(uniform_tensor({3}, -1.0, 1.0, rng));
  if (pipeline == GradCheckPipeline::linear) x = uniform_tensor({n, 2, s, s}, -1.0, 1.0, rng);

  BatchTargets targets;
  {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      targets.labels.push_back(i % 2 == 0 ? 1 : 0);
      targets.reg.push_back({unit(rng), unit(rng)});
    }
  }
  const Shape out_shape = pipeline == GradCheckPipeline::linear ? Shape{n, 3, s, s}
                          : pipeline == GradCheckPipeline::gge  ? Shape{n, 4, s, s}
                                                                : Shape{n, 3, s, s};
  Tensor64 proj = uniform_tensor(out_shape, -1.0, 1.0, rng);
  double scale = 1.0 / static_cast<double>(proj.numel());
  double h = options.h;
  if (pipeline == GradCheckPipeline::linear) {
    // Dyadic data, a power-of-two mean and a power-of-two step: every probe
    // is evaluated without rounding, so only the final division can round.
    for (Tensor64* t : {&x, &conv_w.value, &conv_b.value, &proj}) quantize(*t);
    scale = 1.0 / static_cast<double>(std::bit_ceil(proj.numel()));
    h = std::exp2(std::floor(std::log2(h)));
  }

  Tensor64 input_grad;
  // Evaluates the loss; when `backward` is set also accumulates analytic gradients.
  auto run = [&](std::vector<unsigned char>* signs, bool backward) -> double {
    using nn::NormMode;
    switch (pipeline) {
      case GradCheckPipeline::linear: {
        auto out = nn::conv2d_forward(x, conv_w, conv_b);
        if (backward) input_grad = nn::conv2d_backward(out.cache, projection_grad(proj, scale), conv_w, conv_b);
        return project(out.output, proj, scale);
      }
      case GradCheckPipeline::gge: {
        auto out = gge_forward(x, model.gge);
        if (backward) input_grad = gge_backward(out.cache, projection_grad(proj, scale), model.gge);
        return project(out.output, proj, scale);
      }
      case GradCheckPipeline::ggle: {
        auto out = ggle_forward(x, model.ggle, NormMode::train, false);
        if (signs) {
          signs->clear();
          append_activation_signs(out.cache, *signs);
        }
        if (backward) input_grad = ggle_backward(out.cache, projection_grad(proj, scale), model.ggle);
        return project(out.output, proj, scale);
      }
      case GradCheckPipeline::gge_ggle: {
        auto gamma = gge_forward(x, model.gge);
        auto out = ggle_forward(gamma.output, model.ggle, NormMode::train, false);
        if (signs) {
          signs->clear();
          append_activation_signs(out.cache, *signs);
        }
        if (backward) {
          auto g = ggle_backward(out.cache, projection_grad(proj, scale), model.ggle);
          input_grad = gge_backward(gamma.cache, g, model.gge);
        }
        return project(out.output, proj, scale);
      }
      case GradCheckPipeline::full: {
        auto step = model_forward(model, x, targets, kDefaultLambda, NormMode::train, false);
        if (signs) {
          signs->clear();
          append_activation_signs(step.cache, *signs);
        }
        if (backward) model_backward(model, step.cache);
        return step.loss;
      }
    }
    return 0.0;
  };

  model.zero_grad();
  conv_w.zero_grad();
  conv_b.zero_grad();
  run(nullptr, true);

  std::vector<Coordinate> coords;
  std::vector<double> analytic;
  switch (pipeline) {
    case GradCheckPipeline::linear:
      collect(coords, analytic, "conv.weight", conv_w);
      collect(coords, analytic, "conv.bias", conv_b);
      break;
    case GradCheckPipeline::gge:
      collect(coords, analytic, "gge.alpha", model.gge.alpha);
      break;
    case GradCheckPipeline::ggle:
      model.ggle.for_each_param([&](const std::string& name, BasicParam<double>& p) { collect(coords, analytic, name, p); });
      break;
    case GradCheckPipeline::gge_ggle:
      collect(coords, analytic, "gge.alpha", model.gge.alpha);
      model.ggle.for_each_param([&](const std::string& name, BasicParam<double>& p) { collect(coords, analytic, name, p); });
      break;
    case GradCheckPipeline::full:
      model.for_each_param([&](const std::string& name, BasicParam<double>& p) { collect(coords, analytic, name, p); });
      break;
  }

  const LossProbe probe = [&](std::vector<unsigned char>* signs) { return run(signs, false); };
  GradCheckResult result;
  const auto stats = check_coordinates(probe, coords, analytic, h, options.kink_guard, options.stencil);
  result.max_rel_error = stats.max_rel_error;
  result.worst_param = coords.empty() ? "" : coords[stats.worst_index].name;
  result.coordinates = coords.size();
  result.refined = stats.refined;

  if (pipeline != GradCheckPipeline::full) {
    std::vector<Coordinate> inputs;
    std::vector<double> input_analytic(input_grad.data().begin(), input_grad.data().end());
    for (std::size_t i = 0; i < x.numel(); ++i) inputs.push_back({fmt::format("input[{}]", i), &x[i]});
    const auto in_stats = check_coordinates(probe, inputs, input_analytic, h, options.kink_guard, options.stencil);
    result.max_input_rel_error = in_stats.max_rel_error;
    result.coordinates += inputs.size();
    result.refined += in_stats.refined;
  }
  return result;
}

}  // namespace simrod
