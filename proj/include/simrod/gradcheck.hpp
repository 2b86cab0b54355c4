#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "simrod/ggle.hpp"

namespace simrod {

/// Differentiable pipelines the checker can exercise. `linear` is a bare
/// convolution whose loss is linear in its parameters.
enum class GradCheckPipeline { linear, gge, ggle, gge_ggle, full };

std::string_view to_string(GradCheckPipeline pipeline);
/// Accepts linear, gge, ggle, gge+ggle, full. Throws ConfigError.
GradCheckPipeline parse_grad_check_pipeline(std::string_view name);

inline constexpr double kGradCheckTolerance = 1e-4;

/// Central difference stencils: (f(x+h) - f(x-h)) / 2h, error O(h^2), or the
/// five-point form over x +- h, x +- 2h, error O(h^4).
enum class FdStencil { three_point, five_point };

struct GradCheckOptions {
  double h = 1e-3;
  GuidanceMode mode = GuidanceMode::gg;
  std::size_t batch = 2;
  std::size_t size = 8;  // spatial side of the packed input
  /// Halve h for a coordinate whose +-h probes flip any leaky-relu input sign.
  bool kink_guard = true;
  FdStencil stencil = FdStencil::five_point;
};

struct GradCheckResult {
  double max_rel_error = 0.0;        // over parameters
  std::string worst_param;
  double max_input_rel_error = 0.0;  // over the packed input (0 for `full`, which checks parameters only)
  std::size_t coordinates = 0;
  std::size_t refined = 0;  // coordinates that needed a smaller step near a kink
};

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// Scalar function of the current parameter values; fills `signs` with the
/// activation sign pattern when non-null.
using LossProbe = std::function<double(std::vector<unsigned char>* signs)>;

struct FdStats {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t refined = 0;
};

/// Central differences over every entry of `values`, compared with `analytic`.
FdStats finite_difference_check(const LossProbe& loss, std::span<double> values, std::span<const double> analytic,
                                double h, bool kink_guard, FdStencil stencil = FdStencil::five_point);

/// Runs the analytic backward pass on the 64-bit path and compares against
/// central finite differences for every parameter of the selected pipeline.
GradCheckResult grad_check(GradCheckPipeline pipeline, std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace simrod
