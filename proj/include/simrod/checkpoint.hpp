#pragma once

#include <filesystem>
#include <optional>

#include "simrod/model.hpp"

namespace simrod {

/// Checkpoint directory layout:
///   manifest.json  {"format":"simrod-checkpoint","version":1,"guidance_mode":..,
///                   "gge":{"alpha":[..],"gamma_min":..,"gamma_max":..},
///                   "tensors":{"ggle.f_l.0.conv.weight":"ggle.f_l.0.conv.weight.rten", ...}}
///   <name>.rten    one RTEN container per parameter or running statistic
void save_checkpoint(Model<float>& model, const std::filesystem::path& dir);

/// Throws ConfigError when the stored architecture differs from `expected_mode`
/// or any tensor has an unexpected shape; ParseError on unreadable files.
Model<float> load_checkpoint(const std::filesystem::path& dir,
                             std::optional<GuidanceMode> expected_mode = std::nullopt);

}  // namespace simrod
