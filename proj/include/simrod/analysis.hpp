#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "simrod/bayer.hpp"
#include "simrod/ggle.hpp"
#include "simrod/trainer.hpp"

namespace simrod {

/// Written in CSV output where an SNR is undefined (zero spread).
inline constexpr const char* kUndefinedMarker = "undefined";

struct ChannelStat {
  std::string channel;  // "R", "G" (both green planes pooled), "B"
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::optional<double> snr_db;  // 20 log10(mean / std); empty when std == 0
};

struct ChannelStats {
  std::array<ChannelStat, 3> channels;
};

ChannelStats channel_snr(const PackedRaw& packed);

/// Mean of per-frame statistics; a channel's SNR is undefined if it is
/// undefined for any frame.
ChannelStats mean_channel_snr(std::span<const ChannelStats> frames);

/// Pixel counts by strict argmax of (R, mean(G1, G2), B); ties counted separately.
struct Dominance {
  std::uint64_t r = 0, g = 0, b = 0, ties = 0;
  std::uint64_t total() const { return r + g + b + ties; }
  double r_fraction() const { return fraction(r); }
  double g_fraction() const { return fraction(g); }
  double b_fraction() const { return fraction(b); }
  double tie_fraction() const { return fraction(ties); }

 private:
  double fraction(std::uint64_t c) const {
    return total() == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(total());
  }
};

Dominance channel_dominance(const PackedRaw& packed);

struct Histogram {
  std::string channel;
  std::vector<double> edges;  // bins + 1 uniform edges
  std::vector<std::uint64_t> counts;
};

/// Uniform bins over [lo, hi]. Values at hi land in the last bin; values
/// outside the range are clamped into the end bins.
Histogram histogram(std::span<const float> values, std::size_t bins, double lo, double hi,
                    std::string channel = "");

std::string snr_csv(const ChannelStats& stats);
std::string histogram_csv(std::span<const Histogram> histograms);

struct AblationRow {
  GuidanceMode mode = GuidanceMode::gg;
  std::uint64_t seed = 0;
  std::optional<double> final_loss;  // empty when the run diverged
  std::string diagnostic;
};

struct AblationSummary {
  GuidanceMode mode = GuidanceMode::gg;
  double mean_final_loss = 0.0;
  double std_final_loss = 0.0;
  std::size_t runs = 0;
  std::size_t diverged = 0;
};

/// Trains one run per (mode, seed) with the rest of base_cfg fixed. Runs are
/// independent and may execute on `threads` workers; rows come back in
/// (mode, seed) order regardless.
std::vector<AblationRow> run_ablation(const TrainConfig& base_cfg, std::span<const GuidanceMode> modes,
                                      std::span<const std::uint64_t> seeds, const std::vector<ToySample>& dataset,
                                      std::size_t threads = 1);

std::vector<AblationSummary> summarize_ablation(std::span<const AblationRow> rows);

/// `mode,seed,final_loss`; diverged runs carry "diverged".
std::string ablation_csv(std::span<const AblationRow> rows);

}  // namespace simrod
