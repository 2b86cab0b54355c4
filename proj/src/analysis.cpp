#include "simrod/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include <fmt/format.h>

#include "simrod/errors.hpp"

namespace simrod {

namespace {

ChannelStat pooled_stat(std::string name, const PackedRaw& packed, std::initializer_list<std::size_t> planes) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t p : planes) {
    for (std::size_t i = 0; i < packed.height(); ++i) {
      for (std::size_t j = 0; j < packed.width(); ++j) sum += packed.at(p, i, j);
    }
    count += packed.height() * packed.width();
  }
  const double mean = sum / static_cast<double>(count);
  double sq = 0.0;
  for (std::size_t p : planes) {
    for (std::size_t i = 0; i < packed.height(); ++i) {
      for (std::size_t j = 0; j < packed.width(); ++j) {
        const double d = packed.at(p, i, j) - mean;
        sq += d * d;
      }
    }
  }
  ChannelStat stat{std::move(name), mean, std::sqrt(sq / static_cast<double>(count)), std::nullopt};
  if (stat.std > 0.0 && stat.mean > 0.0) stat.snr_db = 20.0 * std::log10(stat.mean / stat.std);
  return stat;
}

}  // namespace

ChannelStats channel_snr(const PackedRaw& packed) {
  return ChannelStats{{pooled_stat("R", packed, {kR}), pooled_stat("G", packed, {kG1, kG2}),
                       pooled_stat("B", packed, {kB})}};
}

ChannelStats mean_channel_snr(std::span<const ChannelStats> frames) {
  if (frames.empty()) throw ConfigError("mean_channel_snr: no frames");
  ChannelStats out = frames.front();
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, std = 0.0, snr = 0.0;
    bool defined = true;
    for (const auto& f : frames) {
      mean += f.channels[c].mean;
      std += f.channels[c].std;
      if (f.channels[c].snr_db) {
        snr += *f.channels[c].snr_db;
      } else {
        defined = false;
      }
    }
    const double k = static_cast<double>(frames.size());
    out.channels[c].mean = mean / k;
    out.channels[c].std = std / k;
    out.channels[c].snr_db = defined ? std::optional<double>(snr / k) : std::nullopt;
  }
  return out;
}

Dominance channel_dominance(const PackedRaw& packed) {
  Dominance d;
  for (std::size_t i = 0; i < packed.height(); ++i) {
    for (std::size_t j = 0; j < packed.width(); ++j) {
      const double r = packed.at(kR, i, j);
      const double g = (static_cast<double>(packed.at(kG1, i, j)) + packed.at(kG2, i, j)) / 2.0;
      const double b = packed.at(kB, i, j);
      if (r > g && r > b) {
        ++d.r;
      } else if (g > r && g > b) {
        ++d.g;
      } else if (b > r && b > g) {
        ++d.b;
      } else {
        ++d.ties;
      }
    }
  }
  return d;
}

Histogram histogram(std::span<const float> values, std::size_t bins, double lo, double hi, std::string channel) {
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  if (!(lo < hi)) throw ConfigError("histogram range must satisfy lo < hi");
  Histogram h{std::move(channel), std::vector<double>(bins + 1), std::vector<std::uint64_t>(bins, 0)};
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t k = 0; k <= bins; ++k) h.edges[k] = lo + width * static_cast<double>(k);
  h.edges[bins] = hi;
  for (float v : values) {
    const double pos = (static_cast<double>(v) - lo) / width;
    std::size_t bin = pos <= 0.0 ? 0 : static_cast<std::size_t>(pos);
    bin = std::min(bin, bins - 1);
    ++h.counts[bin];
  }
  return h;
}

std::string snr_csv(const ChannelStats& stats) {
  std::string out = "channel,mean,std,snr_db\n";
  for (const auto& c : stats.channels) {
    out += fmt::format("{},{:.9g},{:.9g},{}\n", c.channel, c.mean, c.std,
                       c.snr_db ? fmt::format("{:.6f}", *c.snr_db) : std::string(kUndefinedMarker));
  }
  return out;
}

std::string histogram_csv(std::span<const Histogram> histograms) {
  std::string out = "channel,bin_start,bin_end,count\n";
  for (const auto& h : histograms) {
    for (std::size_t k = 0; k < h.counts.size(); ++k) {
      out += fmt::format("{},{:.9g},{:.9g},{}\n", h.channel, h.edges[k], h.edges[k + 1], h.counts[k]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<AblationRow> run_ablation(const TrainConfig& base_cfg, std::span<const GuidanceMode> modes,
                                      std::span<const std::uint64_t> seeds, const std::vector<ToySample>& dataset,
                                      std::size_t threads) {
  if (modes.empty() || seeds.empty()) throw ConfigError("ablation needs at least one mode and one seed");
  std::vector<AblationRow> rows;
  for (GuidanceMode m : modes) {
    for (std::uint64_t s : seeds) rows.push_back({m, s, std::nullopt, ""});
  }
  auto run_one = [&](AblationRow& row) {
    TrainConfig cfg = base_cfg;
    cfg.guidance_mode = row.mode;
    cfg.seed = row.seed;
    try {
      row.final_loss = train(cfg, dataset).final_loss();
    } catch (const NumericalError& e) {
      row.diagnostic = e.what();
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, rows.size());
  if (workers == 1) {
    for (auto& row : rows) run_one(row);
    return rows;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < rows.size(); i = next++) run_one(rows[i]);
    });
  }
  pool.clear();
  return rows;
}

std::vector<AblationSummary> summarize_ablation(std::span<const AblationRow> rows) {
  std::vector<AblationSummary> out;
  for (const auto& row : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const AblationSummary& s) { return s.mode == row.mode; });
    if (it == out.end()) {
      out.push_back({row.mode, 0.0, 0.0, 0, 0});
      it = std::prev(out.end());
    }
    ++it->runs;
    if (!row.final_loss) ++it->diverged;
  }
  for (auto& s : out) {
    std::vector<double> losses;
    for (const auto& row : rows) {
      if (row.mode == s.mode && row.final_loss) losses.push_back(*row.final_loss);
    }
    if (losses.empty()) continue;
    double mean = 0.0;
    for (double l : losses) mean += l;
    mean /= static_cast<double>(losses.size());
    double var = 0.0;
    for (double l : losses) var += (l - mean) * (l - mean);
    s.mean_final_loss = mean;
    s.std_final_loss = std::sqrt(var / static_cast<double>(losses.size()));
  }
  return out;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::string out = "mode,seed,final_loss\n";
  for (const auto& row : rows) {
    out += fmt::format("{},{},{}\n", to_string(row.mode), row.seed,
                       row.final_loss ? fmt::format("{:.9g}", *row.final_loss) : std::string("diverged"));
  }
  return out;
}

}  // namespace simrod
