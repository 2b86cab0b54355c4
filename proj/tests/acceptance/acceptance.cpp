// Acceptance suite. One PASS/FAIL line per criterion; exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "simrod/analysis.hpp"
#include "simrod/bayer.hpp"
#include "simrod/checkpoint.hpp"
#include "simrod/gge.hpp"
#include "simrod/ggle.hpp"
#include "simrod/gradcheck.hpp"
#include "simrod/random.hpp"
#include "simrod/sensor.hpp"
#include "simrod/trainer.hpp"

namespace {

using namespace simrod;
namespace fs = std::filesystem;

// Pinned tolerances and budgets.
constexpr std::size_t kGgeParams = 4;
constexpr std::size_t kEnhancementBudget = 3000;
constexpr std::size_t kReferenceGgParams = 1519;
constexpr double kGradTolerance = 1e-4;
constexpr double kGradStep = 1e-3;
constexpr int kGradSeeds = 10;
constexpr std::size_t kGradSide = 8;
constexpr int kAlphaSamples = 10000;
constexpr double kMidpoint = 0.1190476;
constexpr double kMidpointTol = 1e-6;
constexpr double kAnchorTol = 1e-4;
constexpr int kRoundtripFrames = 100;
constexpr int kSnrFrames = 50;
constexpr double kSnrMarginDb = 3.0;
constexpr std::size_t kTrainIterations = 500;
constexpr std::size_t kTrainSamples = 200;
constexpr double kLossRatio = 0.5;
constexpr double kScheduleTol = 1e-9;

constexpr double kLimitAc1 = 1.0;
constexpr double kLimitAc2 = 120.0;
constexpr double kLimitAc5 = 5.0;
constexpr double kLimitAc6 = 30.0;
constexpr double kLimitAc7 = 600.0;
constexpr double kLimitAc10 = 1800.0;

struct Verdict {
  bool pass = true;
  std::string detail;
};

void require(Verdict& v, bool ok, const std::string& what) {
  if (!ok) {
    v.pass = false;
    v.detail += (v.detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
  }
}

void note(Verdict& v, const std::string& what) { v.detail += (v.detail.empty() ? "" : "; ") + what; }

// ---------------------------------------------------------------------------

Verdict ac1_parameter_budget() {
  Verdict v;
  for (GuidanceMode mode : kAllGuidanceModes) {
    const auto model = init_model<float>(mode, 0);
    const std::size_t gge = model.gge.param_count();
    const std::size_t total = model.enhancement_param_count();
    require(v, gge == kGgeParams, fmt::format("{} GGE has {} parameters", to_string(mode), gge));
    require(v, total <= kEnhancementBudget, fmt::format("{} total {} > {}", to_string(mode), total, kEnhancementBudget));
    if (mode == GuidanceMode::gg) {
      require(v, total == kReferenceGgParams, fmt::format("GG total {} != {}", total, kReferenceGgParams));
    }
    note(v, fmt::format("{}={}", to_string(mode), total));
  }
  return v;
}

Verdict ac2_gradient_oracle() {
  Verdict v;
  GradCheckOptions opts;
  opts.h = kGradStep;
  opts.size = kGradSide;
  for (auto pipeline : {GradCheckPipeline::gge, GradCheckPipeline::ggle, GradCheckPipeline::gge_ggle,
                        GradCheckPipeline::full}) {
    double worst = 0.0;
    for (int seed = 0; seed < kGradSeeds; ++seed) {
      const auto r = grad_check(pipeline, static_cast<std::uint64_t>(seed), opts);
      const double e = std::max(r.max_rel_error, r.max_input_rel_error);
      worst = std::max(worst, e);
      require(v, e <= kGradTolerance, fmt::format("{} seed {} error {:.3e} at {}", to_string(pipeline), seed, e, r.worst_param));
    }
    note(v, fmt::format("{} max={:.2e}", to_string(pipeline), worst));
  }
  return v;
}

Verdict ac3_gamma_bounds() {
  Verdict v;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> wide(0.0, 10.0);
  std::vector<double> alphas;
  for (int i = 0; i < kAlphaSamples; ++i) alphas.push_back(wide(rng));
  // the saturated tails explicitly
  for (double a : {-1e3, -40.0, -19.5, 19.5, 40.0, 1e3}) alphas.push_back(a);
  std::size_t outside = 0;
  for (double a : alphas) {
    const double g = gamma_of_alpha(a, kDefaultGammaMin, kDefaultGammaMax);
    if (!(g > kDefaultGammaMin && g < kDefaultGammaMax)) ++outside;
  }
  require(v, outside == 0, fmt::format("{} values outside the open interval", outside));

  std::sort(alphas.begin(), alphas.end());
  std::size_t inversions = 0;
  for (std::size_t i = 1; i < alphas.size(); ++i) {
    if (gamma_of_alpha(alphas[i], kDefaultGammaMin, kDefaultGammaMax) <
        gamma_of_alpha(alphas[i - 1], kDefaultGammaMin, kDefaultGammaMax))
      ++inversions;
  }
  require(v, inversions == 0, fmt::format("{} monotonicity violations", inversions));

  const double mid = gamma_of_alpha(0.0, kDefaultGammaMin, kDefaultGammaMax);
  require(v, std::abs(mid - kMidpoint) <= kMidpointTol, fmt::format("gamma(0) = {:.9f}", mid));
  note(v, fmt::format("{} samples, gamma(0)={:.7f}", alphas.size(), mid));
  return v;
}

Verdict ac4_gamma_anchors() {
  Verdict v;
  // Gamma(1) = 255 for several learned exponents, float and double paths.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> alpha(-3.0, 3.0);
  GammaParams<float> pf;
  GammaParams<double> pd;
  for (std::size_t c = 0; c < kGammaChannels; ++c) {
    pf.alpha.value[c] = static_cast<float>(alpha(rng));
    pd.alpha.value[c] = pf.alpha.value[c];
  }
  const auto yf = gge_forward(Tensor({1, 4, 1, 1}, 1.0f), pf).output;
  const auto yd = gge_forward(Tensor64({1, 4, 1, 1}, 1.0), pd).output;
  for (std::size_t c = 0; c < kGammaChannels; ++c) {
    require(v, yf[c] == 255.0f, fmt::format("float Gamma(1) = {}", yf[c]));
    require(v, yd[c] == 255.0, fmt::format("double Gamma(1) = {}", yd[c]));
  }

  GammaParams<double> half(0.4, 0.6);  // alpha = 0 -> gamma = 0.5
  const double q = gge_forward(Tensor64({1, 4, 1, 1}, 0.25), half).output[0];
  require(v, std::abs(q - 127.5) <= kAnchorTol, fmt::format("Gamma(0.25; 0.5) = {:.9f}", q));

  // per-channel monotonicity on sorted random inputs
  const std::size_t n = 4096;
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  Tensor x({1, 4, 1, n});
  for (std::size_t c = 0; c < kGammaChannels; ++c) {
    std::vector<float> col(n);
    for (auto& s : col) s = unit(rng);
    std::sort(col.begin(), col.end());
    std::copy(col.begin(), col.end(), x.data().begin() + static_cast<std::ptrdiff_t>(c * n));
  }
  const auto y = gge_forward(x, pf).output;
  std::size_t drops = 0;
  for (std::size_t c = 0; c < kGammaChannels; ++c)
    for (std::size_t i = c * n + 1; i < (c + 1) * n; ++i) drops += y[i] < y[i - 1];
  require(v, drops == 0, fmt::format("{} monotonicity violations", drops));
  note(v, fmt::format("Gamma(0.25;0.5)={:.6f}", q));
  return v;
}

Verdict ac5_pack_roundtrip() {
  Verdict v;
  std::mt19937_64 rng(55);
  std::uniform_int_distribution<std::size_t> half_side(1, 48);
  std::uniform_int_distribution<int> level(0, 4095);
  std::size_t mismatched = 0, pixels = 0;
  for (int f = 0; f < kRoundtripFrames; ++f) {
    BayerFrame frame;
    frame.width = 2 * half_side(rng);
    frame.height = 2 * half_side(rng);
    frame.black_level = static_cast<std::uint16_t>(level(rng));
    frame.white_level = static_cast<std::uint16_t>(frame.black_level + 1 + level(rng) * 15);
    std::uniform_int_distribution<int> sample(frame.black_level, frame.white_level);
    frame.samples.resize(frame.width * frame.height);
    for (auto& s : frame.samples) s = static_cast<std::uint16_t>(sample(rng));
    const BayerFrame back = unpack(pack(frame), frame.black_level, frame.white_level);
    mismatched += back != frame;
    pixels += frame.samples.size();
  }
  require(v, mismatched == 0, fmt::format("{} frames differ", mismatched));
  note(v, fmt::format("{} frames, {} samples", kRoundtripFrames, pixels));
  return v;
}

Verdict ac6_green_snr() {
  Verdict v;
  SensorModel model = low_light_sensor();
  const auto& qe = model.quantum_efficiency;
  require(v, qe[1] == 2.0 * qe[0] && qe[1] == 2.0 * qe[2], "sensor does not have qe_g = 2 qe_r = 2 qe_b");
  SceneSpec spec;
  spec.width = 64;
  spec.height = 64;
  spec.background = {0.5, 0.5, 0.5};
  const RadianceMap scene = render_scene(spec);
  std::vector<ChannelStats> frames;
  for (int i = 0; i < kSnrFrames; ++i) {
    model.seed = derive_seed(99, static_cast<std::uint64_t>(i));
    frames.push_back(channel_snr(pack(synthesize_raw(scene, model))));
  }
  const auto mean = mean_channel_snr(frames);
  const auto& r = mean.channels[0].snr_db;
  const auto& g = mean.channels[1].snr_db;
  const auto& b = mean.channels[2].snr_db;
  require(v, r && g && b, "undefined SNR");
  if (r && g && b) {
    require(v, *g - *r >= kSnrMarginDb, fmt::format("G-R = {:.2f} dB", *g - *r));
    require(v, *g - *b >= kSnrMarginDb, fmt::format("G-B = {:.2f} dB", *g - *b));
    note(v, fmt::format("SNR R={:.2f} G={:.2f} B={:.2f} dB", *r, *g, *b));
  }
  return v;
}

TrainConfig smoke_config() {
  TrainConfig cfg;
  cfg.dataset_size = kTrainSamples;
  cfg.batch_size = 8;
  cfg.epochs = kTrainIterations / (kTrainSamples / cfg.batch_size);  // 20 epochs of 25 steps
  cfg.warmup_epochs = 2;
  cfg.seed = 0;
  return cfg;
}

std::vector<std::pair<std::string, std::string>> directory_bytes(const fs::path& dir) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::ifstream in(e.path(), std::ios::binary);
    out.emplace_back(e.path().filename().string(),
                     std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Verdict ac7_training_smoke() {
  Verdict v;
  const TrainConfig cfg = smoke_config();
  const auto data = make_config_dataset(cfg);
  auto first = train(cfg, data);
  require(v, first.iterations == kTrainIterations, fmt::format("{} iterations", first.iterations));
  const double ratio = first.final_loss() / first.initial_loss;
  require(v, ratio <= kLossRatio, fmt::format("loss ratio {:.3f}", ratio));
  for (const auto& log : first.logs)
    for (double g : log.gamma) require(v, g > cfg.gamma_min && g < cfg.gamma_max, fmt::format("gamma {} out of bounds", g));

  auto frozen_cfg = cfg;
  frozen_cfg.freeze_gge = true;
  const auto frozen = train(frozen_cfg, data);
  for (const auto& log : frozen.logs) require(v, log.gamma == frozen.logs.front().gamma, "frozen gamma moved");

  auto second = train(cfg, data);
  const fs::path root = fs::temp_directory_path() / "simrod_acceptance_ckpt";
  fs::remove_all(root);
  save_checkpoint(first.model, root / "a");
  save_checkpoint(second.model, root / "b");
  require(v, directory_bytes(root / "a") == directory_bytes(root / "b"), "checkpoints differ between runs");
  fs::remove_all(root);
  note(v, fmt::format("loss {:.4f} -> {:.4f} (ratio {:.3f})", first.initial_loss, first.final_loss(), ratio));
  return v;
}

Verdict ac8_fusion_wiring() {
  Verdict v;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> pixel(0.0f, 255.0f);
  Tensor x({2, 4, 8, 8});
  for (auto& s : x.data()) s = pixel(rng);
  for (auto norm : {nn::NormMode::train, nn::NormMode::eval}) {
    const char* tag = norm == nn::NormMode::train ? "train" : "eval";
    for (GuidanceMode mode : kAllGuidanceModes) {
      auto silent = init_ggle<float>(mode, 3);
      silent.fusion_weight.value.fill(0.0f);
      silent.fusion_bias.value.fill(0.0f);
      const auto y = ggle_forward(x, silent, norm, false).output;
      require(v, std::all_of(y.data().begin(), y.data().end(), [](float s) { return s == 0.0f; }),
              fmt::format("{} {} zero fusion gives nonzero output", tag, to_string(mode)));
      if (mode == GuidanceMode::none) continue;

      auto guided = init_ggle<float>(mode, 3);
      guided.f_l_g->weight.value.fill(0.0f);
      guided.f_l_g->bias.value.fill(0.0f);
      guided.f_l_g->bn.scale.value.fill(0.0f);
      guided.f_l_g->bn.shift.value.fill(0.0f);
      auto plain = init_ggle<float>(GuidanceMode::none, 3);
      require(v, ggle_forward(x, guided, norm, false).output == ggle_forward(x, plain, norm, false).output,
              fmt::format("{} zeroed {} branch differs from None", tag, to_string(mode)));
    }
  }
  note(v, "6 modes in train and eval normalization");
  return v;
}

Verdict ac9_schedule() {
  Verdict v;
  const std::size_t total = 500, warm = 50;
  const double base = 0.01, floor = 1e-4;
  const double last = lr_at(total, total, warm, base, floor);
  require(v, last == floor, fmt::format("final lr {}", last));
  const double mid = lr_at(warm + (total - warm) / 2, total, warm, base, floor);
  require(v, std::abs(mid - (base + floor) / 2) <= kScheduleTol, fmt::format("midpoint lr {:.12f}", mid));

  // and through the trainer: the last epoch logs the lr of the final step
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.warmup_epochs = 1;
  cfg.batch_size = 4;
  cfg.dataset_size = 8;
  cfg.frame_size = 16;
  const auto report = train(cfg, make_config_dataset(cfg));
  require(v, report.logs.back().lr == cfg.min_lr, fmt::format("trainer final lr {}", report.logs.back().lr));
  note(v, fmt::format("final={} mid={:.9f}", last, mid));
  return v;
}

Verdict ac10_ablation() {
  Verdict v;
  const TrainConfig cfg = smoke_config();
  const auto data = make_config_dataset(cfg);
  const std::vector<std::uint64_t> seeds{0};
  const auto rows = run_ablation(cfg, kAllGuidanceModes, seeds, data, 1);
  const auto again = run_ablation(cfg, kAllGuidanceModes, seeds, data, 1);
  require(v, rows.size() == kAllGuidanceModes.size(), fmt::format("{} rows", rows.size()));
  for (const auto& r : rows) require(v, r.final_loss.has_value(), fmt::format("{} diverged: {}", to_string(r.mode), r.diagnostic));
  require(v, ablation_csv(rows) == ablation_csv(again), "CSV differs between runs");
  for (const auto& r : rows)
    if (r.final_loss) note(v, fmt::format("{}={:.4f}", to_string(r.mode), *r.final_loss));
  return v;
}

struct Criterion {
  const char* id;
  const char* title;
  std::function<Verdict()> body;
  double limit_s;  // 0 = no runtime bound
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"AC1", "parameter budget", ac1_parameter_budget, kLimitAc1},
      {"AC2", "gradient oracle", ac2_gradient_oracle, kLimitAc2},
      {"AC3", "gamma bounds", ac3_gamma_bounds, 0.0},
      {"AC4", "gamma anchors", ac4_gamma_anchors, 0.0},
      {"AC5", "pack roundtrip", ac5_pack_roundtrip, kLimitAc5},
      {"AC6", "green SNR", ac6_green_snr, kLimitAc6},
      {"AC7", "training smoke", ac7_training_smoke, kLimitAc7},
      {"AC8", "fusion wiring", ac8_fusion_wiring, 0.0},
      {"AC9", "schedule anchors", ac9_schedule, 0.0},
      {"AC10", "ablation harness", ac10_ablation, kLimitAc10},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.body();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = fmt::format("threw: {}", e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_s > 0.0 && secs > c.limit_s) {
      v.pass = false;
      note(v, fmt::format("FAILED runtime {:.1f}s > {:.0f}s", secs, c.limit_s));
    }
    failures += !v.pass;
    std::cout << fmt::format("{} {} {} ({:.2f}s): {}", v.pass ? "PASS" : "FAIL", c.id, c.title, secs, v.detail)
              << std::endl;
  }
  std::cout << fmt::format("{}/{} criteria passed", criteria.size() - static_cast<std::size_t>(failures),
                           criteria.size())
            << std::endl;
  return failures == 0 ? 0 : 1;
}
