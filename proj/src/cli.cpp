#include "simrod/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "simrod/analysis.hpp"
#include "simrod/bayer.hpp"
#include "simrod/checkpoint.hpp"
#include "simrod/errors.hpp"
#include "simrod/gradcheck.hpp"
#include "simrod/random.hpp"
#include "simrod/rten.hpp"
#include "simrod/sensor.hpp"
#include "simrod/trainer.hpp"

namespace simrod::cli {

namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(ParseError::Kind::io, fmt::format("cannot open {}", path.string()));
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(ParseError::Kind::bad_metadata, fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(ParseError::Kind::io, fmt::format("cannot open {} for writing", path.string()));
  out << text;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

PackedRaw load_packed_any(const fs::path& path) {
  if (path.extension() == ".rten") return PackedRaw(rten::read(path));
  fs::path meta = path;
  meta.replace_extension(".json");
  return pack(load_bayer(path, meta));
}

struct Options {
  // pack / unpack
  std::string pgm, meta, rten_path;
  bool reduce_green = false;
  unsigned black = 0, white = 65535;
  // shared
  std::string out, config, checkpoint, mode, data;
  std::optional<std::uint64_t> seed;
  // analysis
  std::vector<std::string> inputs;
  std::string input;
  std::size_t bins = 256;
  std::string range = "auto";
  // gradcheck
  std::string pipeline = "full";
  double h = 1e-3;
  std::string stencil = "five-point";
  // ablate
  std::string modes = "None,R,B,RB,GG,RGGB";
  std::string seeds = "1";
  std::size_t threads = 1;
  // synth
  std::size_t count = 1;
  std::size_t dataset = 0;
};

int cmd_pack(const Options& o, std::ostream& out) {
  PackedRaw packed = pack(load_bayer(o.pgm, o.meta));
  if (o.reduce_green) packed = reduce_green_sampling(packed);
  rten::write(o.out, packed.tensor());
  out << fmt::format("packed {} -> {} dims [4,{},{}]\n", o.pgm, o.out, packed.height(), packed.width());
  return kOk;
}

int cmd_unpack(const Options& o, std::ostream& out) {
  if (o.black > 65535 || o.white > 65535) throw ConfigError("levels must fit in 16 bits");
  const PackedRaw packed(rten::read(o.rten_path));
  const BayerFrame frame = unpack(packed, static_cast<std::uint16_t>(o.black), static_cast<std::uint16_t>(o.white));
  save_bayer(frame, o.pgm, o.meta);
  out << fmt::format("unpacked {} -> {} ({}x{})\n", o.rten_path, o.pgm, frame.width, frame.height);
  return kOk;
}

int cmd_enhance(const Options& o, std::ostream& out) {
  std::optional<GuidanceMode> mode;
  if (!o.mode.empty()) mode = parse_guidance_mode(o.mode);
  Model<float> model = load_checkpoint(o.checkpoint, mode);
  const PackedRaw packed(rten::read(o.input));
  const Tensor x_hat = enhance(model.gge, model.ggle, packed);
  rten::write(o.out, x_hat);
  out << fmt::format("enhanced {} -> {} dims {}\n", o.input, o.out, shape_string(x_hat.shape()));
  return kOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  TrainConfig cfg = train_config_from_json(read_json(o.config));
  if (o.seed) cfg.seed = *o.seed;
  const auto dataset = o.data.empty() ? make_config_dataset(cfg) : read_dataset(o.data);
  TrainReport report = train(cfg, dataset, &out);
  const fs::path dir = o.out;
  save_checkpoint(report.model, dir / "checkpoint");
  nlohmann::ordered_json j = report_to_json(report);
  j["config"] = train_config_to_json(cfg);
  write_text(dir / "report.json", j.dump(2) + "\n");
  out << fmt::format("initial_loss={:.6f} final_loss={:.6f} iterations={}\n", report.initial_loss,
                     report.final_loss(), report.iterations);
  return kOk;
}

int cmd_snr(const Options& o, std::ostream& out) {
  std::vector<ChannelStats> frames;
  for (std::size_t i = 0; i + 1 < o.inputs.size(); ++i) frames.push_back(channel_snr(load_packed_any(o.inputs[i])));
  write_text(o.inputs.back(), snr_csv(mean_channel_snr(frames)));
  out << fmt::format("snr over {} frame(s) -> {}\n", frames.size(), o.inputs.back());
  return kOk;
}

int cmd_hist(const Options& o, std::ostream& out) {
  const Tensor t = rten::read(o.input);
  if (t.rank() != 3 || (t.dim(0) != 3 && t.dim(0) != 4)) {
    throw ShapeError(fmt::format("hist expects a [4,H,W] packed or [3,H,W] enhanced tensor, got {}",
                                 shape_string(t.shape())));
  }
  double lo = 0.0, hi = 1.0;
  if (o.range == "byte" || (o.range == "auto" && std::any_of(t.data().begin(), t.data().end(),
                                                             [](float v) { return v > 1.0f; }))) {
    hi = 255.0;
  } else if (o.range != "unit" && o.range != "auto") {
    throw ConfigError(fmt::format("unknown range '{}' (expected auto, unit or byte)", o.range));
  }
  const std::vector<std::string> names = t.dim(0) == 4 ? std::vector<std::string>{"R", "G1", "G2", "B"}
                                                       : std::vector<std::string>{"R", "G", "B"};
  const std::size_t plane = t.dim(1) * t.dim(2);
  std::vector<Histogram> hs;
  for (std::size_t c = 0; c < t.dim(0); ++c) {
    hs.push_back(histogram(t.data().subspan(c * plane, plane), o.bins, lo, hi, names[c]));
  }
  write_text(o.out, histogram_csv(hs));
  out << fmt::format("{} channel histograms with {} bins over [{}, {}] -> {}\n", hs.size(), o.bins, lo, hi, o.out);
  return kOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  GradCheckOptions opts;
  opts.h = o.h;
  if (o.stencil == "three-point") {
    opts.stencil = FdStencil::three_point;
  } else if (o.stencil != "five-point") {
    throw ConfigError(fmt::format("unknown stencil '{}' (expected three-point or five-point)", o.stencil));
  }
  if (!o.mode.empty()) opts.mode = parse_guidance_mode(o.mode);
  const auto pipeline = parse_grad_check_pipeline(o.pipeline);
  const std::uint64_t seed = o.seed.value_or(0);
  const GradCheckResult r = grad_check(pipeline, seed, opts);
  const double worst = std::max(r.max_rel_error, r.max_input_rel_error);
  out << fmt::format("pipeline={} seed={} max_rel_error={:.3e} max_input_rel_error={:.3e} worst={} coordinates={} refined={}\n",
                     to_string(pipeline), seed, r.max_rel_error, r.max_input_rel_error, r.worst_param,
                     r.coordinates, r.refined);
  if (!(worst <= kGradCheckTolerance)) {
    throw NumericalError(fmt::format("gradient check failed: max relative error {:.3e} > {:.0e}", worst,
                                     kGradCheckTolerance));
  }
  return kOk;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  TrainConfig cfg = train_config_from_json(read_json(o.config));
  std::vector<GuidanceMode> modes;
  for (const auto& m : split_list(o.modes)) modes.push_back(parse_guidance_mode(m));
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split_list(o.seeds)) {
    try {
      seeds.push_back(std::stoull(s));
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("bad seed '{}'", s));
    }
  }
  const auto dataset = o.data.empty() ? make_config_dataset(cfg) : read_dataset(o.data);
  const auto rows = run_ablation(cfg, modes, seeds, dataset, o.threads);
  write_text(o.out, ablation_csv(rows));
  for (const auto& s : summarize_ablation(rows)) {
    out << fmt::format("mode={} mean_final_loss={:.6f} std={:.6f} runs={} diverged={}\n", to_string(s.mode),
                       s.mean_final_loss, s.std_final_loss, s.runs, s.diverged);
  }
  return kOk;
}

int cmd_synth(const Options& o, std::ostream& out) {
  const std::string model_path = o.inputs.front();
  const std::string scene_path = o.inputs.size() == 3 ? o.inputs[1] : std::string{};
  SensorModel model = sensor_from_json(read_json(model_path));
  if (o.seed) model.seed = *o.seed;
  const fs::path dir = o.inputs.back();
  fs::create_directories(dir);
  if (o.dataset > 0) {
    const auto samples = make_dataset(o.dataset, model, model.seed);
    write_dataset(samples, dir);
    out << fmt::format("wrote {} samples to {}\n", samples.size(), (dir / "manifest.json").string());
    return kOk;
  }
  if (scene_path.empty()) throw ConfigError("synth needs a scene spec or --dataset");
  const RadianceMap scene = render_scene(scene_from_json(read_json(scene_path)));
  for (std::size_t i = 0; i < o.count; ++i) {
    SensorModel m = model;
    m.seed = derive_seed(model.seed, i);
    const std::string stem = fmt::format("frame_{:04d}", i);
    save_bayer(synthesize_raw(scene, m), dir / (stem + ".pgm"), dir / (stem + ".json"));
  }
  out << fmt::format("wrote {} frames to {}\n", o.count, dir.string());
  return kOk;
}

int dispatch(CLI::App& app, const Options& o, std::ostream& out) {
  const auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  if (name == "pack") return cmd_pack(o, out);
  if (name == "unpack") return cmd_unpack(o, out);
  if (name == "enhance") return cmd_enhance(o, out);
  if (name == "train") return cmd_train(o, out);
  if (name == "snr") return cmd_snr(o, out);
  if (name == "hist") return cmd_hist(o, out);
  if (name == "gradcheck") return cmd_gradcheck(o, out);
  if (name == "ablate") return cmd_ablate(o, out);
  if (name == "synth") return cmd_synth(o, out);
  return kFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"RAW-image enhancement toolkit: packing, learnable gamma, green-guided enhancement, training and channel statistics"};
  app.name("simrod");
  app.require_subcommand(1);

  auto* pack_cmd = app.add_subcommand("pack", "Pack an RGGB mosaic into a [4,H,W] tensor container");
  pack_cmd->add_option("pgm", o.pgm, "16-bit binary PGM mosaic")->required();
  pack_cmd->add_option("meta", o.meta, "JSON sidecar with pattern and levels")->required();
  pack_cmd->add_option("out", o.out, "Output .rten file")->required();
  pack_cmd->add_flag("--reduce-green", o.reduce_green, "Replace G2 with G1 (half green sampling)");

  auto* unpack_cmd = app.add_subcommand("unpack", "Rebuild a mosaic from a packed tensor container");
  unpack_cmd->add_option("in", o.rten_path, "Packed .rten file")->required();
  unpack_cmd->add_option("pgm", o.pgm, "Output PGM")->required();
  unpack_cmd->add_option("meta", o.meta, "Output JSON sidecar")->required();
  unpack_cmd->add_option("--black", o.black, "Black level")->required();
  unpack_cmd->add_option("--white", o.white, "White level")->required();

  auto* enhance_cmd = app.add_subcommand("enhance", "Run GGE then GGLE (eval mode) on a packed image");
  enhance_cmd->add_option("in", o.input, "Packed .rten file")->required();
  enhance_cmd->add_option("checkpoint", o.checkpoint, "Checkpoint directory")->required();
  enhance_cmd->add_option("out", o.out, "Output .rten file ([3,H,W])")->required();
  enhance_cmd->add_option("--mode", o.mode, "Expected guidance mode (None, R, B, RB, GG, RGGB)");

  auto* train_cmd = app.add_subcommand("train", "Jointly train GGE, GGLE and the toy head");
  train_cmd->add_option("config", o.config, "Training config JSON")->required();
  train_cmd->add_option("out", o.out, "Output directory (checkpoint/ and report.json)")->required();
  train_cmd->add_option("--data", o.data, "Dataset manifest.json (default: synthesize from config)");
  train_cmd->add_option("--seed", o.seed, "Override the config seed");

  auto* snr_cmd = app.add_subcommand("snr", "Per-channel mean, std and SNR (dB) over one or more frames");
  snr_cmd->add_option("paths", o.inputs, "Inputs (PGM with <stem>.json sidecar, or packed .rten) then the output CSV")
      ->required()
      ->expected(2, -1);

  auto* hist_cmd = app.add_subcommand("hist", "Per-channel histograms of a tensor container");
  hist_cmd->add_option("in", o.input, "Packed [4,H,W] or enhanced [3,H,W] .rten file")->required();
  hist_cmd->add_option("out", o.out, "Output CSV")->required();
  hist_cmd->add_option("--bins", o.bins, "Number of bins")->check(CLI::PositiveNumber);
  hist_cmd->add_option("--range", o.range, "auto, unit ([0,1]) or byte ([0,255])");

  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with central finite differences");
  gc_cmd->add_option("--pipeline", o.pipeline, "linear, gge, ggle, gge+ggle or full");
  gc_cmd->add_option("--seed", o.seed, "Input/weight seed");
  gc_cmd->add_option("--step", o.h, "Finite-difference step");
  gc_cmd->add_option("--mode", o.mode, "Guidance mode");
  gc_cmd->add_option("--stencil", o.stencil, "three-point or five-point central differences");

  auto* ablate_cmd = app.add_subcommand("ablate", "Train one run per (guidance mode, seed)");
  ablate_cmd->add_option("config", o.config, "Training config JSON")->required();
  ablate_cmd->add_option("out", o.out, "Output CSV")->required();
  ablate_cmd->add_option("--modes", o.modes, "Comma-separated guidance modes");
  ablate_cmd->add_option("--seeds", o.seeds, "Comma-separated seeds");
  ablate_cmd->add_option("--data", o.data, "Dataset manifest.json (default: synthesize from config)");
  ablate_cmd->add_option("--threads", o.threads, "Concurrent runs")->check(CLI::PositiveNumber);

  auto* synth_cmd = app.add_subcommand("synth", "Synthesize Bayer frames with the sensor model");
  synth_cmd->add_option("paths", o.inputs, "model.json [scene.json] out_dir")->required()->expected(2, 3);
  synth_cmd->add_option("--count", o.count, "Frames to render from the scene");
  synth_cmd->add_option("--dataset", o.dataset, "Write a toy dataset of this many samples instead of a scene");
  synth_cmd->add_option("--seed", o.seed, "Override the sensor seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kParseFailure;
  }

  try {
    return dispatch(app, o, out);
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kParseFailure;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace simrod::cli
