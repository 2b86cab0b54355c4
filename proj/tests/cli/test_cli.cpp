#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "simrod/bayer.hpp"
#include "simrod/cli.hpp"
#include "simrod/rten.hpp"

namespace simrod {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("simrod_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Mosaic with varied samples between the levels.
  void write_frame(const std::string& stem, std::size_t w = 4, std::size_t h = 4) const {
    BayerFrame f;
    f.width = w;
    f.height = h;
    f.black_level = 64;
    f.white_level = 1023;
    for (std::size_t i = 0; i < w * h; ++i) f.samples.push_back(static_cast<std::uint16_t>(64 + 37 * i % 900));
    save_bayer(f, path(stem + ".pgm"), path(stem + ".json"));
  }

  void write_config(const std::string& name, const std::string& extra = "") const {
    spit(path(name), R"({"epochs": 1, "warmup_epochs": 0, "batch_size": 4, "dataset_size": 8, "frame_size": 16)" + extra +
                         "}");
  }

  fs::path dir_;
};

TEST_F(Cli, PackReportsDims) {
  write_frame("a");
  const auto r = invoke({"pack", path("a.pgm"), path("a.json"), path("a.rten")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("dims [4,2,2]"), std::string::npos) << r.out;
  EXPECT_EQ(rten::read(path("a.rten")).shape(), (Shape{4, 2, 2}));
}

TEST_F(Cli, PackRejectsOddDimensions) {
  write_frame("a");
  std::string pgm = "P5\n3 4\n65535\n";
  pgm.append(3 * 4 * 2, '\x01');
  spit(path("odd.pgm"), pgm);
  const auto r = invoke({"pack", path("odd.pgm"), path("a.json"), path("odd.rten")});
  EXPECT_EQ(r.code, cli::kParseFailure);
  EXPECT_FALSE(r.err.empty());
  EXPECT_FALSE(fs::exists(path("odd.rten")));
}

TEST_F(Cli, PackUnpackIsByteIdentical) {
  write_frame("a", 8, 6);
  ASSERT_EQ(invoke({"pack", path("a.pgm"), path("a.json"), path("a.rten")}).code, 0);
  const auto r = invoke({"unpack", path("a.rten"), path("b.pgm"), path("b.json"), "--black", "64", "--white", "1023"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(path("a.pgm")), slurp(path("b.pgm")));
  EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
}

TEST_F(Cli, MissingInputIsParseFailure) {
  EXPECT_EQ(invoke({"pack", path("nope.pgm"), path("nope.json"), path("x.rten")}).code, cli::kParseFailure);
}

TEST_F(Cli, TrainWithZeroEpochs) {
  spit(path("cfg.json"), R"({"epochs": 0, "dataset_size": 4, "frame_size": 16})");
  const auto r = invoke({"train", path("cfg.json"), path("run")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("run/checkpoint/manifest.json")));
  EXPECT_TRUE(fs::exists(path("run/report.json")));
  EXPECT_NE(r.out.find("iterations=0"), std::string::npos) << r.out;
}

TEST_F(Cli, TrainPrintsEpochLines) {
  write_config("cfg.json");
  const auto r = invoke({"train", path("cfg.json"), path("run"), "--seed", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("epoch=1 loss=", 0), 0u) << r.out;
  EXPECT_NE(r.out.find("final_loss="), std::string::npos);
  EXPECT_NE(slurp(path("run/report.json")).find("\"seed\": 3"), std::string::npos);
}

TEST_F(Cli, BadConfigIsConfigFailure) {
  write_config("cfg.json", R"(, "guidance_mode": "XYZ")");
  EXPECT_EQ(invoke({"train", path("cfg.json"), path("run")}).code, cli::kConfigFailure);
  spit(path("broken.json"), "{");
  EXPECT_EQ(invoke({"train", path("broken.json"), path("run")}).code, cli::kParseFailure);
}

TEST_F(Cli, Enhance) {
  spit(path("cfg.json"), R"({"epochs": 0, "dataset_size": 4, "frame_size": 16})");
  ASSERT_EQ(invoke({"train", path("cfg.json"), path("run")}).code, 0);
  write_frame("a", 8, 8);
  ASSERT_EQ(invoke({"pack", path("a.pgm"), path("a.json"), path("a.rten")}).code, 0);

  ASSERT_EQ(invoke({"enhance", path("a.rten"), path("run/checkpoint"), path("o1.rten")}).code, 0);
  ASSERT_EQ(invoke({"enhance", path("a.rten"), path("run/checkpoint"), path("o2.rten"), "--mode", "GG"}).code, 0);
  EXPECT_EQ(slurp(path("o1.rten")), slurp(path("o2.rten")));
  EXPECT_EQ(rten::read(path("o1.rten")).shape(), (Shape{3, 4, 4}));

  EXPECT_EQ(invoke({"enhance", path("a.rten"), path("run/checkpoint"), path("o3.rten"), "--mode", "None"}).code,
            cli::kConfigFailure);

  // Zero fusion weights leave nothing to output.
  const auto w = rten::read(path("run/checkpoint/ggle.fusion.weight.rten"));
  const auto b = rten::read(path("run/checkpoint/ggle.fusion.bias.rten"));
  rten::write(path("run/checkpoint/ggle.fusion.weight.rten"), Tensor(w.shape()));
  rten::write(path("run/checkpoint/ggle.fusion.bias.rten"), Tensor(b.shape()));
  ASSERT_EQ(invoke({"enhance", path("a.rten"), path("run/checkpoint"), path("z.rten")}).code, 0);
  const auto z = rten::read(path("z.rten"));
  EXPECT_TRUE(std::all_of(z.data().begin(), z.data().end(), [](float v) { return v == 0.0f; }));
}

TEST_F(Cli, SnrOnConstantFrameIsUndefined) {
  rten::write(path("c.rten"), Tensor({4, 2, 2}, 0.5f));
  const auto r = invoke({"snr", path("c.rten"), path("snr.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(path("snr.csv"));
  EXPECT_EQ(csv, "channel,mean,std,snr_db\nR,0.5,0,undefined\nG,0.5,0,undefined\nB,0.5,0,undefined\n");
}

TEST_F(Cli, SnrReadsMosaics) {
  write_frame("a");
  write_frame("b");
  ASSERT_EQ(invoke({"snr", path("a.pgm"), path("b.pgm"), path("snr.csv")}).code, 0);
  ASSERT_EQ(invoke({"pack", path("a.pgm"), path("a.json"), path("a.rten")}).code, 0);
  ASSERT_EQ(invoke({"snr", path("a.rten"), path("snr2.csv")}).code, 0);
  EXPECT_EQ(slurp(path("snr.csv")), slurp(path("snr2.csv")));
}

TEST_F(Cli, HistIsDeterministic) {
  write_frame("a", 8, 8);
  ASSERT_EQ(invoke({"pack", path("a.pgm"), path("a.json"), path("a.rten")}).code, 0);
  ASSERT_EQ(invoke({"hist", path("a.rten"), path("h1.csv"), "--bins", "8"}).code, 0);
  ASSERT_EQ(invoke({"hist", path("a.rten"), path("h2.csv"), "--bins", "8", "--range", "unit"}).code, 0);
  const auto csv = slurp(path("h1.csv"));
  EXPECT_EQ(csv, slurp(path("h2.csv")));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 4 * 8);
  EXPECT_EQ(invoke({"hist", path("a.rten"), path("h3.csv"), "--range", "weird"}).code, cli::kConfigFailure);
  rten::write(path("bad.rten"), Tensor({2, 2}));
  EXPECT_EQ(invoke({"hist", path("bad.rten"), path("h4.csv")}).code, cli::kConfigFailure);
}

TEST_F(Cli, GradcheckFullPipeline) {
  const auto r = invoke({"gradcheck", "--pipeline", "full", "--seed", "7"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_EQ(r.out.rfind("pipeline=full seed=7 max_rel_error=", 0), 0u) << r.out;
}

TEST_F(Cli, GradcheckFailureIsNumerical) {
  // A step this large cannot track the curvature of the gamma curve.
  const auto r = invoke({"gradcheck", "--pipeline", "gge", "--step", "0.5", "--stencil", "three-point"});
  EXPECT_EQ(r.code, cli::kNumericalFailure) << r.out;
  EXPECT_EQ(invoke({"gradcheck", "--pipeline", "nope"}).code, cli::kConfigFailure);
}

TEST_F(Cli, AblateIsDeterministic) {
  write_config("cfg.json");
  ASSERT_EQ(invoke({"ablate", path("cfg.json"), path("a1.csv"), "--modes", "GG,None", "--seeds", "0,1"}).code, 0);
  const auto r = invoke({"ablate", path("cfg.json"), path("a2.csv"), "--modes", "GG,None", "--seeds", "0,1",
                         "--threads", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("mode=GG mean_final_loss="), std::string::npos);
  const auto csv = slurp(path("a1.csv"));
  EXPECT_EQ(csv, slurp(path("a2.csv")));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_EQ(invoke({"ablate", path("cfg.json"), path("a3.csv"), "--seeds", "x"}).code, cli::kConfigFailure);
}

TEST_F(Cli, SynthIsDeterministic) {
  spit(path("model.json"), R"({"exposure": 50, "read_noise_sigma": 2, "seed": 9})");
  spit(path("scene.json"), R"({"width": 16, "height": 12, "background": [0.2, 0.3, 0.1],
                               "objects": [{"cx": 8, "cy": 6, "size": 4, "radiance": [0.9, 0.9, 0.9]}]})");
  ASSERT_EQ(invoke({"synth", path("model.json"), path("scene.json"), path("s1"), "--count", "2"}).code, 0);
  ASSERT_EQ(invoke({"synth", path("model.json"), path("scene.json"), path("s2"), "--count", "2"}).code, 0);
  EXPECT_EQ(slurp(path("s1/frame_0000.pgm")), slurp(path("s2/frame_0000.pgm")));
  EXPECT_EQ(slurp(path("s1/frame_0001.pgm")), slurp(path("s2/frame_0001.pgm")));
  EXPECT_NE(slurp(path("s1/frame_0000.pgm")), slurp(path("s1/frame_0001.pgm")));

  ASSERT_EQ(invoke({"synth", path("model.json"), path("d"), "--dataset", "4"}).code, 0);
  EXPECT_TRUE(fs::exists(path("d/manifest.json")));
  write_config("cfg.json");
  EXPECT_EQ(invoke({"train", path("cfg.json"), path("run"), "--data", path("d/manifest.json")}).code, 0);
  EXPECT_EQ(invoke({"synth", path("model.json"), path("s3")}).code, cli::kConfigFailure);
}

TEST_F(Cli, HelpForEverySubcommand) {
  const std::vector<std::pair<std::string, std::string>> cases{
      {"pack", "--reduce-green"}, {"unpack", "--black"}, {"enhance", "--mode"},   {"train", "--data"},
      {"snr", "paths"},           {"hist", "--bins"},    {"gradcheck", "--step"}, {"ablate", "--threads"},
      {"synth", "--dataset"}};
  for (const auto& [cmd, flag] : cases) {
    const auto r = invoke({cmd, "--help"});
    EXPECT_EQ(r.code, 0) << cmd;
    EXPECT_NE(r.out.find(flag), std::string::npos) << cmd << "\n" << r.out;
  }
  const auto top = invoke({"--help"});
  EXPECT_EQ(top.code, 0);
  for (const char* cmd : {"pack", "enhance", "train", "snr", "hist", "gradcheck", "ablate", "synth"})
    EXPECT_NE(top.out.find(cmd), std::string::npos) << cmd;
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(invoke({"pack", "--bogus"}).code, cli::kParseFailure);
  EXPECT_EQ(invoke({}).code, cli::kParseFailure);
  EXPECT_EQ(invoke({"frobnicate"}).code, cli::kParseFailure);
  EXPECT_EQ(invoke({"unpack", path("a.rten"), path("b.pgm"), path("b.json")}).code, cli::kParseFailure);
  EXPECT_EQ(invoke({"hist", path("a.rten"), path("h.csv"), "--bins", "0"}).code, cli::kParseFailure);
}

}  // namespace
}  // namespace simrod
