#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "sdm/cli.hpp"
#include "test_util.hpp"

namespace {

using namespace sdm;
namespace fs = std::filesystem;

struct CliRun {
  int status = 0;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "sdmnet");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.status = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

SceneSpec small_scene() {
  SceneSpec s;
  s.width = 64;
  s.height = 32;
  s.max_disparity = 8;
  s.random.veins = 1;
  s.random.background = true;
  s.random.background_disparity_min = 2;
  s.random.background_disparity_max = 4;
  s.random.vein_offset_max = 2.0;
  return s;
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::uint32_t be32(const std::string& b, std::size_t at) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(b[at + i]);
  return v;
}

TEST(CliSynth, WritesTheDatasetReproducibly) {
  const auto dir = test::scratch_dir("cli_synth");
  write_text(dir / "scene.txt", format_scene_spec(small_scene()));
  const auto args = [&](const char* out) {
    return std::vector<std::string>{"synth", "--config", (dir / "scene.txt").string(), "--count", "1",
                                    "--seed", "4", "--out", (dir / out).string()};
  };
  const CliRun r = cli(args("a"));
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_TRUE(r.err.empty());
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir / "a")) ++files;
  EXPECT_EQ(files, 6u);
  ASSERT_EQ(cli(args("b")).status, 0);
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    EXPECT_EQ(test::read_bytes(e.path()), test::read_bytes(dir / "b" / e.path().filename())) << e.path();
  }
}

TEST(CliSynth, ZeroCountWritesAnEmptyManifest) {
  const auto dir = test::scratch_dir("cli_synth0");
  ASSERT_EQ(cli({"synth", "--count", "0", "--out", (dir / "d").string()}).status, 0);
  EXPECT_TRUE(read_manifest(dir / "d" / "manifest.tsv").empty());
}

TEST(CliSynth, BadSpecReportsTheLine) {
  const auto dir = test::scratch_dir("cli_badspec");
  write_text(dir / "scene.txt", "width = 64\nheight = 32\nwobble = 3\n");
  const CliRun r = cli({"synth", "--config", (dir / "scene.txt").string(), "--out", (dir / "d").string()});
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("scene.txt:3"), std::string::npos) << r.err;
  EXPECT_EQ(lines_of(r.err).size(), 1u);
  EXPECT_FALSE(fs::exists(dir / "d" / "manifest.tsv"));
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = test::scratch_dir("cli_pipeline");
    write_dataset(small_scene(), dir_ / "ds", 2, 11);
    write_text(dir_ / "run.txt",
               "[network]\nmax_disparity = 8\nfeature_channels = 4\nvolume_channels = 4\n"
               "[train]\nmax_iterations = 100\ndrop_iteration = 60\ncheckpoint_every = 50\n"
               "[paths]\ndataset = ds/manifest.tsv\nout = run\n");
    train_ = cli({"train", "--config", (dir_ / "run.txt").string()});
  }

  static inline fs::path dir_;
  static inline CliRun train_;
};

TEST_F(CliPipeline, TrainingWritesLogAndCheckpoints) {
  ASSERT_EQ(train_.status, 0) << train_.err;
  EXPECT_TRUE(fs::exists(dir_ / "run" / "checkpoint_000050.bin"));
  EXPECT_TRUE(fs::exists(dir_ / "run" / "checkpoint_000100.bin"));
  const auto log = lines_of(test::read_bytes(dir_ / "run" / "train.log"));
  ASSERT_EQ(log.size(), 100u);
  EXPECT_EQ(log[59].rfind("iter=59 ", 0), 0u);
  EXPECT_NE(log[59].find(" lr=0.001 "), std::string::npos) << log[59];
  EXPECT_NE(log[60].find(" lr=0.0001 "), std::string::npos) << log[60];
}

TEST_F(CliPipeline, FinalLossIsPinned) {
  ASSERT_EQ(train_.status, 0) << train_.err;
  const Checkpoint ck = load_checkpoint(dir_ / "run" / "checkpoint.bin");
  ASSERT_EQ(ck.iteration, 100u);
  EXPECT_NEAR(ck.history.back().total, 0.11350450480460118, 1e-9);
  const RunConfig c = checkpoint_config(ck);
  EXPECT_EQ(c.input_height, 32u);
  EXPECT_EQ(c.input_width, 64u);
  EXPECT_EQ(c.network.feature_channels, 4u);
}

TEST_F(CliPipeline, ResumeFromAScheduledCheckpointMatches) {
  ASSERT_EQ(train_.status, 0) << train_.err;
  const CliRun r = cli({"train", "--config", (dir_ / "run.txt").string(), "--resume",
                        (dir_ / "run" / "checkpoint_000050.bin").string(), "--out", (dir_ / "resumed").string()});
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_EQ(test::read_bytes(dir_ / "resumed" / "checkpoint.bin"), test::read_bytes(dir_ / "run" / "checkpoint.bin"));
}

TEST_F(CliPipeline, ZeroIterationsSavesTheInitialization) {
  RunConfig c = read_run_config(dir_ / "run.txt");
  c.train.max_iterations = 0;
  c.out_dir = dir_ / "zero0";
  const Checkpoint ck = cmd_train(c);
  EXPECT_EQ(ck.iteration, 0u);
  EXPECT_TRUE(test::read_bytes(dir_ / "zero0" / "train.log").empty());
  const ModelParams init = init_params(c.network);
  for (std::size_t i = 0; i < init.entries().size(); ++i) {
    EXPECT_EQ(ck.params.entries()[i].value.to_vector(), init.entries()[i].value.to_vector());
  }
}

TEST_F(CliPipeline, InferIsRepeatableAndEvalMatchesInMemoryScores) {
  ASSERT_EQ(train_.status, 0) << train_.err;
  const std::string ckpt = (dir_ / "run" / "checkpoint.bin").string();
  const std::string manifest = (dir_ / "ds" / "manifest.tsv").string();
  ASSERT_EQ(cli({"infer", "--checkpoint", ckpt, "--manifest", manifest, "--out", (dir_ / "p1").string()}).status, 0);
  ASSERT_EQ(cli({"infer", "--checkpoint", ckpt, "--manifest", manifest, "--out", (dir_ / "p2").string()}).status, 0);
  const auto entries = read_manifest(manifest);
  for (const auto& e : entries) {
    for (const char* suffix : {"_disp_left.pfm", "_disp_right.pfm", "_disp_left.png", "_disp_right.png"}) {
      const std::string name = e.id + suffix;
      ASSERT_TRUE(fs::exists(dir_ / "p1" / name)) << name;
      EXPECT_EQ(test::read_bytes(dir_ / "p1" / name), test::read_bytes(dir_ / "p2" / name)) << name;
    }
    const std::string png = test::read_bytes(dir_ / "p1" / (e.id + "_disp_left.png"));
    ASSERT_GT(png.size(), 24u);
    EXPECT_EQ(png.substr(1, 3), "PNG");
    EXPECT_EQ(be32(png, 16), 64u);
    EXPECT_EQ(be32(png, 20), 32u);
  }

  const std::vector<Tensor> maps =
      cmd_infer(ckpt, {{entries[0].id, entries[0].left, entries[0].right}, {entries[1].id, entries[1].left, entries[1].right}},
                dir_ / "p3");
  std::vector<EvalReport> expected;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    expected.push_back(evaluate_left(load_pair(entries[i]), maps[i], 8));
    EXPECT_EQ(read_pfm(dir_ / "p1" / (entries[i].id + "_disp_left.pfm")).to_vector(), maps[i].to_vector());
  }
  const EvalResult r = cmd_eval(dir_ / "p1", dir_ / "ds", 3.0, 8);
  ASSERT_EQ(r.per_pair.size(), 2u);
  EXPECT_EQ(r.mean.mae, aggregate(expected).mae);
  EXPECT_EQ(r.mean.outlier_rate_noc, aggregate(expected).outlier_rate_noc);
  EXPECT_EQ(r.mean.recon_ssim, aggregate(expected).recon_ssim);

  const CliRun e = cli({"eval", (dir_ / "p1").string(), (dir_ / "ds").string(), "--max-disparity", "8"});
  ASSERT_EQ(e.status, 0) << e.err;
  EXPECT_NE(e.out.find("mae = "), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "p1" / "eval.tsv"));
}

TEST_F(CliPipeline, EvalOfGroundTruthAgainstItselfIsPerfect) {
  const auto pred = dir_ / "gt_pred";
  fs::create_directories(pred);
  for (const auto& e : read_manifest(dir_ / "ds" / "manifest.tsv")) {
    fs::copy_file(e.disp_left, pred / (e.id + "_disp_left.pfm"), fs::copy_options::overwrite_existing);
  }
  const EvalResult r = cmd_eval(pred, dir_ / "ds", 3.0, 8);
  EXPECT_EQ(r.mean.mae, 0.0);
  EXPECT_EQ(r.mean.outlier_rate_all, 0.0);
  const auto rows = lines_of(format_eval_table(r));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].rfind("id\t", 0), 0u);
  EXPECT_EQ(rows[3].rfind("mean\t", 0), 0u);
}

TEST(CliEval, HandMadePair) {
  // 2x6 scene, D = 4: the valid region is the 2x2 block of columns 4 and 5.
  const auto dir = test::scratch_dir("cli_hand");
  const auto gt = dir / "gt";
  fs::create_directories(gt);
  write_pgm(gt / "l.pgm", Tensor::full({1, 2, 6}, 0.5));
  write_pgm(gt / "r.pgm", Tensor::full({1, 2, 6}, 0.5));
  write_pfm(gt / "dl.pfm", Tensor::full({2, 6}, 2.0));
  write_pfm(gt / "dr.pfm", Tensor::full({2, 6}, 2.0));
  write_pgm(gt / "occ.pgm", Tensor::zeros({1, 2, 6}));
  write_manifest(gt / "manifest.tsv", {{"p", "l.pgm", "r.pgm", "dl.pfm", "dr.pfm", "occ.pgm"}});
  fs::create_directories(dir / "pred");
  write_pfm(dir / "pred" / "p_disp_left.pfm",
            Tensor::from({2, 6}, {9, 9, 9, 9, 2.0, 3.0, 9, 9, 9, 9, 6.0, 2.5}));
  const EvalResult r = cmd_eval(dir / "pred", gt, 3.0, 4);
  EXPECT_DOUBLE_EQ(r.mean.mae, (0.0 + 1.0 + 4.0 + 0.5) / 4.0);
  EXPECT_DOUBLE_EQ(r.mean.outlier_rate_all, 0.25);
}

TEST(CliEval, MissingPredictionIsNamed) {
  const auto dir = test::scratch_dir("cli_missing");
  write_dataset(small_scene(), dir / "ds", 2, 3);
  fs::create_directories(dir / "pred");
  const auto entries = read_manifest(dir / "ds" / "manifest.tsv");
  fs::copy_file(entries[0].disp_left, dir / "pred" / (entries[0].id + "_disp_left.pfm"));
  const CliRun r = cli({"eval", (dir / "pred").string(), (dir / "ds").string(), "--max-disparity", "8"});
  EXPECT_EQ(r.status, 1);
  EXPECT_EQ(r.err.rfind("io: ", 0), 0u) << r.err;
  EXPECT_NE(r.err.find(entries[1].id), std::string::npos) << r.err;
  EXPECT_EQ(lines_of(r.err).size(), 1u);
}

TEST(CliArgs, PrecedenceAndErrors) {
  const auto dir = test::scratch_dir("cli_args");
  EXPECT_EQ(cli({}).status, 2);
  EXPECT_EQ(cli({"train", "--bogus"}).status, 2);
  EXPECT_EQ(cli({"infer"}).status, 2);  // --checkpoint is required

  const CliRun no_data = cli({"train", "--out", (dir / "o").string()});
  EXPECT_EQ(no_data.status, 1);
  EXPECT_EQ(no_data.err.rfind("config: ", 0), 0u) << no_data.err;

  write_text(dir / "run.txt", "[train]\nmax_iterations = 0\nseed = 5\n[paths]\ndataset = absent/manifest.tsv\n");
  const CliRun missing = cli({"train", "--config", (dir / "run.txt").string()});
  EXPECT_EQ(missing.status, 1);
  EXPECT_EQ(missing.err.rfind("io: ", 0), 0u) << missing.err;

  write_text(dir / "bad.txt", "[train]\nmax_iterations = 0\nrate = 1\n");
  const CliRun unknown = cli({"train", "--config", (dir / "bad.txt").string()});
  EXPECT_EQ(unknown.status, 1);
  EXPECT_NE(unknown.err.find("bad.txt:3"), std::string::npos) << unknown.err;

  // file < flags: --seed and --out win over the file.
  write_dataset(small_scene(), dir / "ds", 1, 2);
  write_text(dir / "ok.txt",
             "[network]\nmax_disparity = 8\nfeature_channels = 4\nvolume_channels = 4\nseed = 5\n"
             "[train]\nmax_iterations = 0\n[paths]\ndataset = ds/manifest.tsv\nout = from_file\n");
  ASSERT_EQ(cli({"train", "--config", (dir / "ok.txt").string(), "--seed", "8", "--out", (dir / "flag").string()}).status,
            0);
  EXPECT_FALSE(fs::exists(dir / "from_file"));
  const RunConfig c = checkpoint_config(load_checkpoint(dir / "flag" / "checkpoint.bin"));
  EXPECT_EQ(c.network.seed, 8u);
  EXPECT_EQ(c.train.seed, 8u);
  EXPECT_EQ(c.network.max_disparity, 8u);
}

TEST(CliInfer, CropsToTheTrainingExtents) {
  Rng rng(5);
  StereoPair p{test::random_tensor({1, 6, 10}, rng), test::random_tensor({1, 6, 10}, rng)};
  const StereoPair c = center_crop(p, 4, 6);
  EXPECT_EQ(c.left.shape(), (Shape{1, 4, 6}));
  EXPECT_EQ(c.left.at({0, 0, 0}), p.left.at({0, 1, 2}));
  EXPECT_EQ(center_crop(p, 0, 0).left.to_vector(), p.left.to_vector());
  test::expect_error(ErrorKind::shape, [&] { center_crop(p, 8, 6); });
}

}  // namespace
