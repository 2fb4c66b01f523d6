#include <gtest/gtest.h>

#include <fstream>

#include "sdm/config.hpp"
#include "test_util.hpp"

namespace {

using namespace sdm;

TEST(KvText, SectionsCommentsAndLineNumbers) {
  const auto e = parse_kv("# header\nalpha = 1\n\n[train]\n  lr = 0.5   # inline\nname = a b\n", "t.txt");
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(e[0].key, "alpha");
  EXPECT_EQ(e[1].key, "train.lr");
  EXPECT_EQ(e[1].value, "0.5");
  EXPECT_EQ(e[1].line, 5u);
  EXPECT_EQ(e[2].value, "a b");
}

TEST(KvText, MalformedInputNamesTheLine) {
  auto message = [](const char* text) {
    try {
      parse_kv(text, "cfg");
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::format);
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_NE(message("a = 1\nnot an assignment\n").find("cfg:2"), std::string::npos);
  EXPECT_NE(message("[net\n").find("cfg:1"), std::string::npos);
  EXPECT_NE(message("= 3\n").find("empty key"), std::string::npos);
  const std::string dup = message("[s]\nk = 1\nk = 2\n");
  EXPECT_NE(dup.find("cfg:3"), std::string::npos) << dup;
  EXPECT_NE(dup.find("line 2"), std::string::npos) << dup;
}

TEST(KvText, TypedValues) {
  const KvEntry b{"k", "false", 4}, n{"k", "12", 1}, d{"k", "-2.5e-3", 1}, l{"k", "2, 4 8", 1};
  EXPECT_FALSE(kv_bool(b, "s"));
  EXPECT_EQ(kv_size(n, "s"), 12u);
  EXPECT_EQ(kv_double(d, "s"), -2.5e-3);
  EXPECT_EQ(kv_sizes(l, "s"), (std::vector<std::size_t>{2, 4, 8}));
  test::expect_error(ErrorKind::format, [&] { kv_size(KvEntry{"k", "-1", 1}, "s"); });
  test::expect_error(ErrorKind::format, [&] { kv_double(KvEntry{"k", "1.0x", 1}, "s"); });
  test::expect_error(ErrorKind::format, [&] { kv_bool(KvEntry{"k", "yes", 1}, "s"); });
}

TEST(KvText, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1e-3, 3e-4, 1.0 / 3.0, 0.9990000000000001, 12345.678}) {
    EXPECT_EQ(std::stod(format_double(v)), v) << format_double(v);
  }
  EXPECT_EQ(format_double(0.001), "0.001");
}

TEST(RunConfigText, ModelConfigRoundTripsExactly) {
  RunConfig c;
  c.network.feature_channels = 8;
  c.network.volume_channels = 6;
  c.network.spp_pool_sizes = {2, 8};
  c.network.seed = 42;
  c.train.lr_initial = 3e-4;
  c.train.lr_after_drop = 1.0 / 30000.0;
  c.train.preprocess_sigma = 2.0;
  c.train.use_region_mask = false;
  c.loss.w_p = 0.0;
  c.loss.alpha_ssim = 0.85;
  c.input_height = 64;
  c.input_width = 128;
  const std::string text = format_model_config(c);
  RunConfig back;
  apply_entries(back, parse_kv(text, "m"), "m");
  EXPECT_EQ(format_model_config(back), text);
  EXPECT_EQ(back.network.spp_pool_sizes, c.network.spp_pool_sizes);
  EXPECT_EQ(back.train.lr_after_drop, c.train.lr_after_drop);
  EXPECT_FALSE(back.train.use_region_mask);
  EXPECT_EQ(back.input_width, 128u);
}

TEST(RunConfigText, UnknownKeyIsAConfigErrorWithItsLine) {
  RunConfig c;
  try {
    apply_entries(c, parse_kv("[train]\nmax_iterations = 5\nlearning_rate = 1\n", "run.txt"), "run.txt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    EXPECT_NE(std::string(e.what()).find("run.txt:3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("train.learning_rate"), std::string::npos) << e.what();
  }
}

TEST(RunConfigText, FileValuesOverrideTheBaseAndPathsResolve) {
  const auto dir = test::scratch_dir("config");
  std::ofstream(dir / "run.txt") << "[paths]\ndataset = data/manifest.tsv\n[train]\nseed = 9\n";
  RunConfig base;
  base.train.max_iterations = 77;
  const RunConfig c = read_run_config(dir / "run.txt", base);
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.train.max_iterations, 77u);
  EXPECT_EQ(c.dataset, dir / "data/manifest.tsv");
  test::expect_error(ErrorKind::io, [&] { read_run_config(dir / "absent.txt"); });
}

TEST(RunConfigText, ValidationRejectsBadValues) {
  RunConfig c;
  c.threshold = 0.0;
  test::expect_error(ErrorKind::config, [&] { c.validate(); });
  c = RunConfig{};
  c.network.max_disparity = 10;
  test::expect_error(ErrorKind::config, [&] { c.validate(); });
}

}  // namespace
