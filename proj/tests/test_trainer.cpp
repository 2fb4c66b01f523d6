#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "sdm/data_io.hpp"
#include "sdm/trainer.hpp"
#include "test_util.hpp"

namespace {

using namespace sdm;

ModelParams scalar_param(double v) {
  ModelParams p;
  p.add("w", Tensor::from({1}, {v}));
  return p;
}

TEST(Adam, ZeroGradientFromZeroStateLeavesParametersAlone) {
  ModelParams p = scalar_param(0.7);
  AdamState s = AdamState::zeros_like(p);
  adam_step(p, {{0.0}}, s, 1e-3, TrainConfig{});
  EXPECT_EQ(p.get("w").item(), 0.7);
  EXPECT_EQ(s.m[0][0], 0.0);
  EXPECT_EQ(s.v[0][0], 0.0);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, MomentsDecayUnderZeroGradient) {
  ModelParams p = scalar_param(0.0);
  AdamState s = AdamState::zeros_like(p);
  s.m[0][0] = 0.4;
  s.v[0][0] = 0.09;
  const TrainConfig c;
  adam_step(p, {{0.0}}, s, 1e-3, c);
  EXPECT_DOUBLE_EQ(s.m[0][0], 0.4 * c.beta1);
  EXPECT_DOUBLE_EQ(s.v[0][0], 0.09 * c.beta2);
}

TEST(Adam, MatchesAScalarReference) {
  const TrainConfig c;
  const double lr = 2e-3;
  const std::vector<double> grads{0.3, -1.2, 0.05, 2.0, -0.7};
  ModelParams p = scalar_param(1.0);
  AdamState s = AdamState::zeros_like(p);
  double w = 1.0, m = 0.0, v = 0.0;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    const double g = grads[t - 1];
    m = c.beta1 * m + (1 - c.beta1) * g;
    v = c.beta2 * v + (1 - c.beta2) * g * g;
    const double mh = m / (1 - std::pow(c.beta1, t)), vh = v / (1 - std::pow(c.beta2, t));
    w -= lr * mh / (std::sqrt(vh) + c.epsilon);
    adam_step(p, {{g}}, s, lr, c);
    EXPECT_NEAR(p.get("w").item(), w, 1e-15) << "step " << t;
  }
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  for (double g : {0.5, -3.0, 1e-3}) {
    ModelParams p = scalar_param(0.0);
    AdamState s = AdamState::zeros_like(p);
    adam_step(p, {{g}}, s, 1e-3, TrainConfig{});
    const double expected = -1e-3 * g / (std::abs(g) + 1e-8);
    EXPECT_NEAR(p.get("w").item(), expected, 1e-18);
  }
}

TEST(Adam, NonFiniteGradientNamesTheParameter) {
  ModelParams p;
  p.add("feature.conv0.weight", Tensor::from({2}, {1.0, 2.0}));
  p.add("feature.conv0.bias", Tensor::from({1}, {0.5}));
  AdamState s = AdamState::zeros_like(p);
  try {
    adam_step(p, {{0.1, 0.2}, {NAN}}, s, 1e-3, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
    EXPECT_NE(std::string(e.what()).find("feature.conv0.bias"), std::string::npos) << e.what();
  }
  EXPECT_EQ(p.get("feature.conv0.weight").to_vector(), (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(s.step, 0u);
}

TEST(TrainConfig, ValidationAndSchedule) {
  TrainConfig c;
  c.lr_after_drop = 2e-3;
  test::expect_error(ErrorKind::config, [&] { c.validate(); });
  c = TrainConfig{};
  c.beta2 = 1.0;
  test::expect_error(ErrorKind::config, [&] { c.validate(); });
  c = TrainConfig{};
  c.drop_iteration = 3;
  EXPECT_EQ(c.lr_at(2), c.lr_initial);
  EXPECT_EQ(c.lr_at(3), c.lr_after_drop);
}

TEST(Sampling, EveryPassVisitsEachPairOnce) {
  for (std::size_t n : {1u, 5u, 32u}) {
    for (std::size_t pass = 0; pass < 3; ++pass) {
      std::set<std::size_t> seen;
      for (std::size_t i = 0; i < n; ++i) seen.insert(sample_index(9, pass * n + i, n));
      EXPECT_EQ(seen.size(), n);
    }
  }
  EXPECT_EQ(sample_index(3, 17, 32), sample_index(3, 17, 32));
}

class TrainTest : public ::testing::Test {
 protected:
  void SetUp() override {
    SceneSpec s;
    s.width = 64;
    s.height = 32;
    s.max_disparity = 8;
    s.random.veins = 1;
    s.random.background = true;
    s.random.background_disparity_min = 2;
    s.random.background_disparity_max = 4;
    s.random.vein_offset_max = 2.0;
    data_ = generate_dataset(s, 3, 5);
    net_.max_disparity = 8;
    net_.feature_channels = 4;
    net_.volume_channels = 4;
    cfg_.max_iterations = 12;
    cfg_.drop_iteration = 5;
  }

  std::vector<StereoPair> data_;
  NetworkConfig net_;
  TrainConfig cfg_;
  LossWeights w_;
};

TEST_F(TrainTest, ZeroIterationsReturnsTheInitialization) {
  cfg_.max_iterations = 0;
  const Checkpoint ck = train(data_, net_, cfg_, w_, "cfg");
  const ModelParams init = init_params(net_);
  EXPECT_EQ(ck.iteration, 0u);
  EXPECT_TRUE(ck.history.empty());
  for (std::size_t i = 0; i < init.entries().size(); ++i) {
    EXPECT_EQ(ck.params.entries()[i].value.to_vector(), init.entries()[i].value.to_vector());
  }
}

TEST_F(TrainTest, RunsAreBitIdenticalAndScheduleIsLogged) {
  const Checkpoint a = train(data_, net_, cfg_, w_, "cfg");
  const Checkpoint b = train(data_, net_, cfg_, w_, "cfg");
  ASSERT_EQ(a.history.size(), 12u);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].total, b.history[i].total);
    EXPECT_TRUE(std::isfinite(a.history[i].total) && a.history[i].total >= 0.0);
    EXPECT_EQ(a.history[i].lr, i < 5 ? cfg_.lr_initial : cfg_.lr_after_drop);
  }
  for (std::size_t i = 0; i < a.params.entries().size(); ++i) {
    EXPECT_EQ(a.params.entries()[i].value.to_vector(), b.params.entries()[i].value.to_vector());
  }
  const std::string line = format_log_line(a.history[5]);
  EXPECT_EQ(line.rfind("iter=5 ", 0), 0u) << line;
  EXPECT_NE(line.find("lr=0.0001 "), std::string::npos) << line;
}

TEST_F(TrainTest, ResumeReproducesTheUninterruptedTrajectory) {
  const auto dir = test::scratch_dir("resume");
  const Checkpoint full = train(data_, net_, cfg_, w_, "cfg");
  TrainConfig first = cfg_;
  first.max_iterations = 2;
  save_checkpoint(dir / "k.bin", train(data_, net_, first, w_, "cfg"));
  const Checkpoint loaded = load_checkpoint(dir / "k.bin");
  const Checkpoint resumed = train(data_, net_, cfg_, w_, "cfg", {}, &loaded);
  ASSERT_EQ(resumed.history.size(), full.history.size());
  for (std::size_t i = 0; i < full.history.size(); ++i) EXPECT_EQ(resumed.history[i].total, full.history[i].total);
  EXPECT_EQ(resumed.history[11].total, full.history[11].total);  // k + 10
  for (std::size_t i = 0; i < full.params.entries().size(); ++i) {
    EXPECT_EQ(resumed.params.entries()[i].value.to_vector(), full.params.entries()[i].value.to_vector());
  }
}

TEST_F(TrainTest, CheckpointRoundTripIsBitExact) {
  const auto dir = test::scratch_dir("ckpt");
  cfg_.max_iterations = 3;
  const Checkpoint ck = train(data_, net_, cfg_, w_, "[train]\nseed = 1\n");
  save_checkpoint(dir / "a.bin", ck);
  const Checkpoint back = load_checkpoint(dir / "a.bin");
  EXPECT_EQ(back.iteration, ck.iteration);
  EXPECT_EQ(back.config_text, ck.config_text);
  EXPECT_EQ(back.adam.step, ck.adam.step);
  EXPECT_EQ(back.adam.m, ck.adam.m);
  EXPECT_EQ(back.adam.v, ck.adam.v);
  ASSERT_EQ(back.history.size(), ck.history.size());
  for (std::size_t i = 0; i < ck.history.size(); ++i) {
    EXPECT_EQ(format_log_line(back.history[i]), format_log_line(ck.history[i]));
  }
  for (std::size_t i = 0; i < ck.params.entries().size(); ++i) {
    EXPECT_EQ(back.params.entries()[i].name, ck.params.entries()[i].name);
    EXPECT_EQ(back.params.entries()[i].value.to_vector(), ck.params.entries()[i].value.to_vector());
  }
  save_checkpoint(dir / "b.bin", back);
  EXPECT_EQ(test::read_bytes(dir / "a.bin"), test::read_bytes(dir / "b.bin"));
}

TEST_F(TrainTest, CorruptCheckpointIsAFormatError) {
  const auto dir = test::scratch_dir("corrupt");
  cfg_.max_iterations = 1;
  save_checkpoint(dir / "a.bin", train(data_, net_, cfg_, w_, ""));
  std::string bytes = test::read_bytes(dir / "a.bin");
  test::write_bytes(dir / "short.bin", bytes.substr(0, bytes.size() / 2));
  test::expect_error(ErrorKind::format, [&] { load_checkpoint(dir / "short.bin"); });
  bytes[0] = 'X';
  test::write_bytes(dir / "magic.bin", bytes);
  test::expect_error(ErrorKind::format, [&] { load_checkpoint(dir / "magic.bin"); });
  test::expect_error(ErrorKind::io, [&] { load_checkpoint(dir / "absent.bin"); });
}

TEST_F(TrainTest, EmptyDatasetIsRejected) {
  test::expect_error(ErrorKind::domain, [&] { train({}, net_, cfg_, w_, ""); });
}

TEST(TrainPlane, FiveHundredIterationsHalveTheLoss) {
  // One fronto-parallel textured plane, D=8, 64x128.
  SceneSpec s;
  s.max_disparity = 8;
  s.background.disparity = {3.0, 0.0};
  s.random.background_disparity_max = 8;
  const std::vector<StereoPair> data{render_synthetic_pair(s)};
  NetworkConfig net;
  net.max_disparity = 8;
  TrainConfig cfg;
  cfg.max_iterations = 500;
  const Checkpoint ck = train(data, net, cfg, LossWeights{}, "");
  const double first = ck.history.front().total, last = ck.history.back().total;
  EXPECT_LE(last, 0.5 * first) << "first " << first << " last " << last;
}

}  // namespace
