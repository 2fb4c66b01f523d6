// Acceptance run: one PASS/FAIL line per criterion, exit status 1 on any FAIL.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sdm/data_io.hpp"
#include "sdm/eval.hpp"
#include "sdm/losses.hpp"
#include "sdm/ops.hpp"
#include "sdm/random.hpp"
#include "sdm/trainer.hpp"
#include "support/suites.hpp"

namespace {

using namespace sdm;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

int failures = 0;

void report(const char* name, bool ok, const std::string& detail) {
  std::printf("%s  %-26s %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

void suite_line(const char* name, const std::vector<suite::CheckResult>& results, double secs, double budget) {
  double worst_ratio = 0.0;
  std::string worst = "-";
  std::size_t failed = 0;
  for (const auto& r : results) {
    if (!r.pass()) ++failed;
    const double ratio = r.value / r.tolerance;
    if (ratio >= worst_ratio) worst_ratio = ratio, worst = r.name;
  }
  const bool ok = failed == 0 && secs < budget && !results.empty();
  report(name, ok,
         std::to_string(results.size()) + " checks, " + std::to_string(failed) + " failed, worst " + worst +
             fmt(" at %.2g of tolerance, %.1f s", worst_ratio, secs));
}

Tensor ramp(std::size_t h, std::size_t w, double a, double bx, double by) {
  std::vector<double> v(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) v[y * w + x] = a + bx * x + by * y;
  return Tensor::from({h, w}, v);
}

void loss_zero_cases() {
  Rng rng(21);
  double worst = 0.0;
  const std::size_t h = 12, w = 20, d = 4;
  std::vector<double> pix(h * w);
  for (double& v : pix) v = rng.uniform(0.0, 1.0);
  const Tensor img = Tensor::from({1, h, w}, pix);
  const Tensor ml = valid_region_mask(h, w, d, ViewSide::left), mr = valid_region_mask(h, w, d, ViewSide::right);
  worst = std::max(worst, std::abs(appearance_loss(img, img, ml).item()));
  for (const Tensor& field : {Tensor::full({h, w}, 3.0), ramp(h, w, 1.0, 0.2, -0.1), ramp(h, w, 6.0, -0.05, 0.3)}) {
    worst = std::max(worst, std::abs(smoothness_loss(field, img, ml).item()));
  }
  for (double c : {0.0, 1.0, 2.5, 4.0}) {
    const Tensor f = Tensor::full({h, w}, c);
    worst = std::max(worst, std::abs(consistency_loss(f, f, ml, ViewSide::left).item()));
    worst = std::max(worst, std::abs(consistency_loss(f, f, mr, ViewSide::right).item()));
  }

  // Total against components computed one by one.
  StereoPair pair{img, Tensor::from({1, h, w}, [&] {
                    std::vector<double> r(h * w);
                    for (double& v : r) v = rng.uniform(0.0, 1.0);
                    return r;
                  }())};
  const Tensor dl = ramp(h, w, 1.5, 0.05, 0.02), dr = ramp(h, w, 2.0, -0.03, 0.04);
  const Reconstructions rec = reconstruct(pair, dl, dr);
  const LossWeights lw;
  const FixedFeatureNet net = FixedFeatureNet::seeded(7);
  const Tensor ml3 = reshape(ml, {1, h, w}), mr3 = reshape(mr, {1, h, w});
  const LossReport rep = total_loss(pair, dl, dr, rec, ml, mr, lw, net);
  const double expected =
      lw.w_a * (appearance_loss(pair.left, rec.left, ml, lw).item() + appearance_loss(pair.right, rec.right, mr, lw).item()) +
      lw.w_s * (smoothness_loss(dl, pair.left, ml).item() + smoothness_loss(dr, pair.right, mr).item()) +
      lw.w_c * (consistency_loss(dl, dr, ml, ViewSide::left).item() + consistency_loss(dr, dl, mr, ViewSide::right).item()) +
      lw.w_p * (perceptual_loss(pair.left * ml3, rec.left * ml3, net).item() +
                perceptual_loss(pair.right * mr3, rec.right * mr3, net).item());
  const double total_err = std::abs(rep.total_value - expected);
  report("loss zero-cases", worst <= 1e-12 && total_err <= 1e-12,
         fmt("worst zero-case %.3g, |total - weighted sum| %.3g", worst, total_err));
}

void metric_fixtures() {
  bool ok = true;
  const Tensor pred = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
  const Tensor gt = Tensor::from({2, 2}, {1.0, 5.5, 3.0, 0.0});
  const Tensor all = Tensor::ones({2, 2});
  ok &= mae(pred, gt, all) == (0.0 + 3.5 + 0.0 + 4.0) / 4.0;
  ok &= outlier_rate(pred, gt, 3.0, all) == 0.5;
  ok &= outlier_rate(pred, gt, 3.5, all) == 0.25;  // strict: 3.5 is not an outlier
  ok &= mae(pred, gt, Tensor::from({2, 2}, {1, 0, 1, 0})) == 0.0;

  double worst_bm = 0.0;
  for (double disp : {0.0, 3.0, 7.0, 12.0}) {
    SceneSpec s;
    s.noise_sigma = 0.0;
    s.background.disparity = {disp, 0.0};
    const StereoPair p = render_synthetic_pair(s);
    const Tensor est = block_match_baseline(p, s.max_disparity, 5);
    std::vector<double> m(s.height * s.width, 0.0);
    for (std::size_t y = 2; y + 2 < s.height; ++y)
      for (std::size_t x = s.max_disparity + 2; x + 2 < s.width; ++x) m[y * s.width + x] = 1.0;
    worst_bm = std::max(worst_bm, mae(est, p.gt_disp_left, Tensor::from({s.height, s.width}, m)));
  }
  report("metric correctness", ok && worst_bm == 0.0,
         std::string("2x2 fixtures ") + (ok ? "exact" : "wrong") + fmt(", block-match worst MAE %.3g on 4 planes", worst_bm));
}

bool same_params(const ModelParams& a, const ModelParams& b) {
  if (a.entries().size() != b.entries().size()) return false;
  for (std::size_t i = 0; i < a.entries().size(); ++i) {
    if (a.entries()[i].value.to_vector() != b.entries()[i].value.to_vector()) return false;
  }
  return true;
}

std::string bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void determinism_and_io() {
  const fs::path dir = fs::temp_directory_path() / "sdm_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<std::string> problems;

  SceneSpec s = suite::toy_scene();
  const auto data = generate_dataset(s, 4, 77);
  NetworkConfig net = suite::toy_network(5);
  TrainConfig tc = suite::toy_train(5, 20);
  const LossWeights lw;
  const Checkpoint a = train(data, net, tc, lw, "acceptance");
  const Checkpoint b = train(data, net, tc, lw, "acceptance");
  save_checkpoint(dir / "a.bin", a);
  save_checkpoint(dir / "b.bin", b);
  if (bytes_of(dir / "a.bin") != bytes_of(dir / "b.bin")) problems.push_back("checkpoints differ");
  const ForwardResult fa = infer(preprocess(data[0], tc.preprocess_sigma), a.params, net);
  const ForwardResult fb = infer(preprocess(data[0], tc.preprocess_sigma), b.params, net);
  write_pfm(dir / "a.pfm", fa.d_l);
  write_pfm(dir / "b.pfm", fb.d_l);
  if (bytes_of(dir / "a.pfm") != bytes_of(dir / "b.pfm")) problems.push_back("outputs differ");

  const Checkpoint back = load_checkpoint(dir / "a.bin");
  save_checkpoint(dir / "c.bin", back);
  if (!same_params(back.params, a.params) || bytes_of(dir / "c.bin") != bytes_of(dir / "a.bin")) problems.push_back("checkpoint round trip");
  if (read_pfm(dir / "a.pfm").to_vector() != round_to_float(fa.d_l).to_vector()) problems.push_back("PFM round trip");
  write_pgm(dir / "l.pgm", data[0].left);
  const Tensor l8 = read_pgm(dir / "l.pgm");
  write_pgm(dir / "l2.pgm", l8);
  if (read_pgm(dir / "l2.pgm").to_vector() != l8.to_vector() || bytes_of(dir / "l.pgm") != bytes_of(dir / "l2.pgm")) {
    problems.push_back("PGM round trip");
  }

  TrainConfig first = tc;
  first.max_iterations = 8;
  save_checkpoint(dir / "k.bin", train(data, net, first, lw, "acceptance"));
  const Checkpoint k = load_checkpoint(dir / "k.bin");
  const Checkpoint resumed = train(data, net, tc, lw, "acceptance", {}, &k);
  bool same_traj = resumed.history.size() == a.history.size() && same_params(resumed.params, a.params);
  for (std::size_t i = 0; same_traj && i < a.history.size(); ++i) same_traj = resumed.history[i].total == a.history[i].total;
  if (!same_traj) problems.push_back("resume trajectory");
  fs::remove_all(dir);

  std::string detail = "checkpoints, outputs, PGM/PFM/checkpoint round trips and resume@8 of 20 bit-exact";
  if (!problems.empty()) {
    detail = "mismatch:";
    for (const auto& p : problems) detail += " " + p + ";";
  }
  report("determinism and I/O", problems.empty(), detail);
}

}  // namespace

int main() {
  const auto t_all = Clock::now();

  auto t0 = Clock::now();
  const auto grads = suite::gradient_suite();
  suite_line("gradient suite", grads, seconds_since(t0), 60.0);

  t0 = Clock::now();
  const auto oracles = suite::oracle_suite(20);
  suite_line("oracle suite", oracles, seconds_since(t0), 30.0);

  loss_zero_cases();
  metric_fixtures();

  constexpr std::size_t kIterations = 2000;
  std::vector<suite::ToyRun> with, without;
  double train_secs = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    with.push_back(suite::toy_learning_run(seed, kIterations, true));
    train_secs += with.back().seconds;
    std::printf("      seed %llu with perceptual+mask: mae %.4f recon_l1 %.5f (%.0f s)\n",
                static_cast<unsigned long long>(seed), with.back().mae, with.back().recon_l1, with.back().seconds);
    std::fflush(stdout);
  }
  double mae_with = 0.0, l1_with = 0.0;
  for (const auto& r : with) mae_with += r.mae / 3.0, l1_with += r.recon_l1 / 3.0;
  report("end-to-end toy learning", mae_with < 1.5 && train_secs < 20 * 60.0,
         fmt("mean held-out MAE %.4f px over 3 seeds x %.0f iterations, %.0f s", mae_with,
             static_cast<double>(kIterations), train_secs));

  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    without.push_back(suite::toy_learning_run(seed, kIterations, false));
    std::printf("      seed %llu without:              mae %.4f recon_l1 %.5f (%.0f s)\n",
                static_cast<unsigned long long>(seed), without.back().mae, without.back().recon_l1,
                without.back().seconds);
    std::fflush(stdout);
  }
  double mae_without = 0.0, l1_without = 0.0;
  for (const auto& r : without) mae_without += r.mae / 3.0, l1_without += r.recon_l1 / 3.0;
  report("ablation trend", mae_with <= mae_without && l1_with <= l1_without,
         fmt("MAE %.4f vs %.4f, recon L1 %.5f vs %.5f (with vs without)", mae_with, mae_without, l1_with, l1_without));

  determinism_and_io();

  std::printf("%d of 7 criteria failed, %.0f s total\n", failures, seconds_since(t_all));
  return failures == 0 ? 0 : 1;
}
