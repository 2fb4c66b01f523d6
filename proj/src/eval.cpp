#include "sdm/eval.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include "sdm/losses.hpp"
#include "sdm/ops.hpp"
#include "sdm/stereo_ops.hpp"

namespace sdm {

namespace {

void check_maps(const Tensor& pred, const Tensor& gt, const Tensor& mask, const char* name) {
  require(pred.shape() == gt.shape() && pred.shape() == mask.shape(), ErrorKind::shape,
          std::string(name) + ": prediction, ground truth and mask shapes must agree");
}

std::size_t mask_count(const Tensor& mask, const char* name) {
  std::size_t n = 0;
  for (double m : mask.data()) n += m != 0.0;
  require(n > 0, ErrorKind::domain, std::string(name) + ": empty mask");
  return n;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double mae(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
  check_maps(pred, gt, mask, "mae");
  const std::size_t n = mask_count(mask, "mae");
  const auto p = pred.data(), g = gt.data(), m = mask.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (m[i] != 0.0) acc += std::abs(p[i] - g[i]);
  }
  return acc / static_cast<double>(n);
}

double outlier_rate(const Tensor& pred, const Tensor& gt, double threshold, const Tensor& mask) {
  check_maps(pred, gt, mask, "outlier_rate");
  require(threshold > 0.0, ErrorKind::domain, "outlier_rate: threshold must be > 0");
  const std::size_t n = mask_count(mask, "outlier_rate");
  const auto p = pred.data(), g = gt.data(), m = mask.data();
  std::size_t bad = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (m[i] != 0.0 && std::abs(p[i] - g[i]) > threshold) ++bad;
  }
  return static_cast<double>(bad) / static_cast<double>(n);
}

ReconstructionMetrics reconstruction_metrics(const Tensor& ref, const Tensor& recon, const Tensor& mask) {
  require(ref.shape() == recon.shape() && ref.dim() == 3, ErrorKind::shape,
          "reconstruction_metrics: images must be [C,H,W] of equal shape");
  require(mask.dim() == 2 && mask.extent(0) == ref.extent(1) && mask.extent(1) == ref.extent(2), ErrorKind::shape,
          "reconstruction_metrics: mask must be [H,W]");
  mask_count(mask, "reconstruction_metrics");
  const Tensor a = ref.detach(), b = recon.detach();
  ReconstructionMetrics out;
  out.ssim_mean = masked_mean(mean(ssim(a, b), {0}), mask).item();
  out.l1_mean = masked_mean(mean(abs(a - b), {0}), mask).item();
  return out;
}

Tensor block_match_baseline(const StereoPair& pair, std::size_t max_disparity, std::size_t window) {
  require(window % 2 == 1, ErrorKind::domain, "block_match_baseline: window must be odd");
  require(pair.left.shape() == pair.right.shape() && pair.left.dim() == 3, ErrorKind::shape,
          "block_match_baseline: views must be [C,H,W] of equal shape");
  const std::size_t c = pair.left.extent(0), h = pair.height(), w = pair.width();
  require(window <= h && window <= w, ErrorKind::domain, "block_match_baseline: window larger than the image");
  require(max_disparity < w, ErrorKind::domain, "block_match_baseline: disparity range must be below the width");
  const auto L = pair.left.data(), R = pair.right.data();
  const auto r = static_cast<std::ptrdiff_t>(window / 2);
  const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
  auto at = [&](std::span<const double> img, std::size_t ch, std::ptrdiff_t y, std::ptrdiff_t x) {
    y = std::clamp(y, std::ptrdiff_t{0}, H - 1);
    x = std::clamp(x, std::ptrdiff_t{0}, W - 1);
    return img[(ch * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(x)];
  };
  std::vector<double> out(h * w, 0.0);
  for (std::ptrdiff_t y = 0; y < H; ++y) {
    for (std::ptrdiff_t x = 0; x < W; ++x) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_d = 0;
      for (std::size_t d = 0; d <= max_disparity && static_cast<std::ptrdiff_t>(d) <= x; ++d) {
        const auto xd = x - static_cast<std::ptrdiff_t>(d);
        double sad = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
            for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
              sad += std::abs(at(L, ch, y + dy, x + dx) - at(R, ch, y + dy, xd + dx));
            }
          }
        }
        if (sad < best) best = sad, best_d = d;
      }
      out[static_cast<std::size_t>(y * W + x)] = static_cast<double>(best_d);
    }
  }
  return Tensor::from({h, w}, std::move(out));
}

EvalReport evaluate_left(const StereoPair& pair, const Tensor& pred_left, std::size_t max_disparity,
                         double threshold) {
  require(pair.has_ground_truth(), ErrorKind::state, "evaluate_left: pair has no ground truth");
  const std::size_t h = pair.height(), w = pair.width();
  const Tensor valid = valid_region_mask(h, w, max_disparity, ViewSide::left);
  std::vector<double> noc = valid.to_vector();
  if (pair.occlusion_left.defined()) {
    const auto occ = pair.occlusion_left.data();
    for (std::size_t i = 0; i < noc.size(); ++i) noc[i] = occ[i] != 0.0 ? 0.0 : noc[i];
  }
  const Tensor noc_mask = Tensor::from({h, w}, std::move(noc));
  EvalReport r;
  r.pixel_threshold = threshold;
  r.mae = mae(pred_left, pair.gt_disp_left, valid);
  r.outlier_rate_all = outlier_rate(pred_left, pair.gt_disp_left, threshold, valid);
  r.outlier_rate_noc = outlier_rate(pred_left, pair.gt_disp_left, threshold, noc_mask);
  const Tensor recon = warp_horizontal(pair.right.detach(), pred_left.detach(), WarpDirection::sample_left_from_right);
  const auto rm = reconstruction_metrics(pair.left, recon, valid);
  r.recon_ssim = rm.ssim_mean;
  r.recon_l1 = rm.l1_mean;
  return r;
}

EvalReport aggregate(const std::vector<EvalReport>& reports) {
  require(!reports.empty(), ErrorKind::domain, "aggregate: no reports");
  EvalReport a;
  a.pixel_threshold = reports.front().pixel_threshold;
  for (const auto& r : reports) {
    a.mae += r.mae;
    a.outlier_rate_noc += r.outlier_rate_noc;
    a.outlier_rate_all += r.outlier_rate_all;
    a.recon_ssim += r.recon_ssim;
    a.recon_l1 += r.recon_l1;
  }
  const double n = static_cast<double>(reports.size());
  a.mae /= n, a.outlier_rate_noc /= n, a.outlier_rate_all /= n, a.recon_ssim /= n, a.recon_l1 /= n;
  return a;
}

std::string format_report(const EvalReport& r) {
  return "mae = " + num(r.mae) + "\noutlier_rate_noc = " + num(r.outlier_rate_noc) +
         "\noutlier_rate_all = " + num(r.outlier_rate_all) + "\nrecon_ssim = " + num(r.recon_ssim) +
         "\nrecon_l1 = " + num(r.recon_l1) + "\npixel_threshold = " + num(r.pixel_threshold) + "\n";
}

std::string report_header() { return "id\tmae\toutlier_rate_noc\toutlier_rate_all\trecon_ssim\trecon_l1\tthreshold"; }

std::string report_row(const std::string& id, const EvalReport& r) {
  return id + "\t" + num(r.mae) + "\t" + num(r.outlier_rate_noc) + "\t" + num(r.outlier_rate_all) + "\t" +
         num(r.recon_ssim) + "\t" + num(r.recon_l1) + "\t" + num(r.pixel_threshold);
}

}  // namespace sdm
