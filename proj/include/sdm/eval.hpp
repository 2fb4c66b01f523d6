#pragma once

#include <string>
#include <vector>

#include "sdm/stereo_pair.hpp"
#include "sdm/tensor.hpp"

namespace sdm {

/// Mean |pred - gt| over pixels where mask != 0. Domain error on an empty mask.
double mae(const Tensor& pred, const Tensor& gt, const Tensor& mask);

/// Fraction of masked pixels with |pred - gt| > threshold (strict).
double outlier_rate(const Tensor& pred, const Tensor& gt, double threshold, const Tensor& mask);

struct ReconstructionMetrics {
  double ssim_mean = 0.0;
  double l1_mean = 0.0;
};

/// Masked means of the SSIM map and of |ref - recon| for [C,H,W] images and
/// an [H,W] mask (channel-averaged).
ReconstructionMetrics reconstruction_metrics(const Tensor& ref, const Tensor& recon, const Tensor& mask);

/// Integer SAD matcher on the left view: per pixel the d in [0, D] with
/// x - d >= 0 minimizing the window SAD against the right view; replicate
/// boundary rows and columns; ties go to the smaller d.
Tensor block_match_baseline(const StereoPair& pair, std::size_t max_disparity, std::size_t window);

struct EvalReport {
  double mae = 0.0;
  double outlier_rate_noc = 0.0;
  double outlier_rate_all = 0.0;
  double recon_ssim = 0.0;
  double recon_l1 = 0.0;
  double pixel_threshold = 3.0;
};

/// Scores a left-view prediction. MAE and Out-All use the left valid-region
/// mask; Out-Noc further drops occluded pixels. Reconstruction quality warps
/// the right image with the prediction over the same valid region.
EvalReport evaluate_left(const StereoPair& pair, const Tensor& pred_left, std::size_t max_disparity,
                         double threshold = 3.0);

/// Mean of each metric over the reports.
EvalReport aggregate(const std::vector<EvalReport>& reports);

/// "metric = value" lines.
std::string format_report(const EvalReport& r);
/// Tab-separated header and row for regression tracking.
std::string report_header();
std::string report_row(const std::string& id, const EvalReport& r);

}  // namespace sdm
