#pragma once

#include <optional>

#include "sdm/tensor.hpp"

namespace sdm {

/// Rectified grayscale pair, intensities in [0, 1].
struct StereoPair {
  Tensor left;   // [1,H,W]
  Tensor right;  // [1,H,W]
  Tensor gt_disp_left;     // [H,W], optional (undefined when absent)
  Tensor gt_disp_right;    // [H,W], optional
  Tensor occlusion_left;   // [H,W], 1 = occluded, optional
  Tensor occlusion_right;  // [H,W], optional
  std::optional<double> baseline;
  std::optional<double> focal_px;

  std::size_t height() const { return left.extent(1); }
  std::size_t width() const { return left.extent(2); }
  bool has_ground_truth() const { return gt_disp_left.defined(); }
};

}  // namespace sdm
