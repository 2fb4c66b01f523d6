#pragma once

#include <cstddef>

#include "sdm/tensor.hpp"

namespace sdm {

/// Which view supplies the un-shifted half of a cost volume.
enum class CostDirection {
  left_ref,   // hypothesis d pairs left(x) with right(x - d)
  right_ref,  // hypothesis d pairs right(x) with left(x + d)
};

/// Concatenated-feature cost volume of shape [2F, D+1, H, W].
///
/// Channels [0, F) hold `f_ref` unchanged for every hypothesis; channels
/// [F, 2F) hold `f_other` shifted by the hypothesis, zero where the shifted
/// source leaves the image.
Tensor build_cost_volume(const Tensor& f_ref, const Tensor& f_other, std::size_t max_disparity, CostDirection direction);

/// Sub-pixel disparity as the expectation of d under softmax(-cost) along the
/// hypothesis axis. [D+1,H,W] -> [H,W], values in [0, D].
Tensor soft_argmin(const Tensor& cost);

enum class WarpDirection {
  sample_left_from_right,  // out(x) = source(x - d(x))
  sample_right_from_left,  // out(x) = source(x + d(x))
};

/// Horizontal linear resampling of a [C,H,W] source through an [H,W] disparity
/// field. Sample coordinates are clamped to the border columns.
/// Differentiable with respect to both the source and the disparity.
Tensor warp_horizontal(const Tensor& source, const Tensor& disparity, WarpDirection direction);

enum class ViewSide { left, right };

/// Binary [H,W] mask of the columns a disparity range can reconstruct: the
/// left view drops columns [0, D), the right view drops [W-D, W).
Tensor valid_region_mask(std::size_t height, std::size_t width, std::size_t max_disparity, ViewSide side);

struct DepthMap {
  Tensor depth;  // b*f/d where valid, 0 elsewhere
  Tensor valid;  // 1 where disparity > 0 and depth is finite
};

DepthMap depth_from_disparity(const Tensor& disparity, double baseline, double focal_px);

}  // namespace sdm
