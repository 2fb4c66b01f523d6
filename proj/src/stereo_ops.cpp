#include "sdm/stereo_ops.hpp"

#include <algorithm>
#include <cmath>

namespace sdm {

namespace {
using Inputs = std::span<const std::shared_ptr<detail::Node>>;
}

Tensor build_cost_volume(const Tensor& f_ref, const Tensor& f_other, std::size_t max_disparity,
                         CostDirection direction) {
  require(f_ref.dim() == 3, ErrorKind::shape, "build_cost_volume: features must be [F,H,W]");
  require(f_ref.shape() == f_other.shape(), ErrorKind::shape,
          "build_cost_volume: feature shapes differ " + to_string(f_ref.shape()) + " vs " + to_string(f_other.shape()));
  const std::size_t f = f_ref.extent(0), h = f_ref.extent(1), w = f_ref.extent(2);
  require(max_disparity < w, ErrorKind::domain,
          "build_cost_volume: disparity range " + std::to_string(max_disparity) + " must be below width " +
              std::to_string(w));
  const std::size_t nd = max_disparity + 1;
  const std::size_t hw = h * w;
  const auto ref = f_ref.data();
  const auto other = f_other.data();
  const bool left = direction == CostDirection::left_ref;

  std::vector<double> out(2 * f * nd * hw, 0.0);
  for (std::size_t c = 0; c < f; ++c) {
    for (std::size_t d = 0; d < nd; ++d) {
      std::copy_n(ref.begin() + c * hw, hw, out.begin() + (c * nd + d) * hw);
      double* dst = out.data() + ((f + c) * nd + d) * hw;
      const double* src = other.data() + c * hw;
      for (std::size_t y = 0; y < h; ++y) {
        if (left) {
          for (std::size_t x = d; x < w; ++x) dst[y * w + x] = src[y * w + x - d];
        } else {
          for (std::size_t x = 0; x + d < w; ++x) dst[y * w + x] = src[y * w + x + d];
        }
      }
    }
  }
  return make_result("build_cost_volume", {2 * f, nd, h, w}, std::move(out), {f_ref, f_other},
                     [f, nd, h, w, hw, left](const detail::Node& o, Inputs in) {
                       if (in[0]->requires_grad) {
                         auto& g = in[0]->grad_buffer();
                         for (std::size_t c = 0; c < f; ++c) {
                           for (std::size_t d = 0; d < nd; ++d) {
                             const double* src = o.grad.data() + (c * nd + d) * hw;
                             double* dst = g.data() + c * hw;
                             for (std::size_t i = 0; i < hw; ++i) dst[i] += src[i];
                           }
                         }
                       }
                       if (in[1]->requires_grad) {
                         auto& g = in[1]->grad_buffer();
                         for (std::size_t c = 0; c < f; ++c) {
                           for (std::size_t d = 0; d < nd; ++d) {
                             const double* src = o.grad.data() + ((f + c) * nd + d) * hw;
                             double* dst = g.data() + c * hw;
                             for (std::size_t y = 0; y < h; ++y) {
                               if (left) {
                                 for (std::size_t x = d; x < w; ++x) dst[y * w + x - d] += src[y * w + x];
                               } else {
                                 for (std::size_t x = 0; x + d < w; ++x) dst[y * w + x + d] += src[y * w + x];
                               }
                             }
                           }
                         }
                       }
                     });
}

Tensor soft_argmin(const Tensor& cost) {
  require(cost.dim() == 3, ErrorKind::shape, "soft_argmin: expected [D+1,H,W], got " + to_string(cost.shape()));
  const std::size_t nd = cost.extent(0);
  const std::size_t hw = cost.extent(1) * cost.extent(2);
  const double dmax = static_cast<double>(nd - 1);
  const auto c = cost.data();

  // Probabilities are kept for the reverse pass.
  auto prob = std::make_shared<std::vector<double>>(nd * hw);
  std::vector<double> out(hw);
  for (std::size_t i = 0; i < hw; ++i) {
    double mn = c[i];
    for (std::size_t d = 1; d < nd; ++d) mn = std::min(mn, c[d * hw + i]);
    double z = 0.0;
    for (std::size_t d = 0; d < nd; ++d) {
      const double e = std::exp(mn - c[d * hw + i]);
      (*prob)[d * hw + i] = e;
      z += e;
    }
    double expect = 0.0;
    for (std::size_t d = 0; d < nd; ++d) {
      double& p = (*prob)[d * hw + i];
      p /= z;
      expect += static_cast<double>(d) * p;
    }
    out[i] = std::clamp(expect, 0.0, dmax);
  }
  return make_result("soft_argmin", {cost.extent(1), cost.extent(2)}, std::move(out), {cost},
                     [nd, hw, prob](const detail::Node& o, Inputs in) {
                       auto& g = in[0]->grad_buffer();
                       for (std::size_t i = 0; i < hw; ++i) {
                         const double e = o.data[i];
                         const double go = o.grad[i];
                         for (std::size_t d = 0; d < nd; ++d) {
                           const double p = (*prob)[d * hw + i];
                           g[d * hw + i] -= go * p * (static_cast<double>(d) - e);
                         }
                       }
                     });
}

Tensor warp_horizontal(const Tensor& source, const Tensor& disparity, WarpDirection direction) {
  require(source.dim() == 3, ErrorKind::shape, "warp_horizontal: source must be [C,H,W]");
  require(disparity.dim() == 2 && disparity.extent(0) == source.extent(1) && disparity.extent(1) == source.extent(2),
          ErrorKind::shape,
          "warp_horizontal: disparity " + to_string(disparity.shape()) + " does not match source " +
              to_string(source.shape()));
  const std::size_t ch = source.extent(0), h = source.extent(1), w = source.extent(2);
  const std::size_t hw = h * w;
  const double sign = direction == WarpDirection::sample_left_from_right ? -1.0 : 1.0;
  const double xmax = static_cast<double>(w - 1);
  const auto s = source.data();
  const auto dd = disparity.data();

  // Value uses (i0, i1, frac); the disparity derivative uses the slope
  // between (g0, g1), which is one-sided exactly on the border and absent
  // once the sample is clamped.
  struct Tap {
    std::size_t i0, i1;
    double frac;
    std::size_t g0, g1;
    bool slope;
  };
  auto taps = std::make_shared<std::vector<Tap>>(hw);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double xs = static_cast<double>(x) + sign * dd[y * w + x];
      Tap t{};
      if (xs < 0.0 || w == 1) {
        t = {0, 0, 0.0, 0, 0, false};
      } else if (xs > xmax) {
        t = {w - 1, w - 1, 0.0, 0, 0, false};
      } else if (xs == xmax) {
        t = {w - 1, w - 1, 0.0, w - 2, w - 1, true};
      } else {
        const auto i0 = static_cast<std::size_t>(xs);
        t = {i0, i0 + 1, xs - static_cast<double>(i0), i0, i0 + 1, true};
      }
      (*taps)[y * w + x] = t;
    }
  }

  std::vector<double> out(ch * hw);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      const double* row = s.data() + (c * h + y) * w;
      for (std::size_t x = 0; x < w; ++x) {
        const Tap& t = (*taps)[y * w + x];
        out[(c * h + y) * w + x] = row[t.i0] + t.frac * (row[t.i1] - row[t.i0]);
      }
    }
  }
  return make_result("warp_horizontal", source.shape(), std::move(out), {source, disparity},
                     [ch, h, w, hw, sign, taps](const detail::Node& o, Inputs in) {
                       const auto& src = in[0]->data;
                       if (in[0]->requires_grad) {
                         auto& g = in[0]->grad_buffer();
                         for (std::size_t c = 0; c < ch; ++c) {
                           for (std::size_t y = 0; y < h; ++y) {
                             double* row = g.data() + (c * h + y) * w;
                             const double* go = o.grad.data() + (c * h + y) * w;
                             for (std::size_t x = 0; x < w; ++x) {
                               const Tap& t = (*taps)[y * w + x];
                               row[t.i0] += (1.0 - t.frac) * go[x];
                               row[t.i1] += t.frac * go[x];
                             }
                           }
                         }
                       }
                       if (in[1]->requires_grad) {
                         auto& g = in[1]->grad_buffer();
                         for (std::size_t c = 0; c < ch; ++c) {
                           for (std::size_t y = 0; y < h; ++y) {
                             const double* row = src.data() + (c * h + y) * w;
                             const double* go = o.grad.data() + (c * h + y) * w;
                             for (std::size_t x = 0; x < w; ++x) {
                               const Tap& t = (*taps)[y * w + x];
                               if (!t.slope) continue;
                               g[y * w + x] += go[x] * sign * (row[t.g1] - row[t.g0]);
                             }
                           }
                         }
                       }
                     });
}

Tensor valid_region_mask(std::size_t height, std::size_t width, std::size_t max_disparity, ViewSide side) {
  require(max_disparity < width, ErrorKind::domain, "valid_region_mask: disparity range must be below the width");
  std::vector<double> m(height * width, 1.0);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t k = 0; k < max_disparity; ++k) {
      const std::size_t x = side == ViewSide::left ? k : width - 1 - k;
      m[y * width + x] = 0.0;
    }
  }
  return Tensor::from({height, width}, std::move(m));
}

DepthMap depth_from_disparity(const Tensor& disparity, double baseline, double focal_px) {
  require(baseline > 0.0 && focal_px > 0.0, ErrorKind::domain, "depth_from_disparity: baseline and focal must be > 0");
  const auto d = disparity.data();
  std::vector<double> depth(d.size(), 0.0);
  std::vector<double> valid(d.size(), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] <= 0.0) continue;
    const double z = baseline * focal_px / d[i];
    if (!std::isfinite(z)) continue;
    depth[i] = z;
    valid[i] = 1.0;
  }
  return {Tensor::from(disparity.shape(), std::move(depth)), Tensor::from(disparity.shape(), std::move(valid))};
}

}  // namespace sdm
