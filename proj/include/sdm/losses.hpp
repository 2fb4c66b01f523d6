#pragma once

#include <cstdint>
#include <vector>

#include "sdm/stereo_ops.hpp"
#include "sdm/stereo_pair.hpp"
#include "sdm/tensor.hpp"

namespace sdm {

struct LossWeights {
  double w_a = 1.0;   // appearance
  double w_s = 0.1;   // smoothness
  double w_c = 1.5;   // left-right consistency
  double w_p = 0.3;   // perceptual
  double alpha_ssim = 0.85;
  double alpha_l1 = 0.15;
  double alpha_grad = 0.15;
  bool perceptual_right = true;  // off: only the left reconstruction feeds the perceptual term
};

/// Frozen convolutional feature extractor standing in for a pretrained
/// network in the perceptual term. Weights never require gradients.
class FixedFeatureNet {
 public:
  struct Layer {
    Tensor kernels;
    Tensor bias;
    std::size_t stride = 2;
    bool rectify = true;
  };

  /// 3x3 stride-2 layers with `channels[i]` outputs each, seeded
  /// fan-in-scaled uniform weights. The last layer is linear.
  static FixedFeatureNet seeded(std::uint64_t seed, std::size_t in_channels = 1,
                                std::vector<std::size_t> channels = {8, 16, 16});
  /// No layers: features are the image itself.
  static FixedFeatureNet identity() { return FixedFeatureNet{}; }

  Tensor operator()(const Tensor& image) const;
  const std::vector<Layer>& layers() const { return layers_; }

 private:
  std::vector<Layer> layers_;
};

/// Per-pixel SSIM map of two [C,H,W] images. Local statistics come from a
/// 3x3 mean window over replicate-padded inputs; C1 = 0.01^2, C2 = 0.03^2.
Tensor ssim(const Tensor& a, const Tensor& b);

/// sum(map * mask) / count(mask) for [H,W] `map` and binary `mask`.
/// Domain error on an all-zero mask.
Tensor masked_mean(const Tensor& map, const Tensor& mask);

/// Masked mean of a1*(1-SSIM)/2 + a2*|I-I'| + a3*(|dx(I-I')| + |dy(I-I')|),
/// averaged over channels, with forward differences and replicate boundary.
Tensor appearance_loss(const Tensor& ref, const Tensor& recon, const Tensor& mask, const LossWeights& weights = {});

/// Masked mean of |d2x d| exp(-|dx I|) + |d2y d| exp(-|dy I|). Second
/// differences are central and vanish on the outermost rows and columns;
/// image gradients are channel-mean absolute forward differences.
Tensor smoothness_loss(const Tensor& disparity, const Tensor& image, const Tensor& mask);

/// Two-hop cycle. For side == left: warp d_self into the right view with the
/// other view's disparity, warp that back with d_self, and return the masked
/// mean |cycle - d_self|. side == right is the mirror image.
Tensor consistency_loss(const Tensor& d_self, const Tensor& d_other, const Tensor& mask, ViewSide side);

/// mean((f(ref) - f(recon))^2) over feature elements. `ref` is detached.
Tensor perceptual_loss(const Tensor& ref, const Tensor& recon, const FixedFeatureNet& net);

struct LossReport {
  Tensor total;  // differentiable
  double total_value = 0.0;
  double appearance_l = 0.0, appearance_r = 0.0;
  double smooth_l = 0.0, smooth_r = 0.0;
  double consistency_l = 0.0, consistency_r = 0.0;
  double perceptual_l = 0.0, perceptual_r = 0.0;

  /// The weighted sum recomputed from the component values.
  double weighted_sum(const LossWeights& w) const;
};

struct Reconstructions {
  Tensor left;   // right image warped by d_l
  Tensor right;  // left image warped by d_r
};

Reconstructions reconstruct(const StereoPair& pair, const Tensor& d_l, const Tensor& d_r);

/// Weighted four-part objective. Every term is restricted to its side's mask;
/// the perceptual term sees mask-multiplied images.
LossReport total_loss(const StereoPair& pair, const Tensor& d_l, const Tensor& d_r, const Reconstructions& recon,
                      const Tensor& mask_l, const Tensor& mask_r, const LossWeights& weights,
                      const FixedFeatureNet& feature_net);

}  // namespace sdm
