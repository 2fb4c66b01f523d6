#include "sdm/losses.hpp"

#include <cmath>

#include "sdm/ops.hpp"
#include "sdm/random.hpp"

namespace sdm {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

// 1 inside, 0 on the first and last index along `axis` of an [H,W] grid.
Tensor interior_mask(std::size_t h, std::size_t w, std::size_t axis) {
  std::vector<double> m(h * w, 1.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = axis == 0 ? y : x;
      const std::size_t n = axis == 0 ? h : w;
      if (i == 0 || i + 1 >= n) m[y * w + x] = 0.0;
    }
  }
  return Tensor::from({h, w}, std::move(m));
}

// [H,W] -> [C,H,W] by repetition.
Tensor expand_planes(const Tensor& plane, std::size_t channels) {
  Tensor p = reshape(plane, {1, plane.extent(0), plane.extent(1)});
  if (channels == 1) return p;
  return concat(std::vector<Tensor>(channels, p), 0);
}

void check_same(const Tensor& a, const Tensor& b, const char* name) {
  require(a.shape() == b.shape(), ErrorKind::shape,
          std::string(name) + ": shapes differ " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

void check_mask(const Tensor& mask, std::size_t h, std::size_t w, const char* name) {
  require(mask.dim() == 2 && mask.extent(0) == h && mask.extent(1) == w, ErrorKind::shape,
          std::string(name) + ": mask must be [" + std::to_string(h) + "," + std::to_string(w) + "]");
}

}  // namespace

FixedFeatureNet FixedFeatureNet::seeded(std::uint64_t seed, std::size_t in_channels, std::vector<std::size_t> channels) {
  FixedFeatureNet net;
  Rng rng = Rng::derived(seed, 0x70657263);  // "perc"
  std::size_t cin = in_channels;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const std::size_t cout = channels[i];
    const std::size_t fan_in = cin * 9;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> k(cout * fan_in);
    for (double& v : k) v = rng.uniform(-bound, bound);
    Layer layer;
    layer.kernels = Tensor::from({cout, cin, 3, 3}, std::move(k));
    layer.bias = Tensor::zeros({cout});
    layer.stride = 2;
    layer.rectify = i + 1 < channels.size();
    net.layers_.push_back(std::move(layer));
    cin = cout;
  }
  return net;
}

Tensor FixedFeatureNet::operator()(const Tensor& image) const {
  Tensor x = image;
  for (const auto& layer : layers_) {
    x = conv2d(x, layer.kernels, layer.bias, layer.stride, 1);
    if (layer.rectify) x = relu(x);
  }
  return x;
}

Tensor ssim(const Tensor& a, const Tensor& b) {
  check_same(a, b, "ssim");
  require(a.dim() == 3, ErrorKind::shape, "ssim: images must be [C,H,W]");
  const Tensor pa = pad2d(a, 1, PadMode::replicate);
  const Tensor pb = pad2d(b, 1, PadMode::replicate);
  auto local_mean = [](const Tensor& t) { return avg_pool2d(t, 3, 1); };
  const Tensor mu_a = local_mean(pa);
  const Tensor mu_b = local_mean(pb);
  const Tensor mu_aa = mu_a * mu_a;
  const Tensor mu_bb = mu_b * mu_b;
  const Tensor mu_ab = mu_a * mu_b;
  const Tensor var_a = local_mean(pa * pa) - mu_aa;
  const Tensor var_b = local_mean(pb * pb) - mu_bb;
  const Tensor cov = local_mean(pa * pb) - mu_ab;
  const Tensor num = (2.0 * mu_ab + kC1) * (2.0 * cov + kC2);
  const Tensor den = (mu_aa + mu_bb + kC1) * (var_a + var_b + kC2);
  return num / den;
}

Tensor masked_mean(const Tensor& map, const Tensor& mask) {
  check_same(map, mask, "masked_mean");
  double count = 0.0;
  for (double v : mask.data()) count += v;
  require(count > 0.0, ErrorKind::domain, "masked_mean: empty mask");
  return sum(map * mask) * (1.0 / count);
}

Tensor appearance_loss(const Tensor& ref, const Tensor& recon, const Tensor& mask, const LossWeights& weights) {
  check_same(ref, recon, "appearance_loss");
  require(ref.dim() == 3, ErrorKind::shape, "appearance_loss: images must be [C,H,W]");
  check_mask(mask, ref.extent(1), ref.extent(2), "appearance_loss");
  const Tensor structural = (1.0 - ssim(ref, recon)) * (0.5 * weights.alpha_ssim);
  const Tensor diff = ref - recon;
  const Tensor photometric = abs(diff) * weights.alpha_l1;
  const Tensor dx = shift(diff, 2, 1) - diff;
  const Tensor dy = shift(diff, 1, 1) - diff;
  const Tensor gradient = (abs(dx) + abs(dy)) * weights.alpha_grad;
  const Tensor per_pixel = mean(structural + photometric + gradient, {0});
  return masked_mean(per_pixel, mask);
}

Tensor smoothness_loss(const Tensor& disparity, const Tensor& image, const Tensor& mask) {
  require(disparity.dim() == 2, ErrorKind::shape, "smoothness_loss: disparity must be [H,W]");
  require(image.dim() == 3 && image.extent(1) == disparity.extent(0) && image.extent(2) == disparity.extent(1),
          ErrorKind::shape, "smoothness_loss: image extents do not match the disparity");
  const std::size_t h = disparity.extent(0), w = disparity.extent(1);
  check_mask(mask, h, w, "smoothness_loss");

  const Tensor d2x = (shift(disparity, 1, -1) + shift(disparity, 1, 1) - 2.0 * disparity) * interior_mask(h, w, 1);
  const Tensor d2y = (shift(disparity, 0, -1) + shift(disparity, 0, 1) - 2.0 * disparity) * interior_mask(h, w, 0);
  const Tensor gx = mean(abs(shift(image, 2, 1) - image), {0});
  const Tensor gy = mean(abs(shift(image, 1, 1) - image), {0});
  const Tensor per_pixel = abs(d2x) * exp(-gx) + abs(d2y) * exp(-gy);
  return masked_mean(per_pixel, mask);
}

Tensor consistency_loss(const Tensor& d_self, const Tensor& d_other, const Tensor& mask, ViewSide side) {
  check_same(d_self, d_other, "consistency_loss");
  require(d_self.dim() == 2, ErrorKind::shape, "consistency_loss: disparities must be [H,W]");
  const std::size_t h = d_self.extent(0), w = d_self.extent(1);
  check_mask(mask, h, w, "consistency_loss");
  const WarpDirection to_other = side == ViewSide::left ? WarpDirection::sample_right_from_left
                                                        : WarpDirection::sample_left_from_right;
  const WarpDirection back = side == ViewSide::left ? WarpDirection::sample_left_from_right
                                                    : WarpDirection::sample_right_from_left;
  const Tensor self3 = reshape(d_self, {1, h, w});
  const Tensor in_other_view = warp_horizontal(self3, d_other, to_other);
  const Tensor cycled = warp_horizontal(in_other_view, d_self, back);
  return masked_mean(abs(reshape(cycled, {h, w}) - d_self), mask);
}

Tensor perceptual_loss(const Tensor& ref, const Tensor& recon, const FixedFeatureNet& net) {
  check_same(ref, recon, "perceptual_loss");
  const Tensor f_ref = net(ref.detach());
  const Tensor f_rec = net(recon);
  return mean(square(f_ref - f_rec));
}

double LossReport::weighted_sum(const LossWeights& w) const {
  return w.w_a * (appearance_l + appearance_r) + w.w_s * (smooth_l + smooth_r) +
         w.w_c * (consistency_l + consistency_r) + w.w_p * (perceptual_l + perceptual_r);
}

Reconstructions reconstruct(const StereoPair& pair, const Tensor& d_l, const Tensor& d_r) {
  return {warp_horizontal(pair.right, d_l, WarpDirection::sample_left_from_right),
          warp_horizontal(pair.left, d_r, WarpDirection::sample_right_from_left)};
}

LossReport total_loss(const StereoPair& pair, const Tensor& d_l, const Tensor& d_r, const Reconstructions& recon,
                      const Tensor& mask_l, const Tensor& mask_r, const LossWeights& weights,
                      const FixedFeatureNet& feature_net) {
  const std::size_t channels = pair.left.extent(0);

  // Zero-weight terms are still evaluated for the report, but off the graph.
  auto graph = [](const Tensor& t, double weight) { return weight != 0.0 ? t : t.detach(); };

  const Tensor a_l = appearance_loss(pair.left, graph(recon.left, weights.w_a), mask_l, weights);
  const Tensor a_r = appearance_loss(pair.right, graph(recon.right, weights.w_a), mask_r, weights);
  const Tensor s_l = smoothness_loss(graph(d_l, weights.w_s), pair.left, mask_l);
  const Tensor s_r = smoothness_loss(graph(d_r, weights.w_s), pair.right, mask_r);
  const Tensor c_l = consistency_loss(graph(d_l, weights.w_c), graph(d_r, weights.w_c), mask_l, ViewSide::left);
  const Tensor c_r = consistency_loss(graph(d_r, weights.w_c), graph(d_l, weights.w_c), mask_r, ViewSide::right);

  const Tensor ml = expand_planes(mask_l, channels);
  const Tensor mr = expand_planes(mask_r, channels);
  const Tensor p_l = perceptual_loss(pair.left * ml, graph(recon.left, weights.w_p) * ml, feature_net);
  const double p_weight_r = weights.perceptual_right ? weights.w_p : 0.0;
  const Tensor p_r = perceptual_loss(pair.right * mr, graph(recon.right, p_weight_r) * mr, feature_net);

  LossReport report;
  report.appearance_l = a_l.item();
  report.appearance_r = a_r.item();
  report.smooth_l = s_l.item();
  report.smooth_r = s_r.item();
  report.consistency_l = c_l.item();
  report.consistency_r = c_r.item();
  report.perceptual_l = p_l.item();
  report.perceptual_r = weights.perceptual_right ? p_r.item() : 0.0;

  Tensor total = weights.w_a * (a_l + a_r);
  if (weights.w_s != 0.0) total = total + weights.w_s * (s_l + s_r);
  if (weights.w_c != 0.0) total = total + weights.w_c * (c_l + c_r);
  if (weights.w_p != 0.0) total = total + weights.w_p * (weights.perceptual_right ? p_l + p_r : p_l);
  report.total = total;
  report.total_value = total.item();
  return report;
}

}  // namespace sdm
