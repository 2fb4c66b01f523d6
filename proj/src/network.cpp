#include "sdm/network.hpp"

#include <algorithm>
#include <cmath>

#include "sdm/ops.hpp"
#include "sdm/random.hpp"
#include "sdm/stereo_ops.hpp"

namespace sdm {

namespace {

std::size_t stride2_layers(std::size_t factor) { return factor == 4 ? 2 : (factor == 2 ? 1 : 0); }

std::string layer_name(const char* block, std::size_t i, const char* part) {
  return std::string(block) + ".conv" + std::to_string(i) + "." + part;
}

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  Tensor t = Tensor::from(std::move(shape), std::move(v));
  t.set_requires_grad(true);
  return t;
}

void add_conv(ModelParams& params, Rng& rng, const std::string& prefix, Shape kernel_shape) {
  const std::size_t cout = kernel_shape[0];
  std::size_t fan_in = 1;
  for (std::size_t i = 1; i < kernel_shape.size(); ++i) fan_in *= kernel_shape[i];
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  params.add(prefix + ".weight", uniform_tensor(std::move(kernel_shape), bound, rng));
  Tensor bias = Tensor::zeros({cout});
  bias.set_requires_grad(true);
  params.add(prefix + ".bias", bias);
}

}  // namespace

void NetworkConfig::validate() const {
  require(downsample_factor == 1 || downsample_factor == 2 || downsample_factor == 4, ErrorKind::config,
          "network.downsample_factor must be 1, 2 or 4");
  require(max_disparity % downsample_factor == 0, ErrorKind::config,
          "network.max_disparity must be divisible by network.downsample_factor");
  require(feature_channels >= 1 && volume_channels >= 1, ErrorKind::config, "channel counts must be >= 1");
  require(num_2d_layers >= 1 && num_3d_layers >= 1, ErrorKind::config, "layer counts must be >= 1");
  require(num_2d_layers >= stride2_layers(downsample_factor), ErrorKind::config,
          "network.num_2d_layers too small for the downsample factor");
  for (std::size_t p : spp_pool_sizes) require(p >= 1, ErrorKind::config, "spp pool sizes must be >= 1");
}

void ModelParams::add(std::string name, Tensor value) {
  for (const auto& e : entries_) require(e.name != name, ErrorKind::state, "duplicate parameter " + name);
  entries_.push_back({std::move(name), std::move(value)});
}

const Tensor& ModelParams::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.value;
  }
  fail(ErrorKind::state, "unknown parameter " + name);
}

Tensor& ModelParams::get(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const ModelParams&>(*this).get(name));
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& e : entries_) e.value.zero_grad();
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  for (const auto& e : entries_) out.add(e.name, e.value.clone());
  return out;
}

ModelParams init_params(const NetworkConfig& config) {
  config.validate();
  Rng rng = Rng::derived(config.seed, 0x6e6574);  // "net"
  ModelParams params;
  const std::size_t f = config.feature_channels;
  for (std::size_t i = 0; i < config.num_2d_layers; ++i) {
    add_conv(params, rng, "feature.conv" + std::to_string(i), {f, i == 0 ? 1 : f, 3, 3});
  }
  add_conv(params, rng, "feature.fuse", {f, f * (1 + config.spp_pool_sizes.size()), 3, 3});
  const std::size_t v = config.volume_channels;
  for (std::size_t i = 0; i < config.num_3d_layers; ++i) {
    const std::size_t cin = i == 0 ? 2 * f : v;
    const std::size_t cout = i + 1 == config.num_3d_layers ? 1 : v;
    add_conv(params, rng, "volume.conv" + std::to_string(i), {cout, cin, 3, 3, 3});
  }
  // The last 3D layer starts at zero: uniform cost logits, every output at D/2.
  for (auto& x : params.get("volume.conv" + std::to_string(config.num_3d_layers - 1) + ".weight").mutable_data()) x = 0.0;
  return params;
}

std::size_t expected_param_count(const NetworkConfig& config) {
  const std::size_t f = config.feature_channels;
  const std::size_t v = config.volume_channels;
  std::size_t n = 0;
  for (std::size_t i = 0; i < config.num_2d_layers; ++i) n += f * (i == 0 ? 1 : f) * 9 + f;
  n += f * f * (1 + config.spp_pool_sizes.size()) * 9 + f;
  for (std::size_t i = 0; i < config.num_3d_layers; ++i) {
    const std::size_t cin = i == 0 ? 2 * f : v;
    const std::size_t cout = i + 1 == config.num_3d_layers ? 1 : v;
    n += cout * cin * 27 + cout;
  }
  return n;
}

Tensor extract_features(const Tensor& image, const ModelParams& params, const NetworkConfig& config) {
  require(image.dim() == 3 && image.extent(0) == 1, ErrorKind::shape,
          "extract_features: expected a [1,H,W] image, got " + to_string(image.shape()));
  const std::size_t s = config.downsample_factor;
  require(image.extent(1) % s == 0 && image.extent(2) % s == 0, ErrorKind::shape,
          "extract_features: image extents must be divisible by the downsample factor " + std::to_string(s));
  const std::size_t strided = stride2_layers(s);
  Tensor x = image;
  if (config.standardize_input) {
    // Statistics are treated as constants.
    const auto v = image.data();
    double m = 0.0;
    for (double p : v) m += p;
    m /= static_cast<double>(v.size());
    double var = 0.0;
    for (double p : v) var += (p - m) * (p - m);
    const double sd = std::sqrt(var / static_cast<double>(v.size()));
    x = (image - m) * (1.0 / std::max(sd, 1e-6));
  }
  for (std::size_t i = 0; i < config.num_2d_layers; ++i) {
    x = relu(conv2d(x, params.get(layer_name("feature", i, "weight")), params.get(layer_name("feature", i, "bias")),
                    i < strided ? 2 : 1, 1));
  }
  const std::size_t h = x.extent(1), w = x.extent(2);
  std::vector<Tensor> branches{x};
  for (std::size_t p : config.spp_pool_sizes) {
    require(p <= h && p <= w, ErrorKind::shape,
            "extract_features: pool size " + std::to_string(p) + " exceeds the feature map");
    branches.push_back(upsample_bilinear2d(avg_pool2d(x, p, p), h, w));
  }
  return relu(conv2d(concat(branches, 0), params.get("feature.fuse.weight"), params.get("feature.fuse.bias"), 1, 1));
}

Tensor regularize_cost(const Tensor& volume, const ModelParams& params, const NetworkConfig& config, std::size_t height,
                       std::size_t width) {
  Tensor x = volume;
  for (std::size_t i = 0; i < config.num_3d_layers; ++i) {
    x = conv3d(x, params.get(layer_name("volume", i, "weight")), params.get(layer_name("volume", i, "bias")), 1, 1);
    if (i + 1 < config.num_3d_layers) x = relu(x);
  }
  const std::size_t nd = config.max_disparity + 1;
  // Coarse hypothesis k lands exactly on disparity k * s.
  x = reshape(resample_linear(x, 1, nd, Alignment::corners), {nd, x.extent(2), x.extent(3)});
  return upsample_bilinear2d(x, height, width);
}

ForwardResult forward_pass(const StereoPair& pair, const ModelParams& params, const NetworkConfig& config) {
  require(pair.left.shape() == pair.right.shape(), ErrorKind::shape, "forward_pass: left/right extents differ");
  const std::size_t h = pair.height(), w = pair.width();
  const Tensor f_l = extract_features(pair.left, params, config);
  const Tensor f_r = extract_features(pair.right, params, config);
  const std::size_t coarse = config.coarse_disparity();
  ForwardResult r;
  r.cost_l = regularize_cost(build_cost_volume(f_l, f_r, coarse, CostDirection::left_ref), params, config, h, w);
  r.cost_r = regularize_cost(build_cost_volume(f_r, f_l, coarse, CostDirection::right_ref), params, config, h, w);
  r.d_l = soft_argmin(r.cost_l);
  r.d_r = soft_argmin(r.cost_r);
  return r;
}

}  // namespace sdm
