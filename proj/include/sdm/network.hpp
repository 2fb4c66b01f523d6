#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdm/stereo_pair.hpp"
#include "sdm/tensor.hpp"

namespace sdm {

struct NetworkConfig {
  std::size_t feature_channels = 16;
  std::size_t num_2d_layers = 4;
  std::size_t num_3d_layers = 4;
  std::size_t downsample_factor = 4;  // 1, 2 or 4; the first log2(s) 2D layers use stride 2
  std::size_t max_disparity = 16;
  std::vector<std::size_t> spp_pool_sizes{2, 4};
  std::size_t volume_channels = 8;  // hidden width of the 3D stack
  bool standardize_input = true;    // per-image zero mean, unit variance before the 2D stack
  std::uint64_t seed = 1;

  /// Throws a config error describing the first violated constraint.
  void validate() const;
  std::size_t coarse_disparity() const { return max_disparity / downsample_factor; }
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Every learnable tensor of the network. Left and right branches read the
/// same entries, so updating one parameter affects both.
class ModelParams {
 public:
  void add(std::string name, Tensor value);
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  std::vector<NamedTensor>& entries() { return entries_; }
  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::size_t scalar_count() const;
  void zero_grad();
  /// Deep copy with fresh leaves.
  ModelParams clone() const;

 private:
  std::vector<NamedTensor> entries_;
};

/// Deterministic fan-in-scaled uniform initialization; biases and the final
/// 3D layer's weights start at zero.
ModelParams init_params(const NetworkConfig& config);

/// Hand-countable total: sum over layers of C_out*C_in*k^n + C_out.
std::size_t expected_param_count(const NetworkConfig& config);

/// [1,H,W] -> [F, H/s, W/s]: cascaded 3x3 convs, spatial pyramid pooling,
/// then a fusion conv back to F channels.
Tensor extract_features(const Tensor& image, const ModelParams& params, const NetworkConfig& config);

/// Runs the 3D stack on a cost volume and returns full-resolution cost
/// logits [D+1,H,W].
Tensor regularize_cost(const Tensor& volume, const ModelParams& params, const NetworkConfig& config, std::size_t height,
                       std::size_t width);

struct ForwardResult {
  Tensor d_l;     // [H,W]
  Tensor d_r;     // [H,W]
  Tensor cost_l;  // [D+1,H,W] logits
  Tensor cost_r;
};

ForwardResult forward_pass(const StereoPair& pair, const ModelParams& params, const NetworkConfig& config);

}  // namespace sdm
