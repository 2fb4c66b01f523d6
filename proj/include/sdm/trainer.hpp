#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "sdm/losses.hpp"
#include "sdm/network.hpp"
#include "sdm/stereo_pair.hpp"

namespace sdm {

struct TrainConfig {
  double lr_initial = 1e-3;
  double lr_after_drop = 1e-4;
  std::size_t drop_iteration = 4000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t max_iterations = 1000;
  std::uint64_t seed = 1;            // sampling order
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  bool use_region_mask = true;
  double preprocess_sigma = 0.0;     // Gaussian smoothing of inputs before training and inference
  std::uint64_t feature_net_seed = 7;

  void validate() const;
  /// Learning rate used by the update with 0-based index `iteration`.
  double lr_at(std::size_t iteration) const { return iteration < drop_iteration ? lr_initial : lr_after_drop; }
};

/// Adam moments, one buffer per parameter in ModelParams order.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::size_t step = 0;

  static AdamState zeros_like(const ModelParams& params);
};

/// One bias-corrected Adam update of every parameter. `grads` follows the
/// parameter order. A non-finite gradient aborts with the parameter's name
/// before anything is modified.
void adam_step(ModelParams& params, const std::vector<std::vector<double>>& grads, AdamState& state, double lr,
               const TrainConfig& config);

struct IterationRecord {
  std::size_t iteration = 0;  // 0-based update index
  std::size_t pair_index = 0;
  double lr = 0.0;
  double appearance_l = 0.0, appearance_r = 0.0;
  double smooth_l = 0.0, smooth_r = 0.0;
  double consistency_l = 0.0, consistency_r = 0.0;
  double perceptual_l = 0.0, perceptual_r = 0.0;
  double total = 0.0;
};

/// "iter=... lr=... appearance_l=... ... total=..." with %.17g values.
std::string format_log_line(const IterationRecord& r);

struct Checkpoint {
  std::size_t iteration = 0;  // completed updates
  std::string config_text;    // format_model_config of the run
  ModelParams params;
  AdamState adam;
  std::vector<IterationRecord> history;
};

/// Versioned flat binary: magic, version, iteration, config text, then named
/// tensors (name, shape, raw little-endian doubles).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// 0-based index of the pair used by update `iteration`: a seeded
/// Fisher-Yates permutation per pass over the data.
std::size_t sample_index(std::uint64_t seed, std::size_t iteration, std::size_t dataset_size);

/// Input smoothing shared by training and inference.
StereoPair preprocess(const StereoPair& pair, double sigma);

struct TrainCallbacks {
  std::function<void(const IterationRecord&)> on_iteration;
  std::function<void(const Checkpoint&)> on_checkpoint;  // every checkpoint_every updates
};

/// Runs updates until `train.max_iterations` in total, starting from `resume`
/// when given, else from init_params(network).
Checkpoint train(const std::vector<StereoPair>& dataset, const NetworkConfig& network, const TrainConfig& train,
                 const LossWeights& weights, const std::string& config_text, const TrainCallbacks& callbacks = {},
                 const Checkpoint* resume = nullptr);

/// Disparities of both views from a trained model, off the graph.
ForwardResult infer(const StereoPair& pair, const ModelParams& params, const NetworkConfig& network);

}  // namespace sdm
