#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sdm/kv_text.hpp"
#include "sdm/losses.hpp"
#include "sdm/network.hpp"
#include "sdm/trainer.hpp"

namespace sdm {

/// Everything a run needs. Text form uses the sections [network], [train],
/// [loss], [paths] and [eval].
struct RunConfig {
  NetworkConfig network;
  TrainConfig train;
  LossWeights loss;
  std::filesystem::path dataset;  // manifest for training
  std::filesystem::path out_dir = "run";
  double threshold = 3.0;         // outlier threshold in pixels
  std::size_t input_height = 0;   // training extents, 0 when unknown; inference crops to them
  std::size_t input_width = 0;

  void validate() const;
};

/// Applies entries on top of `config`. Unknown keys are config errors naming
/// the line. Relative paths resolve against `base_dir`.
void apply_entries(RunConfig& config, const std::vector<KvEntry>& entries, std::string_view source,
                   const std::filesystem::path& base_dir = {});
RunConfig read_run_config(const std::filesystem::path& path, RunConfig base = {});

/// Model-relevant sections only ([network], [train], [loss], [input]);
/// parses back to identical values.
std::string format_model_config(const RunConfig& config);

}  // namespace sdm
