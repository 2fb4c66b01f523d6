#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sdm/config.hpp"
#include "sdm/data_io.hpp"
#include "sdm/eval.hpp"
#include "sdm/trainer.hpp"

namespace sdm {

/// Writes `count` rendered pairs plus manifest.tsv into `out_dir`.
std::vector<DatasetEntry> cmd_synth(const SceneSpec& spec, const std::filesystem::path& out_dir, std::size_t count,
                                    std::uint64_t seed);

/// Trains on config.dataset. Writes out_dir/train.log (one line per update),
/// out_dir/checkpoint.bin and, on schedule, out_dir/checkpoint_NNNNNN.bin.
/// The recorded config carries the training extents.
Checkpoint cmd_train(RunConfig config, const Checkpoint* resume = nullptr);

struct InferInput {
  std::string id;
  std::filesystem::path left;
  std::filesystem::path right;
};

/// Run config stored in a checkpoint.
RunConfig checkpoint_config(const Checkpoint& ckpt);

/// Center crop of both views to height x width. Shape error when the pair is
/// smaller. 0 extents leave the pair untouched.
StereoPair center_crop(const StereoPair& pair, std::size_t height, std::size_t width);

/// Per input: <id>_disp_left.pfm, <id>_disp_right.pfm and turbo PNGs of both.
/// Returns the left-view maps as written (float32 precision).
std::vector<Tensor> cmd_infer(const std::filesystem::path& checkpoint, const std::vector<InferInput>& inputs,
                              const std::filesystem::path& out_dir);

struct EvalResult {
  std::vector<std::string> ids;
  std::vector<EvalReport> per_pair;
  EvalReport mean;
};

/// Scores <id>_disp_left.pfm in `pred_dir` against each entry of
/// gt_dir/manifest.tsv. Missing or extra predictions are an io error listing
/// every unmatched id.
EvalResult cmd_eval(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir, double threshold,
                    std::size_t max_disparity);

/// Tab-separated per-pair rows followed by a "mean" row.
std::string format_eval_table(const EvalResult& result);

/// Parses argv (subcommands synth|train|infer|eval) and runs the command.
/// Errors print one line "<category>: <message>" to `err`. Exit status 0 on
/// success, 1 on a library error, 2 on a usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sdm
