#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sdm/kv_text.hpp"
#include "sdm/stereo_ops.hpp"
#include "sdm/stereo_pair.hpp"
#include "sdm/tensor.hpp"

namespace sdm {

// ---------------------------------------------------------------------------
// Scene description

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// d(x) = offset + slope * x, with x the left-view column.
struct LinearDisparity {
  double offset = 0.0;
  double slope = 0.0;

  double at(double x) const { return offset + slope * x; }
};

/// Dark curvilinear structure: a Catmull-Rom curve through the control points
/// (left-view coordinates) thickened to `width` pixels.
struct VeinPrimitive {
  std::vector<Point2> control_points;
  double width = 3.0;
  LinearDisparity disparity;
  double contrast = 0.5;  // fractional darkening on the centre line
};

struct BackgroundSpec {
  LinearDisparity disparity{4.0, 0.0};
  double level = 0.55;
  double contrast = 0.15;       // std-dev of the texture
  double texture_sigma = 2.0;   // smoothing of the value noise
};

/// Veins and background parameters drawn from the scene seed at render time.
struct RandomSceneSpec {
  std::size_t veins = 0;
  std::size_t control_points = 4;
  double vein_width_min = 2.5, vein_width_max = 5.0;
  double vein_offset_min = 0.5, vein_offset_max = 3.0;  // added to the background disparity
  double vein_contrast_min = 0.4, vein_contrast_max = 0.7;
  bool background = false;
  double background_disparity_min = 3.0, background_disparity_max = 12.0;  // at the centre column
  double background_slope_max = 0.02;
};

struct SceneSpec {
  std::size_t width = 128;
  std::size_t height = 64;
  std::size_t max_disparity = 16;
  BackgroundSpec background;
  std::vector<VeinPrimitive> veins;
  RandomSceneSpec random;
  double blur_sigma = 1.0;
  double noise_sigma = 0.01;
  std::uint64_t seed = 1;

  /// Throws a config error describing the first violated constraint.
  void validate() const;
};

/// Resolves the random section into explicit primitives. Idempotent on specs
/// without random content.
SceneSpec materialize(const SceneSpec& spec);

/// Flat `key = value` grammar; keys are order-insensitive and unknown keys are
/// rejected with their line number.
SceneSpec parse_scene_spec(const std::vector<KvEntry>& entries, std::string_view source);
SceneSpec read_scene_spec(const std::filesystem::path& path);
std::string format_scene_spec(const SceneSpec& spec);

// ---------------------------------------------------------------------------
// Rendering

/// Renders left and right views with exact ground truth for both views and
/// cross-check occlusion masks. Errors when a vein leaves either frame.
StereoPair render_synthetic_pair(const SceneSpec& spec);

/// 1 where |d_self(x) - d_other(x -/+ d_self(x))| > threshold or the match
/// falls outside the other image (rounded to the nearest column).
Tensor cross_check_occlusion(const Tensor& d_self, const Tensor& d_other, ViewSide side, double threshold = 1.0);

/// Separable Gaussian blur over the last two axes of an [H,W] or [C,H,W]
/// tensor. Radius ceil(3 sigma), replicate boundary, sigma 0 is the identity.
/// The result is a constant.
Tensor gaussian_smooth(const Tensor& image, double sigma);

/// Normalized 1D Gaussian weights of length 2*ceil(3 sigma)+1.
std::vector<double> gaussian_kernel(double sigma);

// ---------------------------------------------------------------------------
// Files

/// Binary P5 with maxval 255. Values in [0,1] are rounded to the nearest byte.
Tensor read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Tensor& image);

/// Grayscale "Pf", little-endian (scale -1), bottom-up rows, float32.
Tensor read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const Tensor& disparity);

/// 8-bit RGB PNG from interleaved bytes.
void write_png_rgb(const std::filesystem::path& path, std::size_t height, std::size_t width,
                   const std::vector<std::uint8_t>& rgb);

/// Turbo colour for t in [0, 1] (polynomial fit of the reference table).
std::array<std::uint8_t, 3> turbo_rgb(double t);

/// Interleaved RGB of a [H,W] disparity map scaled by [0, max_disparity];
/// non-finite or out-of-range pixels are black.
std::vector<std::uint8_t> colorize_disparity(const Tensor& disparity, double max_disparity);

/// Rounds every value to the nearest float32, as a PFM round trip would.
Tensor round_to_float(const Tensor& t);

// ---------------------------------------------------------------------------
// Datasets

struct DatasetEntry {
  std::string id;
  std::filesystem::path left, right;
  std::filesystem::path disp_left, disp_right;
  std::filesystem::path occlusion_left;
};

/// Tab-separated: id, left, right, disp_left, disp_right, occlusion_left.
/// Relative paths resolve against the manifest's directory.
std::vector<DatasetEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<DatasetEntry>& entries);

/// Loads images and ground truth; the right occlusion mask is recomputed by
/// cross-check from the two disparity maps.
StereoPair load_pair(const DatasetEntry& entry);
std::vector<StereoPair> load_dataset(const std::filesystem::path& manifest);

/// Seed of the i-th scene of a dataset.
std::uint64_t scene_seed(std::uint64_t dataset_seed, std::size_t index);

std::vector<StereoPair> generate_dataset(const SceneSpec& base, std::size_t count, std::uint64_t seed);

/// Renders `count` pairs into `dir` (5 files each) plus `manifest.tsv`.
std::vector<DatasetEntry> write_dataset(const SceneSpec& base, const std::filesystem::path& dir, std::size_t count,
                                        std::uint64_t seed);

}  // namespace sdm
