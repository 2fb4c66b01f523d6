#include "sdm/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include "sdm/ops.hpp"

namespace sdm {

namespace fs = std::filesystem;

namespace {

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorKind::io, "write failed for " + path.string());
}

std::string checkpoint_name(std::size_t iteration) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "checkpoint_%06zu.bin", iteration);
  return buf;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

// "foo_left.pgm" -> "foo"
std::string id_from_left(const fs::path& left) {
  std::string stem = left.stem().string();
  const std::string suffix = "_left";
  if (stem.size() > suffix.size() && stem.ends_with(suffix)) stem.resize(stem.size() - suffix.size());
  return stem;
}

}  // namespace

std::vector<DatasetEntry> cmd_synth(const SceneSpec& spec, const fs::path& out_dir, std::size_t count,
                                    std::uint64_t seed) {
  spec.validate();
  return write_dataset(spec, out_dir, count, seed);
}

Checkpoint cmd_train(RunConfig config, const Checkpoint* resume) {
  require(!config.dataset.empty(), ErrorKind::config, "paths.dataset is not set");
  require(fs::exists(config.dataset), ErrorKind::io, "dataset manifest not found: " + config.dataset.string());
  config.validate();
  const std::vector<StereoPair> data = load_dataset(config.dataset);
  require(!data.empty(), ErrorKind::domain, "dataset " + config.dataset.string() + " has no pairs");
  config.input_height = data.front().height();
  config.input_width = data.front().width();
  make_dir(config.out_dir);

  const fs::path log_path = config.out_dir / "train.log";
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  require(static_cast<bool>(log), ErrorKind::io, "cannot write " + log_path.string());
  TrainCallbacks cb;
  cb.on_iteration = [&](const IterationRecord& r) { log << format_log_line(r) << "\n"; };
  cb.on_checkpoint = [&](const Checkpoint& c) {
    log.flush();
    save_checkpoint(config.out_dir / checkpoint_name(c.iteration), c);
  };
  Checkpoint ckpt = train(data, config.network, config.train, config.loss, format_model_config(config), cb, resume);
  log.flush();
  require(static_cast<bool>(log), ErrorKind::io, "write failed for " + log_path.string());
  save_checkpoint(config.out_dir / "checkpoint.bin", ckpt);
  return ckpt;
}

RunConfig checkpoint_config(const Checkpoint& ckpt) {
  RunConfig c;
  apply_entries(c, parse_kv(ckpt.config_text, "checkpoint config"), "checkpoint config");
  c.validate();
  return c;
}

StereoPair center_crop(const StereoPair& pair, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0 || (pair.height() == height && pair.width() == width)) return pair;
  require(pair.height() >= height && pair.width() >= width, ErrorKind::shape,
          "input " + std::to_string(pair.height()) + "x" + std::to_string(pair.width()) +
              " is smaller than the trained extents " + std::to_string(height) + "x" + std::to_string(width));
  const std::size_t y0 = (pair.height() - height) / 2, x0 = (pair.width() - width) / 2;
  auto crop = [&](const Tensor& t) {
    if (!t.defined()) return t;
    const std::size_t a = t.dim() - 2;
    return slice(slice(t, a, y0, y0 + height), a + 1, x0, x0 + width).detach();
  };
  StereoPair out = pair;
  out.left = crop(pair.left);
  out.right = crop(pair.right);
  out.gt_disp_left = crop(pair.gt_disp_left);
  out.gt_disp_right = crop(pair.gt_disp_right);
  out.occlusion_left = crop(pair.occlusion_left);
  out.occlusion_right = crop(pair.occlusion_right);
  return out;
}

std::vector<Tensor> cmd_infer(const fs::path& checkpoint, const std::vector<InferInput>& inputs,
                              const fs::path& out_dir) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const RunConfig config = checkpoint_config(ckpt);
  const double d_max = static_cast<double>(config.network.max_disparity);
  make_dir(out_dir);
  std::vector<Tensor> left_maps;
  for (const auto& in : inputs) {
    StereoPair pair;
    pair.left = read_pgm(in.left);
    pair.right = read_pgm(in.right);
    require(pair.left.shape() == pair.right.shape(), ErrorKind::shape,
            in.id + ": left and right extents differ");
    pair = preprocess(center_crop(pair, config.input_height, config.input_width), config.train.preprocess_sigma);
    const ForwardResult fr = infer(pair, ckpt.params, config.network);
    const Tensor d_l = round_to_float(fr.d_l), d_r = round_to_float(fr.d_r);
    write_pfm(out_dir / (in.id + "_disp_left.pfm"), d_l);
    write_pfm(out_dir / (in.id + "_disp_right.pfm"), d_r);
    write_png_rgb(out_dir / (in.id + "_disp_left.png"), pair.height(), pair.width(), colorize_disparity(d_l, d_max));
    write_png_rgb(out_dir / (in.id + "_disp_right.png"), pair.height(), pair.width(), colorize_disparity(d_r, d_max));
    left_maps.push_back(d_l);
  }
  return left_maps;
}

EvalResult cmd_eval(const fs::path& pred_dir, const fs::path& gt_dir, double threshold, std::size_t max_disparity) {
  require(threshold > 0.0, ErrorKind::config, "threshold must be > 0");
  require(fs::is_directory(pred_dir), ErrorKind::io, "prediction directory not found: " + pred_dir.string());
  const auto entries = read_manifest(gt_dir / "manifest.tsv");

  std::set<std::string> gt_ids;
  std::vector<std::string> missing;
  for (const auto& e : entries) {
    gt_ids.insert(e.id);
    const fs::path p = pred_dir / (e.id + "_disp_left.pfm");
    if (!fs::exists(p)) missing.push_back(p.string());
  }
  const std::string suffix = "_disp_left.pfm";
  std::vector<std::string> extra;
  for (const auto& f : fs::directory_iterator(pred_dir)) {
    const std::string name = f.path().filename().string();
    if (name.size() > suffix.size() && name.ends_with(suffix)) {
      const std::string id = name.substr(0, name.size() - suffix.size());
      if (!gt_ids.count(id)) extra.push_back(id);
    }
  }
  std::sort(extra.begin(), extra.end());
  if (!missing.empty() || !extra.empty()) {
    std::string msg;
    for (const auto& m : missing) msg += (msg.empty() ? "" : ", ") + ("missing prediction " + m);
    for (const auto& x : extra) msg += (msg.empty() ? "" : ", ") + ("no ground truth for " + x);
    fail(ErrorKind::io, "unmatched pairs: " + msg);
  }

  EvalResult result;
  for (const auto& e : entries) {
    const StereoPair pair = load_pair(e);
    const Tensor pred = read_pfm(pred_dir / (e.id + "_disp_left.pfm"));
    require(pred.shape() == pair.gt_disp_left.shape(), ErrorKind::shape,
            e.id + ": prediction extents differ from the ground truth");
    result.ids.push_back(e.id);
    result.per_pair.push_back(evaluate_left(pair, pred, max_disparity, threshold));
  }
  if (!result.per_pair.empty()) result.mean = aggregate(result.per_pair);
  result.mean.pixel_threshold = threshold;
  return result;
}

std::string format_eval_table(const EvalResult& result) {
  std::string s = report_header() + "\n";
  for (std::size_t i = 0; i < result.ids.size(); ++i) s += report_row(result.ids[i], result.per_pair[i]) + "\n";
  if (!result.per_pair.empty()) s += report_row("mean", result.mean) + "\n";
  return s;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-supervised stereo disparity toolkit", "sdmnet"};
  app.require_subcommand(1);

  std::string config_path, out_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  std::optional<std::size_t> max_disparity;
  std::size_t count = 1;
  std::string checkpoint, manifest, resume;
  std::vector<std::string> lefts, rights;
  std::string pred_dir, gt_dir;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Config file (key = value)");
    sub->add_option("--seed", seed, "Seed override");
    sub->add_option("--out", out_path, "Output directory");
    sub->add_option("--threshold", threshold, "Outlier threshold in pixels");
    sub->add_option("--max-disparity", max_disparity, "Maximum disparity D");
  };
  auto* synth = app.add_subcommand("synth", "Render a synthetic dataset");
  common(synth);
  synth->add_option("--count", count, "Number of pairs");
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  common(train_cmd);
  train_cmd->add_option("--resume", resume, "Checkpoint to continue from");
  auto* infer_cmd = app.add_subcommand("infer", "Predict disparities");
  common(infer_cmd);
  infer_cmd->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  infer_cmd->add_option("--manifest", manifest, "Dataset manifest listing the pairs");
  infer_cmd->add_option("--left", lefts, "Left image (repeatable)");
  infer_cmd->add_option("--right", rights, "Right image (repeatable)");
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against ground truth");
  common(eval_cmd);
  eval_cmd->add_option("pred_dir", pred_dir, "Directory of <id>_disp_left.pfm files")->required();
  eval_cmd->add_option("gt_dir", gt_dir, "Dataset directory with manifest.tsv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    // defaults < file < flags
    auto run_config = [&] {
      RunConfig c;
      if (!config_path.empty()) c = read_run_config(config_path, c);
      if (seed) c.network.seed = c.train.seed = *seed;
      if (!out_path.empty()) c.out_dir = out_path;
      if (threshold) c.threshold = *threshold;
      if (max_disparity) c.network.max_disparity = *max_disparity;
      c.validate();
      return c;
    };

    if (synth->parsed()) {
      SceneSpec spec;
      if (!config_path.empty()) spec = read_scene_spec(config_path);
      if (max_disparity) spec.max_disparity = *max_disparity;
      const std::uint64_t s = seed.value_or(spec.seed);
      const fs::path dir = out_path.empty() ? fs::path("dataset") : fs::path(out_path);
      const auto entries = cmd_synth(spec, dir, count, s);
      out << "wrote " << entries.size() << " pairs to " << (dir / "manifest.tsv").string() << "\n";
    } else if (train_cmd->parsed()) {
      const RunConfig c = run_config();
      Checkpoint start;
      if (!resume.empty()) start = load_checkpoint(resume);
      const Checkpoint ck = cmd_train(c, resume.empty() ? nullptr : &start);
      out << "trained " << ck.iteration << " iterations";
      if (!ck.history.empty()) out << ", final " << format_log_line(ck.history.back());
      out << "\ncheckpoint " << (c.out_dir / "checkpoint.bin").string() << "\n";
    } else if (infer_cmd->parsed()) {
      std::vector<InferInput> inputs;
      if (!manifest.empty()) {
        for (const auto& e : read_manifest(manifest)) inputs.push_back({e.id, e.left, e.right});
      }
      if (lefts.size() != rights.size()) fail(ErrorKind::config, "--left and --right must be given in pairs");
      for (std::size_t i = 0; i < lefts.size(); ++i) inputs.push_back({id_from_left(lefts[i]), lefts[i], rights[i]});
      require(!inputs.empty(), ErrorKind::config, "no input pairs; use --manifest or --left/--right");
      const fs::path dir = out_path.empty() ? fs::path("predictions") : fs::path(out_path);
      cmd_infer(checkpoint, inputs, dir);
      out << "wrote " << inputs.size() << " disparity pairs to " << dir.string() << "\n";
    } else if (eval_cmd->parsed()) {
      const RunConfig c = run_config();
      const EvalResult r = cmd_eval(pred_dir, gt_dir, c.threshold, c.network.max_disparity);
      const fs::path dir = out_path.empty() ? fs::path(pred_dir) : fs::path(out_path);
      make_dir(dir);
      const std::string table = format_eval_table(r);
      write_text(dir / "eval.tsv", table);
      out << table << format_report(r.mean);
    }
  } catch (const Error& e) {
    err << to_string(e.kind()) << ": " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "internal: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 0;
}

}  // namespace sdm
