#include "sdm/config.hpp"

#include <sstream>

namespace sdm {

void RunConfig::validate() const {
  network.validate();
  train.validate();
  require(threshold > 0.0, ErrorKind::config, "eval.threshold must be > 0");
}

void apply_entries(RunConfig& c, const std::vector<KvEntry>& entries, std::string_view source,
                   const std::filesystem::path& base_dir) {
  auto& n = c.network;
  auto& t = c.train;
  auto& l = c.loss;
  auto path = [&](const KvEntry& e) {
    const std::filesystem::path p(e.value);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  for (const auto& e : entries) {
    const std::string& k = e.key;
    auto dbl = [&] { return kv_double(e, source); };
    auto sz = [&] { return kv_size(e, source); };
    if (k == "network.feature_channels") n.feature_channels = sz();
    else if (k == "network.num_2d_layers") n.num_2d_layers = sz();
    else if (k == "network.num_3d_layers") n.num_3d_layers = sz();
    else if (k == "network.downsample_factor") n.downsample_factor = sz();
    else if (k == "network.max_disparity") n.max_disparity = sz();
    else if (k == "network.spp_pool_sizes") n.spp_pool_sizes = kv_sizes(e, source);
    else if (k == "network.volume_channels") n.volume_channels = sz();
    else if (k == "network.seed") n.seed = kv_u64(e, source);
    else if (k == "network.standardize_input") n.standardize_input = kv_bool(e, source);
    else if (k == "train.lr_initial") t.lr_initial = dbl();
    else if (k == "train.lr_after_drop") t.lr_after_drop = dbl();
    else if (k == "train.drop_iteration") t.drop_iteration = sz();
    else if (k == "train.beta1") t.beta1 = dbl();
    else if (k == "train.beta2") t.beta2 = dbl();
    else if (k == "train.epsilon") t.epsilon = dbl();
    else if (k == "train.max_iterations") t.max_iterations = sz();
    else if (k == "train.seed") t.seed = kv_u64(e, source);
    else if (k == "train.checkpoint_every") t.checkpoint_every = sz();
    else if (k == "train.use_region_mask") t.use_region_mask = kv_bool(e, source);
    else if (k == "train.preprocess_sigma") t.preprocess_sigma = dbl();
    else if (k == "train.feature_net_seed") t.feature_net_seed = kv_u64(e, source);
    else if (k == "loss.w_a") l.w_a = dbl();
    else if (k == "loss.w_s") l.w_s = dbl();
    else if (k == "loss.w_c") l.w_c = dbl();
    else if (k == "loss.w_p") l.w_p = dbl();
    else if (k == "loss.alpha_ssim") l.alpha_ssim = dbl();
    else if (k == "loss.alpha_l1") l.alpha_l1 = dbl();
    else if (k == "loss.alpha_grad") l.alpha_grad = dbl();
    else if (k == "loss.perceptual_right") l.perceptual_right = kv_bool(e, source);
    else if (k == "paths.dataset") c.dataset = path(e);
    else if (k == "paths.out") c.out_dir = path(e);
    else if (k == "eval.threshold") c.threshold = dbl();
    else if (k == "input.height") c.input_height = sz();
    else if (k == "input.width") c.input_width = sz();
    else fail(ErrorKind::config, std::string(source) + ":" + std::to_string(e.line) + ": unknown key '" + k + "'");
  }
}

RunConfig read_run_config(const std::filesystem::path& path, RunConfig base) {
  apply_entries(base, read_kv_file(path), path.string(), path.parent_path());
  return base;
}

std::string format_model_config(const RunConfig& c) {
  std::ostringstream o;
  auto num = [](double v) { return format_double(v); };
  const auto& n = c.network;
  const auto& t = c.train;
  const auto& l = c.loss;
  std::string pools;
  for (auto p : n.spp_pool_sizes) pools += (pools.empty() ? "" : " ") + std::to_string(p);
  o << "[network]\n"
    << "feature_channels = " << n.feature_channels << "\n"
    << "num_2d_layers = " << n.num_2d_layers << "\n"
    << "num_3d_layers = " << n.num_3d_layers << "\n"
    << "downsample_factor = " << n.downsample_factor << "\n"
    << "max_disparity = " << n.max_disparity << "\n"
    << "spp_pool_sizes = " << pools << "\n"
    << "volume_channels = " << n.volume_channels << "\n"
    << "seed = " << n.seed << "\n"
    << "standardize_input = " << (n.standardize_input ? "true" : "false") << "\n"
    << "[train]\n"
    << "lr_initial = " << num(t.lr_initial) << "\n"
    << "lr_after_drop = " << num(t.lr_after_drop) << "\n"
    << "drop_iteration = " << t.drop_iteration << "\n"
    << "beta1 = " << num(t.beta1) << "\n"
    << "beta2 = " << num(t.beta2) << "\n"
    << "epsilon = " << num(t.epsilon) << "\n"
    << "max_iterations = " << t.max_iterations << "\n"
    << "seed = " << t.seed << "\n"
    << "checkpoint_every = " << t.checkpoint_every << "\n"
    << "use_region_mask = " << (t.use_region_mask ? "true" : "false") << "\n"
    << "preprocess_sigma = " << num(t.preprocess_sigma) << "\n"
    << "feature_net_seed = " << t.feature_net_seed << "\n"
    << "[loss]\n"
    << "w_a = " << num(l.w_a) << "\n"
    << "w_s = " << num(l.w_s) << "\n"
    << "w_c = " << num(l.w_c) << "\n"
    << "w_p = " << num(l.w_p) << "\n"
    << "alpha_ssim = " << num(l.alpha_ssim) << "\n"
    << "alpha_l1 = " << num(l.alpha_l1) << "\n"
    << "alpha_grad = " << num(l.alpha_grad) << "\n"
    << "perceptual_right = " << (l.perceptual_right ? "true" : "false") << "\n"
    << "[input]\n"
    << "height = " << c.input_height << "\n"
    << "width = " << c.input_width << "\n";
  return o.str();
}

}  // namespace sdm
