#include "sdm/trainer.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sdm/data_io.hpp"
#include "sdm/random.hpp"

namespace sdm {

namespace {

constexpr char kMagic[8] = {'S', 'D', 'M', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHistoryColumns = 12;

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(const std::string& s) { buf_ += s; }
  const std::string& str() const { return buf_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string buf, std::string name) : buf_(std::move(buf)), name_(std::move(name)) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    require(n <= buf_.size() - pos_, ErrorKind::format, name_ + ": truncated checkpoint");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{static_cast<unsigned char>(buf_[pos_ + i])} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string buf_;
  std::string name_;
  std::size_t pos_ = 0;
};

void write_tensor(Writer& w, const std::string& name, const Shape& shape, std::span<const double> data) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name);
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (auto e : shape) w.u64(e);
  for (double v : data) w.f64(v);
}

std::vector<double> history_row(const IterationRecord& r) {
  return {static_cast<double>(r.iteration), static_cast<double>(r.pair_index), r.lr, r.appearance_l, r.appearance_r,
          r.smooth_l, r.smooth_r, r.consistency_l, r.consistency_r, r.perceptual_l, r.perceptual_r, r.total};
}

IterationRecord history_record(const double* v) {
  IterationRecord r;
  r.iteration = static_cast<std::size_t>(v[0]);
  r.pair_index = static_cast<std::size_t>(v[1]);
  r.lr = v[2];
  r.appearance_l = v[3], r.appearance_r = v[4];
  r.smooth_l = v[5], r.smooth_r = v[6];
  r.consistency_l = v[7], r.consistency_r = v[8];
  r.perceptual_l = v[9], r.perceptual_r = v[10];
  r.total = v[11];
  return r;
}

Tensor region_mask(std::size_t h, std::size_t w, std::size_t d, ViewSide side, bool on) {
  return on ? valid_region_mask(h, w, d, side) : Tensor::ones({h, w});
}

ModelParams frozen(const ModelParams& params) {
  ModelParams out;
  for (const auto& e : params.entries()) out.add(e.name, e.value.detach());
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  require(lr_after_drop > 0.0 && lr_after_drop <= lr_initial, ErrorKind::config,
          "train: need 0 < lr_after_drop <= lr_initial");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorKind::config,
          "train: beta1 and beta2 must lie in [0, 1)");
  require(epsilon > 0.0, ErrorKind::config, "train: epsilon must be > 0");
  require(preprocess_sigma >= 0.0, ErrorKind::config, "train: preprocess_sigma must be >= 0");
}

AdamState AdamState::zeros_like(const ModelParams& params) {
  AdamState s;
  for (const auto& e : params.entries()) {
    s.m.emplace_back(e.value.numel(), 0.0);
    s.v.emplace_back(e.value.numel(), 0.0);
  }
  return s;
}

void adam_step(ModelParams& params, const std::vector<std::vector<double>>& grads, AdamState& state, double lr,
               const TrainConfig& config) {
  auto& entries = params.entries();
  require(grads.size() == entries.size() && state.m.size() == entries.size() && state.v.size() == entries.size(),
          ErrorKind::shape, "adam_step: parameter, gradient and state counts differ");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::size_t n = entries[i].value.numel();
    require(grads[i].size() == n && state.m[i].size() == n && state.v[i].size() == n, ErrorKind::shape,
            "adam_step: size mismatch for " + entries[i].name);
    for (double g : grads[i]) {
      require(std::isfinite(g), ErrorKind::numeric, "adam_step: non-finite gradient in " + entries[i].name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto p = entries[i].value.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + config.epsilon);
    }
  }
}

std::string format_log_line(const IterationRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "iter=%zu pair=%zu lr=%.17g appearance_l=%.17g appearance_r=%.17g smooth_l=%.17g smooth_r=%.17g "
                "consistency_l=%.17g consistency_r=%.17g perceptual_l=%.17g perceptual_r=%.17g total=%.17g",
                r.iteration, r.pair_index, r.lr, r.appearance_l, r.appearance_r, r.smooth_l, r.smooth_r,
                r.consistency_l, r.consistency_r, r.perceptual_l, r.perceptual_r, r.total);
  return buf;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w;
  w.bytes(std::string(kMagic, sizeof kMagic));
  w.u32(kVersion);
  w.u64(ckpt.iteration);
  w.u64(ckpt.adam.step);
  w.u64(ckpt.config_text.size());
  w.bytes(ckpt.config_text);
  const auto& entries = ckpt.params.entries();
  require(ckpt.adam.m.size() == entries.size() && ckpt.adam.v.size() == entries.size(), ErrorKind::state,
          "save_checkpoint: Adam state does not match the parameters");
  w.u64(3 * entries.size() + 1);
  for (const auto& e : entries) write_tensor(w, e.name, e.value.shape(), e.value.data());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    write_tensor(w, "adam.m." + entries[i].name, entries[i].value.shape(), ckpt.adam.m[i]);
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    write_tensor(w, "adam.v." + entries[i].name, entries[i].value.shape(), ckpt.adam.v[i]);
  }
  std::vector<double> hist;
  for (const auto& r : ckpt.history) {
    const auto row = history_row(r);
    hist.insert(hist.end(), row.begin(), row.end());
  }
  write_tensor(w, "history", {ckpt.history.size(), kHistoryColumns}, hist);

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write " + tmp.string());
    out.write(w.str().data(), static_cast<std::streamsize>(w.str().size()));
    require(static_cast<bool>(out), ErrorKind::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  require(!ec, ErrorKind::io, "cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string name = path.string();
  Reader r(ss.str(), name);
  require(r.bytes(sizeof kMagic) == std::string(kMagic, sizeof kMagic), ErrorKind::format,
          name + ": not a checkpoint (bad magic)");
  const auto version = r.u32();
  require(version == kVersion, ErrorKind::format, name + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.iteration = r.u64();
  ckpt.adam.step = r.u64();
  ckpt.config_text = r.bytes(r.u64());
  const std::uint64_t count = r.u64();
  require(count >= 1 && (count - 1) % 3 == 0, ErrorKind::format, name + ": bad tensor count");
  const std::size_t np = (count - 1) / 3;
  for (std::uint64_t t = 0; t < count; ++t) {
    const std::string tname = r.bytes(r.u32());
    const std::uint32_t rank = r.u32();
    require(rank <= 8, ErrorKind::format, name + ": bad rank for " + tname);
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& e : shape) {
      e = r.u64();
      require(e < (std::size_t{1} << 32), ErrorKind::format, name + ": bad extent for " + tname);
      n *= e;
    }
    std::vector<double> data(n);
    for (auto& v : data) v = r.f64();
    if (t < np) {
      ckpt.params.add(tname, Tensor::from(shape, std::move(data)).set_requires_grad(true));
    } else if (t < 3 * np) {
      const bool first = t < 2 * np;
      const auto& expected = ckpt.params.entries()[t % np];
      require(tname == (first ? "adam.m." : "adam.v.") + expected.name && shape == expected.value.shape(),
              ErrorKind::format, name + ": unexpected tensor " + tname);
      (first ? ckpt.adam.m : ckpt.adam.v).push_back(std::move(data));
    } else {
      require(tname == "history" && rank == 2 && shape[1] == kHistoryColumns, ErrorKind::format,
              name + ": bad history tensor");
      for (std::size_t i = 0; i < shape[0]; ++i) ckpt.history.push_back(history_record(&data[i * kHistoryColumns]));
    }
  }
  require(r.done(), ErrorKind::format, name + ": trailing bytes after the last tensor");
  return ckpt;
}

std::size_t sample_index(std::uint64_t seed, std::size_t iteration, std::size_t dataset_size) {
  require(dataset_size > 0, ErrorKind::domain, "sample_index: empty dataset");
  const std::size_t pass = iteration / dataset_size;
  std::vector<std::size_t> order(dataset_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::derived(seed, 0x73686666 + pass);  // "shff"
  for (std::size_t i = dataset_size; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order[iteration % dataset_size];
}

StereoPair preprocess(const StereoPair& pair, double sigma) {
  if (sigma == 0.0) return pair;
  StereoPair out = pair;
  out.left = gaussian_smooth(pair.left, sigma);
  out.right = gaussian_smooth(pair.right, sigma);
  return out;
}

Checkpoint train(const std::vector<StereoPair>& dataset, const NetworkConfig& network, const TrainConfig& train,
                 const LossWeights& weights, const std::string& config_text, const TrainCallbacks& callbacks,
                 const Checkpoint* resume) {
  network.validate();
  train.validate();
  require(!dataset.empty(), ErrorKind::domain, "train: dataset is empty");

  Checkpoint ckpt;
  if (resume) {
    ckpt = *resume;
    ckpt.params = resume->params.clone();
    require(ckpt.params.entries().size() == init_params(network).entries().size(), ErrorKind::state,
            "train: checkpoint parameters do not match the network configuration");
  } else {
    ckpt.params = init_params(network);
    ckpt.adam = AdamState::zeros_like(ckpt.params);
  }
  ckpt.config_text = config_text;

  std::vector<StereoPair> data;
  for (const auto& p : dataset) {
    require(p.height() == dataset.front().height() && p.width() == dataset.front().width(), ErrorKind::shape,
            "train: all pairs must share the same extents");
    data.push_back(preprocess(p, train.preprocess_sigma));
  }
  const std::size_t h = data.front().height(), w = data.front().width();
  const Tensor mask_l = region_mask(h, w, network.max_disparity, ViewSide::left, train.use_region_mask);
  const Tensor mask_r = region_mask(h, w, network.max_disparity, ViewSide::right, train.use_region_mask);
  const FixedFeatureNet feature_net = FixedFeatureNet::seeded(train.feature_net_seed);

  while (ckpt.iteration < train.max_iterations) {
    const std::size_t it = ckpt.iteration;
    const std::size_t idx = sample_index(train.seed, it, data.size());
    const StereoPair& pair = data[idx];
    ckpt.params.zero_grad();
    const ForwardResult fr = forward_pass(pair, ckpt.params, network);
    const Reconstructions recon = reconstruct(pair, fr.d_l, fr.d_r);
    const LossReport rep = total_loss(pair, fr.d_l, fr.d_r, recon, mask_l, mask_r, weights, feature_net);
    require(std::isfinite(rep.total_value), ErrorKind::numeric,
            "train: non-finite loss at iteration " + std::to_string(it));
    backward(rep.total);

    std::vector<std::vector<double>> grads;
    for (const auto& e : ckpt.params.entries()) grads.push_back(e.value.grad());
    const double lr = train.lr_at(it);
    try {
      adam_step(ckpt.params, grads, ckpt.adam, lr, train);
    } catch (const Error& e) {
      fail(e.kind(), std::string(e.what()) + " at iteration " + std::to_string(it));
    }

    IterationRecord r;
    r.iteration = it;
    r.pair_index = idx;
    r.lr = lr;
    r.appearance_l = rep.appearance_l, r.appearance_r = rep.appearance_r;
    r.smooth_l = rep.smooth_l, r.smooth_r = rep.smooth_r;
    r.consistency_l = rep.consistency_l, r.consistency_r = rep.consistency_r;
    r.perceptual_l = rep.perceptual_l, r.perceptual_r = rep.perceptual_r;
    r.total = rep.total_value;
    ckpt.history.push_back(r);
    ckpt.iteration = it + 1;
    if (callbacks.on_iteration) callbacks.on_iteration(r);
    if (callbacks.on_checkpoint && train.checkpoint_every > 0 && ckpt.iteration % train.checkpoint_every == 0) {
      callbacks.on_checkpoint(ckpt);
    }
  }
  ckpt.params.zero_grad();
  return ckpt;
}

ForwardResult infer(const StereoPair& pair, const ModelParams& params, const NetworkConfig& network) {
  return forward_pass(pair, frozen(params), network);
}

}  // namespace sdm
