#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "sdm/data_io.hpp"
#include "sdm/random.hpp"

namespace sdm {

namespace {

constexpr std::size_t kCurveSamples = 16;

void check_disparity(const LinearDisparity& d, const SceneSpec& s, const std::string& what) {
  const double dmax = static_cast<double>(s.max_disparity);
  const double lo = std::min(d.at(0.0), d.at(static_cast<double>(s.width - 1)));
  const double hi = std::max(d.at(0.0), d.at(static_cast<double>(s.width - 1)));
  require(std::isfinite(d.offset) && std::isfinite(d.slope), ErrorKind::config, what + ": disparity must be finite");
  require(lo >= 0.0 && hi <= dmax, ErrorKind::config,
          what + ": disparity spans [" + format_double(lo) + ", " + format_double(hi) + "], outside [0, " +
              std::to_string(s.max_disparity) + "]");
  require(std::abs(d.slope) < 0.5, ErrorKind::config, what + ": |disparity_slope| must be < 0.5");
}

std::vector<Point2> catmull_rom(const std::vector<Point2>& p) {
  const std::size_t n = p.size();
  auto at = [&](std::ptrdiff_t i) -> Point2 {
    if (i < 0) return {2 * p[0].x - p[1].x, 2 * p[0].y - p[1].y};
    if (i >= static_cast<std::ptrdiff_t>(n)) return {2 * p[n - 1].x - p[n - 2].x, 2 * p[n - 1].y - p[n - 2].y};
    return p[static_cast<std::size_t>(i)];
  };
  std::vector<Point2> out;
  for (std::size_t s = 0; s + 1 < n; ++s) {
    const auto i = static_cast<std::ptrdiff_t>(s);
    const Point2 p0 = at(i - 1), p1 = at(i), p2 = at(i + 1), p3 = at(i + 2);
    for (std::size_t k = 0; k < kCurveSamples; ++k) {
      const double t = static_cast<double>(k) / kCurveSamples;
      const double t2 = t * t, t3 = t2 * t;
      auto blend = [&](double a, double b, double c, double d) {
        return 0.5 * (2 * b + (-a + c) * t + (2 * a - 5 * b + 4 * c - d) * t2 + (-a + 3 * b - 3 * c + d) * t3);
      };
      out.push_back({blend(p0.x, p1.x, p2.x, p3.x), blend(p0.y, p1.y, p2.y, p3.y)});
    }
  }
  out.push_back(p[n - 1]);
  return out;
}

double segment_distance(Point2 q, Point2 a, Point2 b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? ((q.x - a.x) * vx + (q.y - a.y) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = q.x - (a.x + t * vx), dy = q.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

struct VeinShape {
  std::vector<Point2> polyline;
  double half_width;
  double xmin, xmax, ymin, ymax;  // bounding box grown by the half width

  explicit VeinShape(const VeinPrimitive& v) : polyline(catmull_rom(v.control_points)), half_width(0.5 * v.width) {
    xmin = ymin = INFINITY;
    xmax = ymax = -INFINITY;
    for (const auto& p : polyline) {
      xmin = std::min(xmin, p.x), xmax = std::max(xmax, p.x);
      ymin = std::min(ymin, p.y), ymax = std::max(ymax, p.y);
    }
    xmin -= half_width, xmax += half_width, ymin -= half_width, ymax += half_width;
  }

  /// Distance to the centre line, or a negative value when uncovered.
  double coverage(double x, double y) const {
    if (x < xmin || x > xmax || y < ymin || y > ymax) return -1.0;
    double best = INFINITY;
    for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
      best = std::min(best, segment_distance({x, y}, polyline[i], polyline[i + 1]));
    }
    return best <= half_width ? best : -1.0;
  }
};

// Smoothed, standardized value noise on an integer grid extending `margin`
// columns past both sides of the frame.
struct Texture {
  std::size_t w, h;
  double margin;
  std::vector<double> v;

  double sample(double x, std::size_t y) const {
    const double u = x + margin;
    require(u >= 0.0 && u <= static_cast<double>(w - 1), ErrorKind::domain,
            "render_synthetic_pair: texture lookup outside the generated margin");
    const auto i0 = std::min(static_cast<std::size_t>(u), w - 2);
    const double f = u - static_cast<double>(i0);
    const double a = v[y * w + i0], b = v[y * w + i0 + 1];
    return a + f * (b - a);
  }
};

void smooth_plane(double* plane, std::size_t h, std::size_t w, const std::vector<double>& k) {
  const auto r = static_cast<std::ptrdiff_t>(k.size() / 2);
  const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
  std::vector<double> tmp(h * w);
  for (std::ptrdiff_t y = 0; y < H; ++y) {
    for (std::ptrdiff_t x = 0; x < W; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t j = -r; j <= r; ++j) {
        acc += k[static_cast<std::size_t>(j + r)] * plane[y * W + std::clamp(x + j, std::ptrdiff_t{0}, W - 1)];
      }
      tmp[static_cast<std::size_t>(y * W + x)] = acc;
    }
  }
  for (std::ptrdiff_t y = 0; y < H; ++y) {
    for (std::ptrdiff_t x = 0; x < W; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t j = -r; j <= r; ++j) {
        acc += k[static_cast<std::size_t>(j + r)] * tmp[std::clamp(y + j, std::ptrdiff_t{0}, H - 1) * W + x];
      }
      plane[y * W + x] = acc;
    }
  }
}

Texture make_texture(const SceneSpec& s) {
  Texture t;
  t.margin = static_cast<double>(s.max_disparity + 8);
  t.w = s.width + 2 * (s.max_disparity + 8);
  t.h = s.height;
  t.v.resize(t.w * t.h);
  Rng rng = Rng::derived(s.seed, 0x74787472);  // "txtr"
  for (double& x : t.v) x = rng.uniform();
  if (s.background.texture_sigma > 0.0) smooth_plane(t.v.data(), t.h, t.w, gaussian_kernel(s.background.texture_sigma));
  double mean = 0.0;
  for (double x : t.v) mean += x;
  mean /= static_cast<double>(t.v.size());
  double var = 0.0;
  for (double x : t.v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(t.v.size()));
  for (double& x : t.v) x = s.background.level + s.background.contrast * (sd > 0.0 ? (x - mean) / sd : 0.0);
  return t;
}

struct Surface {
  LinearDisparity disparity;
  const VeinShape* shape = nullptr;  // null for the background
  double contrast = 0.0;
};

struct ViewRender {
  std::vector<double> image, disparity;
  std::vector<std::size_t> hits;  // covered pixels per vein, ignoring occlusion
};

// `right` selects the view; a right-view column x_r sees left column
// x_l = (x_r + a) / (1 - b) of a surface with disparity a + b x_l.
ViewRender render_view(const SceneSpec& s, const Texture& tex, const std::vector<Surface>& surfaces, bool right) {
  const std::size_t h = s.height, w = s.width;
  ViewRender out;
  out.image.assign(h * w, 0.0);
  out.disparity.assign(h * w, 0.0);
  out.hits.assign(surfaces.size(), 0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double best_d = -INFINITY, best_v = 0.0;
      for (std::size_t i = 0; i < surfaces.size(); ++i) {
        const Surface& sf = surfaces[i];
        const double xc = static_cast<double>(x);
        const double xl = right ? (xc + sf.disparity.offset) / (1.0 - sf.disparity.slope) : xc;
        double value;
        if (sf.shape) {
          const double r = sf.shape->coverage(xl, static_cast<double>(y));
          if (r < 0.0) continue;
          ++out.hits[i];
          const double u = r / sf.shape->half_width;
          value = tex.sample(xl, y) * (1.0 - sf.contrast * (1.0 - u * u));
        } else {
          value = tex.sample(xl, y);
        }
        const double d = sf.disparity.at(xl);
        // Later primitives are painted over earlier ones at equal depth.
        if (d >= best_d) best_d = d, best_v = value;
      }
      out.image[y * w + x] = best_v;
      out.disparity[y * w + x] = best_d;
    }
  }
  return out;
}

void add_noise_and_clamp(std::vector<double>& img, double sigma, Rng& rng) {
  for (double& v : img) {
    if (sigma > 0.0) v += sigma * rng.normal();
    v = std::clamp(v, 0.0, 1.0);
  }
}

}  // namespace

void SceneSpec::validate() const {
  require(width >= 4 && height >= 4, ErrorKind::config, "scene: width and height must be >= 4");
  require(max_disparity >= 1 && max_disparity < width, ErrorKind::config,
          "scene: max_disparity must be in [1, width)");
  require(blur_sigma >= 0.0 && noise_sigma >= 0.0, ErrorKind::config, "scene: blur_sigma and noise_sigma must be >= 0");
  require(background.texture_sigma >= 0.0 && background.contrast >= 0.0, ErrorKind::config,
          "scene: background texture_sigma and contrast must be >= 0");
  check_disparity(background.disparity, *this, "background");
  for (std::size_t i = 0; i < veins.size(); ++i) {
    const auto& v = veins[i];
    const std::string what = "vein " + std::to_string(i);
    require(v.control_points.size() >= 2, ErrorKind::config, what + ": needs at least 2 control points");
    require(v.width >= 1.0, ErrorKind::config, what + ": width must be >= 1");
    require(v.contrast >= 0.0 && v.contrast <= 1.0, ErrorKind::config, what + ": contrast must be in [0, 1]");
    check_disparity(v.disparity, *this, what);
  }
  const auto& r = random;
  require(r.control_points >= 2, ErrorKind::config, "scene: random.control_points must be >= 2");
  require(r.vein_width_min >= 1.0 && r.vein_width_min <= r.vein_width_max, ErrorKind::config,
          "scene: random vein widths need 1 <= min <= max");
  require(r.vein_offset_min >= 0.0 && r.vein_offset_min <= r.vein_offset_max, ErrorKind::config,
          "scene: random vein offsets need 0 <= min <= max");
  require(r.vein_contrast_min >= 0.0 && r.vein_contrast_min <= r.vein_contrast_max && r.vein_contrast_max <= 1.0,
          ErrorKind::config, "scene: random vein contrasts need 0 <= min <= max <= 1");
  require(r.background_disparity_min >= 0.0 && r.background_disparity_min <= r.background_disparity_max &&
              r.background_disparity_max <= static_cast<double>(max_disparity),
          ErrorKind::config, "scene: random background disparities need 0 <= min <= max <= max_disparity");
  require(r.background_slope_max >= 0.0 && r.background_slope_max < 0.5, ErrorKind::config,
          "scene: random.background_slope_max must be in [0, 0.5)");
}

SceneSpec materialize(const SceneSpec& spec) {
  spec.validate();
  SceneSpec s = spec;
  const auto& r = spec.random;
  Rng rng = Rng::derived(spec.seed, 0x7363656e);  // "scen"
  const double w = static_cast<double>(s.width), h = static_cast<double>(s.height);
  const double dmax = static_cast<double>(s.max_disparity);
  const double cx = 0.5 * (w - 1.0);

  if (r.background) {
    const double centre = rng.uniform(r.background_disparity_min, r.background_disparity_max);
    const double bound = std::min(r.background_slope_max, std::min(centre, dmax - centre) / cx);
    const double slope = rng.uniform(-bound, bound);
    s.background.disparity = {centre - slope * cx, slope};
  }
  const auto& bg = s.background.disparity;
  const double bg_max = std::max(bg.at(0.0), bg.at(w - 1.0));

  for (std::size_t i = 0; i < r.veins; ++i) {
    VeinPrimitive v;
    const bool horizontal = rng.uniform() < 0.5;
    const double along = horizontal ? w : h, across = horizontal ? h : w;
    const double base = rng.uniform(0.2, 0.8) * across;
    for (std::size_t k = 0; k < r.control_points; ++k) {
      const double t = -0.1 + 1.2 * static_cast<double>(k) / static_cast<double>(r.control_points - 1);
      const double a = t * along;
      const double c = std::clamp(base + rng.uniform(-0.15, 0.15) * across, 0.0, across - 1.0);
      v.control_points.push_back(horizontal ? Point2{a, c} : Point2{c, a});
    }
    v.width = rng.uniform(r.vein_width_min, r.vein_width_max);
    v.contrast = rng.uniform(r.vein_contrast_min, r.vein_contrast_max);
    const double offset = std::min(rng.uniform(r.vein_offset_min, r.vein_offset_max), dmax - bg_max);
    v.disparity = {bg.offset + offset, bg.slope};
    s.veins.push_back(std::move(v));
  }
  s.random.veins = 0;
  s.random.background = false;
  s.validate();
  return s;
}

SceneSpec parse_scene_spec(const std::vector<KvEntry>& entries, std::string_view source) {
  SceneSpec s;
  struct VeinFields {
    VeinPrimitive v;
    bool has_points = false;
    std::size_t line = 0;
  };
  std::map<std::size_t, VeinFields> veins;
  auto& bg = s.background;
  auto& r = s.random;
  for (const auto& e : entries) {
    const std::string& k = e.key;
    auto dbl = [&] { return kv_double(e, source); };
    auto sz = [&] { return kv_size(e, source); };
    if (k == "width") s.width = sz();
    else if (k == "height") s.height = sz();
    else if (k == "max_disparity") s.max_disparity = sz();
    else if (k == "blur_sigma") s.blur_sigma = dbl();
    else if (k == "noise_sigma") s.noise_sigma = dbl();
    else if (k == "seed") s.seed = kv_u64(e, source);
    else if (k == "background.disparity") bg.disparity.offset = dbl();
    else if (k == "background.disparity_slope") bg.disparity.slope = dbl();
    else if (k == "background.level") bg.level = dbl();
    else if (k == "background.contrast") bg.contrast = dbl();
    else if (k == "background.texture_sigma") bg.texture_sigma = dbl();
    else if (k == "random.veins") r.veins = sz();
    else if (k == "random.control_points") r.control_points = sz();
    else if (k == "random.vein_width_min") r.vein_width_min = dbl();
    else if (k == "random.vein_width_max") r.vein_width_max = dbl();
    else if (k == "random.vein_offset_min") r.vein_offset_min = dbl();
    else if (k == "random.vein_offset_max") r.vein_offset_max = dbl();
    else if (k == "random.vein_contrast_min") r.vein_contrast_min = dbl();
    else if (k == "random.vein_contrast_max") r.vein_contrast_max = dbl();
    else if (k == "random.background") r.background = kv_bool(e, source);
    else if (k == "random.background_disparity_min") r.background_disparity_min = dbl();
    else if (k == "random.background_disparity_max") r.background_disparity_max = dbl();
    else if (k == "random.background_slope_max") r.background_slope_max = dbl();
    else if (k.rfind("vein.", 0) == 0) {
      const auto dot = k.find('.', 5);
      KvEntry idx{k, k.substr(5, dot == std::string::npos ? std::string::npos : dot - 5), e.line};
      require(dot != std::string::npos, ErrorKind::format,
              std::string(source) + ":" + std::to_string(e.line) + ": expected vein.<index>.<field>");
      const std::size_t i = kv_size(idx, source);
      const std::string field = k.substr(dot + 1);
      auto& vf = veins[i];
      vf.line = vf.line ? vf.line : e.line;
      if (field == "points") {
        const auto xs = kv_doubles(e, source);
        require(xs.size() % 2 == 0, ErrorKind::format,
                std::string(source) + ":" + std::to_string(e.line) + ": points need x y pairs");
        for (std::size_t j = 0; j < xs.size(); j += 2) vf.v.control_points.push_back({xs[j], xs[j + 1]});
        vf.has_points = true;
      } else if (field == "width") vf.v.width = dbl();
      else if (field == "disparity") vf.v.disparity.offset = dbl();
      else if (field == "disparity_slope") vf.v.disparity.slope = dbl();
      else if (field == "contrast") vf.v.contrast = dbl();
      else fail(ErrorKind::config, std::string(source) + ":" + std::to_string(e.line) + ": unknown key '" + k + "'");
    } else {
      fail(ErrorKind::config, std::string(source) + ":" + std::to_string(e.line) + ": unknown key '" + k + "'");
    }
  }
  std::size_t expect = 0;
  for (auto& [i, vf] : veins) {
    require(i == expect++, ErrorKind::config,
            std::string(source) + ":" + std::to_string(vf.line) + ": vein indices must be 0, 1, 2, ...");
    require(vf.has_points, ErrorKind::config,
            std::string(source) + ":" + std::to_string(vf.line) + ": vein " + std::to_string(i) + " has no points");
    s.veins.push_back(std::move(vf.v));
  }
  s.validate();
  return s;
}

SceneSpec read_scene_spec(const std::filesystem::path& path) {
  return parse_scene_spec(read_kv_file(path), path.string());
}

std::string format_scene_spec(const SceneSpec& s) {
  std::ostringstream o;
  auto line = [&](const std::string& k, const std::string& v) { o << k << " = " << v << "\n"; };
  auto num = [](double v) { return format_double(v); };
  line("width", std::to_string(s.width));
  line("height", std::to_string(s.height));
  line("max_disparity", std::to_string(s.max_disparity));
  line("blur_sigma", num(s.blur_sigma));
  line("noise_sigma", num(s.noise_sigma));
  line("seed", std::to_string(s.seed));
  line("background.disparity", num(s.background.disparity.offset));
  line("background.disparity_slope", num(s.background.disparity.slope));
  line("background.level", num(s.background.level));
  line("background.contrast", num(s.background.contrast));
  line("background.texture_sigma", num(s.background.texture_sigma));
  const auto& r = s.random;
  line("random.veins", std::to_string(r.veins));
  line("random.control_points", std::to_string(r.control_points));
  line("random.vein_width_min", num(r.vein_width_min));
  line("random.vein_width_max", num(r.vein_width_max));
  line("random.vein_offset_min", num(r.vein_offset_min));
  line("random.vein_offset_max", num(r.vein_offset_max));
  line("random.vein_contrast_min", num(r.vein_contrast_min));
  line("random.vein_contrast_max", num(r.vein_contrast_max));
  line("random.background", r.background ? "true" : "false");
  line("random.background_disparity_min", num(r.background_disparity_min));
  line("random.background_disparity_max", num(r.background_disparity_max));
  line("random.background_slope_max", num(r.background_slope_max));
  for (std::size_t i = 0; i < s.veins.size(); ++i) {
    const auto& v = s.veins[i];
    const std::string p = "vein." + std::to_string(i) + ".";
    std::string pts;
    for (const auto& c : v.control_points) pts += (pts.empty() ? "" : " ") + num(c.x) + " " + num(c.y);
    line(p + "points", pts);
    line(p + "width", num(v.width));
    line(p + "disparity", num(v.disparity.offset));
    line(p + "disparity_slope", num(v.disparity.slope));
    line(p + "contrast", num(v.contrast));
  }
  return o.str();
}

StereoPair render_synthetic_pair(const SceneSpec& spec) {
  const SceneSpec s = materialize(spec);
  const std::size_t h = s.height, w = s.width;
  const Texture tex = make_texture(s);

  std::vector<VeinShape> shapes;
  shapes.reserve(s.veins.size());
  for (const auto& v : s.veins) shapes.emplace_back(v);
  std::vector<Surface> surfaces{{s.background.disparity, nullptr, 0.0}};
  for (std::size_t i = 0; i < s.veins.size(); ++i) {
    surfaces.push_back({s.veins[i].disparity, &shapes[i], s.veins[i].contrast});
  }

  ViewRender left = render_view(s, tex, surfaces, false);
  ViewRender right = render_view(s, tex, surfaces, true);
  for (std::size_t i = 1; i < surfaces.size(); ++i) {
    const std::string what = "render_synthetic_pair: vein " + std::to_string(i - 1) + " lies entirely outside the ";
    require(left.hits[i] > 0, ErrorKind::domain, what + "left frame");
    require(right.hits[i] > 0, ErrorKind::domain, what + "right frame after its disparity shift");
  }

  StereoPair pair;
  pair.gt_disp_left = Tensor::from({h, w}, std::move(left.disparity));
  pair.gt_disp_right = Tensor::from({h, w}, std::move(right.disparity));
  pair.occlusion_left = cross_check_occlusion(pair.gt_disp_left, pair.gt_disp_right, ViewSide::left);
  pair.occlusion_right = cross_check_occlusion(pair.gt_disp_right, pair.gt_disp_left, ViewSide::right);

  const auto kernel = s.blur_sigma > 0.0 ? gaussian_kernel(s.blur_sigma) : std::vector<double>{1.0};
  if (s.blur_sigma > 0.0) {
    smooth_plane(left.image.data(), h, w, kernel);
    smooth_plane(right.image.data(), h, w, kernel);
  }
  Rng noise = Rng::derived(s.seed, 0x6e6f6973);  // "nois"
  add_noise_and_clamp(left.image, s.noise_sigma, noise);
  add_noise_and_clamp(right.image, s.noise_sigma, noise);
  pair.left = Tensor::from({1, h, w}, std::move(left.image));
  pair.right = Tensor::from({1, h, w}, std::move(right.image));
  return pair;
}

Tensor cross_check_occlusion(const Tensor& d_self, const Tensor& d_other, ViewSide side, double threshold) {
  require(d_self.dim() == 2 && d_self.shape() == d_other.shape(), ErrorKind::shape,
          "cross_check_occlusion: disparities must be [H,W] of equal shape");
  const std::size_t h = d_self.extent(0), w = d_self.extent(1);
  const auto a = d_self.data(), b = d_other.data();
  const double sign = side == ViewSide::left ? -1.0 : 1.0;
  std::vector<double> occ(h * w, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double d = a[y * w + x];
      const double j = std::floor(static_cast<double>(x) + sign * d + 0.5);
      if (j < 0.0 || j >= static_cast<double>(w)) {
        occ[y * w + x] = 1.0;
        continue;
      }
      if (std::abs(d - b[y * w + static_cast<std::size_t>(j)]) > threshold) occ[y * w + x] = 1.0;
    }
  }
  return Tensor::from({h, w}, std::move(occ));
}

std::vector<double> gaussian_kernel(double sigma) {
  require(sigma > 0.0 && std::isfinite(sigma), ErrorKind::domain, "gaussian_kernel: sigma must be > 0");
  const auto r = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> k;
  double total = 0.0;
  for (std::ptrdiff_t i = -r; i <= r; ++i) {
    const double x = static_cast<double>(i);
    k.push_back(std::exp(-x * x / (2.0 * sigma * sigma)));
    total += k.back();
  }
  for (double& v : k) v /= total;
  return k;
}

Tensor gaussian_smooth(const Tensor& image, double sigma) {
  require(sigma >= 0.0 && std::isfinite(sigma), ErrorKind::domain, "gaussian_smooth: sigma must be >= 0");
  require(image.dim() == 2 || image.dim() == 3, ErrorKind::shape, "gaussian_smooth: expected [H,W] or [C,H,W]");
  std::vector<double> v = image.to_vector();
  if (sigma == 0.0) return Tensor::from(image.shape(), std::move(v));
  const std::size_t h = image.extent(image.dim() - 2), w = image.extent(image.dim() - 1);
  const auto k = gaussian_kernel(sigma);
  for (std::size_t c = 0; c < v.size() / (h * w); ++c) smooth_plane(v.data() + c * h * w, h, w, k);
  return Tensor::from(image.shape(), std::move(v));
}

}  // namespace sdm
