#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sdm/data_io.hpp"

namespace sdm {

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::io, "write failed for " + path.string());
}

// Header tokenizer for the netpbm family: whitespace separated, '#' comments.
class HeaderReader {
 public:
  HeaderReader(const std::string& bytes, std::string name) : b_(bytes), name_(std::move(name)) {}

  std::string token() {
    skip_space();
    std::size_t start = pos_;
    while (pos_ < b_.size() && !std::isspace(static_cast<unsigned char>(b_[pos_]))) ++pos_;
    require(pos_ > start, ErrorKind::format, name_ + ": truncated header");
    return b_.substr(start, pos_ - start);
  }

  std::size_t number() {
    const std::string t = token();
    std::size_t v = 0;
    for (char c : t) {
      require(c >= '0' && c <= '9', ErrorKind::format, name_ + ": bad header field '" + t + "'");
      v = v * 10 + static_cast<std::size_t>(c - '0');
      require(v < (std::size_t{1} << 31), ErrorKind::format, name_ + ": header field too large");
    }
    return v;
  }

  // Exactly one whitespace byte separates the header from the payload.
  std::size_t payload_start() {
    require(pos_ < b_.size() && std::isspace(static_cast<unsigned char>(b_[pos_])), ErrorKind::format,
            name_ + ": missing separator before payload");
    return pos_ + 1;
  }

 private:
  void skip_space() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(b_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& b_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor read_pgm(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  const std::string name = path.string();
  HeaderReader hr(bytes, name);
  const std::string magic = hr.token();
  require(magic != "P2", ErrorKind::format, name + ": ASCII PGM (P2) is not supported, expected binary P5");
  require(magic == "P5", ErrorKind::format, name + ": not a binary PGM (magic '" + magic + "')");
  const std::size_t w = hr.number(), h = hr.number(), maxval = hr.number();
  require(w > 0 && h > 0, ErrorKind::format, name + ": zero image extent");
  require(maxval == 255, ErrorKind::format, name + ": maxval must be 255, got " + std::to_string(maxval));
  const std::size_t start = hr.payload_start();
  require(bytes.size() >= start + w * h, ErrorKind::format,
          name + ": truncated payload (" + std::to_string(bytes.size() - start) + " of " + std::to_string(w * h) +
              " bytes)");
  std::vector<double> v(w * h);
  for (std::size_t i = 0; i < w * h; ++i) v[i] = static_cast<unsigned char>(bytes[start + i]) / 255.0;
  return Tensor::from({1, h, w}, std::move(v));
}

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
  require(image.dim() == 3 && image.extent(0) == 1, ErrorKind::shape, "write_pgm: expected [1,H,W]");
  const std::size_t h = image.extent(1), w = image.extent(2);
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (double v : image.data()) {
    require(std::isfinite(v) && v >= 0.0 && v <= 1.0, ErrorKind::domain, "write_pgm: values must lie in [0, 1]");
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
  spit(path, out);
}

Tensor read_pfm(const std::filesystem::path& path) {
  const std::string bytes = slurp(path);
  const std::string name = path.string();
  HeaderReader hr(bytes, name);
  const std::string magic = hr.token();
  require(magic != "PF", ErrorKind::format, name + ": colour PFM (PF) is not supported, expected grayscale Pf");
  require(magic == "Pf", ErrorKind::format, name + ": not a PFM (magic '" + magic + "')");
  const std::size_t w = hr.number(), h = hr.number();
  require(w > 0 && h > 0, ErrorKind::format, name + ": zero image extent");
  const std::string scale_text = hr.token();
  double scale = 0.0;
  {
    std::istringstream ss(scale_text);
    ss >> scale;
    require(!ss.fail() && ss.eof() && std::isfinite(scale) && scale != 0.0, ErrorKind::format,
            name + ": bad scale field '" + scale_text + "'");
  }
  const bool little = scale < 0.0;
  const std::size_t start = hr.payload_start();
  require(bytes.size() >= start + 4 * w * h, ErrorKind::format, name + ": truncated payload");
  std::vector<double> v(w * h);
  for (std::size_t row = 0; row < h; ++row) {
    const std::size_t y = h - 1 - row;  // bottom-up storage
    for (std::size_t x = 0; x < w; ++x) {
      std::uint32_t bits = 0;
      const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + start + 4 * (row * w + x));
      for (int k = 0; k < 4; ++k) {
        const std::uint32_t byte = p[little ? k : 3 - k];
        bits |= byte << (8 * k);
      }
      v[y * w + x] = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return Tensor::from({h, w}, std::move(v));
}

void write_pfm(const std::filesystem::path& path, const Tensor& disparity) {
  require(disparity.dim() == 2, ErrorKind::shape, "write_pfm: expected [H,W]");
  const std::size_t h = disparity.extent(0), w = disparity.extent(1);
  std::string out = "Pf\n" + std::to_string(w) + " " + std::to_string(h) + "\n-1.0\n";
  const auto d = disparity.data();
  for (std::size_t row = 0; row < h; ++row) {
    const std::size_t y = h - 1 - row;
    for (std::size_t x = 0; x < w; ++x) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(d[y * w + x]));
      for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xffu));
    }
  }
  spit(path, out);
}

void write_png_rgb(const std::filesystem::path& path, std::size_t height, std::size_t width,
                   const std::vector<std::uint8_t>& rgb) {
  require(rgb.size() == 3 * height * width, ErrorKind::shape, "write_png_rgb: buffer size mismatch");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = PNG_FORMAT_RGB;
  const int ok = png_image_write_to_file(&img, path.string().c_str(), 0, rgb.data(), 0, nullptr);
  require(ok != 0, ErrorKind::io, "cannot write " + path.string() + ": " + img.message);
}

std::array<std::uint8_t, 3> turbo_rgb(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double r = 0.13572138 + t * (4.61539260 + t * (-42.66032258 + t * (132.13108234 + t * (-152.94239396 + t * 59.28637943))));
  const double g = 0.09140261 + t * (2.19418839 + t * (4.84296658 + t * (-14.18503333 + t * (4.27729857 + t * 2.82956604))));
  const double b = 0.10667330 + t * (12.64194608 + t * (-60.58204836 + t * (110.36276771 + t * (-89.90310912 + t * 27.34824973))));
  auto byte = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  return {byte(r), byte(g), byte(b)};
}

std::vector<std::uint8_t> colorize_disparity(const Tensor& disparity, double max_disparity) {
  require(disparity.dim() == 2, ErrorKind::shape, "colorize_disparity: expected [H,W]");
  require(max_disparity > 0.0, ErrorKind::domain, "colorize_disparity: max_disparity must be > 0");
  std::vector<std::uint8_t> rgb;
  rgb.reserve(3 * disparity.numel());
  for (double d : disparity.data()) {
    std::array<std::uint8_t, 3> c{0, 0, 0};
    if (std::isfinite(d) && d >= 0.0 && d <= max_disparity) c = turbo_rgb(d / max_disparity);
    rgb.insert(rgb.end(), c.begin(), c.end());
  }
  return rgb;
}

Tensor round_to_float(const Tensor& t) {
  std::vector<double> v = t.to_vector();
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
  return Tensor::from(t.shape(), std::move(v));
}

}  // namespace sdm
