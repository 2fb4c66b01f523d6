#include <Eigen/Core>

#include "sdm/ops.hpp"

namespace sdm {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Inputs = std::span<const std::shared_ptr<detail::Node>>;

// Volumetric geometry shared by the 2D (depth 1) and 3D cases.
struct ConvGeom {
  std::size_t cin, cout;
  std::size_t id, ih, iw;     // input extents
  std::size_t kd, kh, kw;     // kernel extents
  std::size_t od, oh, ow;     // output extents
  std::size_t sd, sh, sw;     // strides
  std::size_t pd, ph, pw;     // paddings

  std::size_t rows() const { return cin * kd * kh * kw; }
  std::size_t positions() const { return od * oh * ow; }
};

std::size_t out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad, const char* name) {
  require(in + 2 * pad >= k, ErrorKind::shape, std::string(name) + ": kernel larger than padded input");
  return (in + 2 * pad - k) / stride + 1;
}

// Range [lo, hi) of output coordinates whose tap `k` lands inside [0, in).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t k, std::size_t stride,
                                                std::size_t pad) {
  // Need 0 <= o*stride + k - pad < in.
  std::size_t lo = 0;
  if (k < pad) lo = (pad - k + stride - 1) / stride;
  std::size_t hi = 0;
  if (in + pad > k) hi = std::min(out, (in + pad - k - 1) / stride + 1);
  if (hi < lo) hi = lo;
  return {lo, hi};
}

// cols[r, p] for row r = (ci, a, b, c) and position p = (z, y, x).
void im2col(const ConvGeom& g, const double* in, double* cols) {
  const std::size_t P = g.positions();
  std::size_t r = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t a = 0; a < g.kd; ++a) {
      const auto [z0, z1] = valid_range(g.od, g.id, a, g.sd, g.pd);
      for (std::size_t b = 0; b < g.kh; ++b) {
        const auto [y0, y1] = valid_range(g.oh, g.ih, b, g.sh, g.ph);
        for (std::size_t c = 0; c < g.kw; ++c, ++r) {
          const auto [x0, x1] = valid_range(g.ow, g.iw, c, g.sw, g.pw);
          double* row = cols + r * P;
          // The buffer is uninitialized: every position is written exactly once.
          for (std::size_t z = 0; z < g.od; ++z) {
            const bool z_in = z >= z0 && z < z1;
            const std::size_t iz = z * g.sd + a - g.pd;
            for (std::size_t y = 0; y < g.oh; ++y) {
              double* dst = row + (z * g.oh + y) * g.ow;
              if (!z_in || y < y0 || y >= y1) {
                std::fill(dst, dst + g.ow, 0.0);
                continue;
              }
              const std::size_t iy = y * g.sh + b - g.ph;
              const double* src = in + ((ci * g.id + iz) * g.ih + iy) * g.iw;
              std::fill(dst, dst + x0, 0.0);
              if (g.sw == 1) {
                const std::size_t shift = c - g.pw;  // wraps harmlessly; only used with x >= x0
                for (std::size_t x = x0; x < x1; ++x) dst[x] = src[x + shift];
              } else {
                for (std::size_t x = x0; x < x1; ++x) dst[x] = src[x * g.sw + c - g.pw];
              }
              std::fill(dst + x1, dst + g.ow, 0.0);
            }
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeom& g, const double* cols, double* in) {
  const std::size_t P = g.positions();
  std::size_t r = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t a = 0; a < g.kd; ++a) {
      const auto [z0, z1] = valid_range(g.od, g.id, a, g.sd, g.pd);
      for (std::size_t b = 0; b < g.kh; ++b) {
        const auto [y0, y1] = valid_range(g.oh, g.ih, b, g.sh, g.ph);
        for (std::size_t c = 0; c < g.kw; ++c, ++r) {
          const auto [x0, x1] = valid_range(g.ow, g.iw, c, g.sw, g.pw);
          const double* row = cols + r * P;
          for (std::size_t z = z0; z < z1; ++z) {
            const std::size_t iz = z * g.sd + a - g.pd;
            for (std::size_t y = y0; y < y1; ++y) {
              const std::size_t iy = y * g.sh + b - g.ph;
              double* dst = in + ((ci * g.id + iz) * g.ih + iy) * g.iw;
              const double* src = row + (z * g.oh + y) * g.ow;
              for (std::size_t x = x0; x < x1; ++x) dst[x * g.sw + c - g.pw] += src[x];
            }
          }
        }
      }
    }
  }
}

Tensor conv_impl(const char* name, const Tensor& input, const Tensor& kernels, const Tensor& bias, const ConvGeom& g,
                 Shape out_shape) {
  const std::size_t K = g.rows();
  const std::size_t P = g.positions();
  auto cols = std::make_shared<RowMat>(K, P);
  im2col(g, input.data().data(), cols->data());

  const RowMat w = Eigen::Map<const RowMat>(kernels.data().data(), g.cout, K);
  RowMat o(g.cout, P);
  o.noalias() = w * *cols;
  std::vector<double> out(o.data(), o.data() + o.size());
  if (bias.defined()) {
    const auto bd = bias.data();
    for (std::size_t co = 0; co < g.cout; ++co)
      for (std::size_t p = 0; p < P; ++p) out[co * P + p] += bd[co];
  }

  std::vector<Tensor> inputs{input, kernels};
  if (bias.defined()) inputs.push_back(bias);
  if (!kernels.requires_grad()) cols.reset();  // only the kernel gradient needs the patches

  return make_result(name, std::move(out_shape), std::move(out), std::move(inputs),
                     [g, cols](const detail::Node& onode, Inputs in) {
                       const std::size_t K = g.rows();
                       const std::size_t P = g.positions();
                       const RowMat go = Eigen::Map<const RowMat>(onode.grad.data(), g.cout, P);
                       if (in[0]->requires_grad) {
                         const RowMat w = Eigen::Map<const RowMat>(in[1]->data.data(), g.cout, K);
                         const RowMat gcols = w.transpose() * go;
                         col2im_add(g, gcols.data(), in[0]->grad_buffer().data());
                       }
                       if (in[1]->requires_grad) {
                         const RowMat gw = go * cols->transpose();
                         auto& buf = in[1]->grad_buffer();
                         for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += gw.data()[i];
                       }
                       if (in.size() > 2 && in[2]->requires_grad) {
                         auto& gb = in[2]->grad_buffer();
                         for (std::size_t co = 0; co < g.cout; ++co) {
                           double acc = 0.0;
                           for (std::size_t p = 0; p < P; ++p) acc += onode.grad[co * P + p];
                           gb[co] += acc;
                         }
                       }
                     });
}

void check_common(const char* name, const Tensor& kernels, const Tensor& bias, std::size_t cin, std::size_t stride) {
  require(stride >= 1, ErrorKind::domain, std::string(name) + ": stride must be >= 1");
  require(kernels.extent(1) == cin, ErrorKind::shape,
          std::string(name) + ": input has " + std::to_string(cin) + " channels but kernels expect " +
              std::to_string(kernels.extent(1)));
  if (bias.defined()) {
    require(bias.dim() == 1 && bias.extent(0) == kernels.extent(0), ErrorKind::shape,
            std::string(name) + ": bias must have one entry per output channel");
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride, std::size_t padding) {
  require(input.dim() == 3, ErrorKind::shape, "conv2d: input must be [C,H,W], got " + to_string(input.shape()));
  require(kernels.dim() == 4, ErrorKind::shape, "conv2d: kernels must be [Co,Ci,kh,kw]");
  check_common("conv2d", kernels, bias, input.extent(0), stride);
  const std::size_t kh = kernels.extent(2), kw = kernels.extent(3);
  require(kh % 2 == 1 && kw % 2 == 1, ErrorKind::shape, "conv2d: kernel extents must be odd");
  ConvGeom g{};
  g.cin = input.extent(0);
  g.cout = kernels.extent(0);
  g.id = 1, g.ih = input.extent(1), g.iw = input.extent(2);
  g.kd = 1, g.kh = kh, g.kw = kw;
  g.sd = 1, g.sh = stride, g.sw = stride;
  g.pd = 0, g.ph = padding, g.pw = padding;
  g.od = 1;
  g.oh = out_extent(g.ih, kh, stride, padding, "conv2d");
  g.ow = out_extent(g.iw, kw, stride, padding, "conv2d");
  return conv_impl("conv2d", input, kernels, bias, g, {g.cout, g.oh, g.ow});
}

Tensor conv3d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride, std::size_t padding) {
  require(input.dim() == 4, ErrorKind::shape, "conv3d: input must be [C,D,H,W], got " + to_string(input.shape()));
  require(kernels.dim() == 5, ErrorKind::shape, "conv3d: kernels must be [Co,Ci,kd,kh,kw]");
  check_common("conv3d", kernels, bias, input.extent(0), stride);
  const std::size_t kd = kernels.extent(2), kh = kernels.extent(3), kw = kernels.extent(4);
  require(kd % 2 == 1 && kh % 2 == 1 && kw % 2 == 1, ErrorKind::shape, "conv3d: kernel extents must be odd");
  ConvGeom g{};
  g.cin = input.extent(0);
  g.cout = kernels.extent(0);
  g.id = input.extent(1), g.ih = input.extent(2), g.iw = input.extent(3);
  g.kd = kd, g.kh = kh, g.kw = kw;
  g.sd = g.sh = g.sw = stride;
  g.pd = g.ph = g.pw = padding;
  g.od = out_extent(g.id, kd, stride, padding, "conv3d");
  g.oh = out_extent(g.ih, kh, stride, padding, "conv3d");
  g.ow = out_extent(g.iw, kw, stride, padding, "conv3d");
  return conv_impl("conv3d", input, kernels, bias, g, {g.cout, g.od, g.oh, g.ow});
}

}  // namespace sdm
