#include "sdm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sdm {

namespace {

using NodePtr = std::shared_ptr<detail::Node>;
using Inputs = std::span<const NodePtr>;

// Splits `shape` around `axis` into (outer, len, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  require(axis < shape.size(), ErrorKind::shape, "axis " + std::to_string(axis) + " invalid for " + to_string(shape));
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// ---------------------------------------------------------------------------
// Binary pointwise ops with single-element broadcasting.

enum class Side { both, a_scalar, b_scalar };

Side broadcast_side(const Tensor& a, const Tensor& b, const char* name) {
  if (a.shape() == b.shape()) return Side::both;
  if (b.numel() == 1) return Side::b_scalar;
  if (a.numel() == 1) return Side::a_scalar;
  fail(ErrorKind::shape, std::string(name) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <class Fwd, class DA, class DB>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
  require(a.defined() && b.defined(), ErrorKind::state, std::string(name) + ": undefined operand");
  const Side side = broadcast_side(a, b, name);
  const Shape out_shape = side == Side::a_scalar ? b.shape() : a.shape();
  const std::size_t n = numel(out_shape);
  const auto ad = a.data();
  const auto bd = b.data();
  const std::size_t sa = side == Side::a_scalar ? 0 : 1;
  const std::size_t sb = side == Side::b_scalar ? 0 : 1;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[i * sa], bd[i * sb]);
  return make_result(name, out_shape, std::move(out), {a, b}, [sa, sb, n, da, db](const detail::Node& o, Inputs in) {
    const auto& x = in[0]->data;
    const auto& y = in[1]->data;
    if (in[0]->requires_grad) {
      auto& g = in[0]->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i * sa] += o.grad[i] * da(x[i * sa], y[i * sb], o.data[i]);
    }
    if (in[1]->requires_grad) {
      auto& g = in[1]->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i * sb] += o.grad[i] * db(x[i * sa], y[i * sb], o.data[i]);
    }
  });
}

template <class Fwd, class D>
Tensor unary(const char* name, const Tensor& a, Fwd fwd, D d) {
  require(a.defined(), ErrorKind::state, std::string(name) + ": undefined operand");
  const auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = fwd(ad[i]);
  return make_result(name, a.shape(), std::move(out), {a}, [d](const detail::Node& o, Inputs in) {
    const auto& x = in[0]->data;
    auto& g = in[0]->grad_buffer();
    for (std::size_t i = 0; i < x.size(); ++i) g[i] += o.grad[i] * d(x[i], o.data[i]);
  });
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data()) require(v != 0.0, ErrorKind::domain, "div: zero divisor element");
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Tensor abs(const Tensor& a) {
  return unary(
      "abs", a, [](double x) { return std::abs(x); }, [](double x, double) { return sign(x); });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double out) { return out; });
}

Tensor neg(const Tensor& a) {
  return unary(
      "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor square(const Tensor& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary(
      "clamp_min", a, [lo](double x) { return x > lo ? x : lo; }, [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor& b) {
  auto need_b = [&] { require(b.defined(), ErrorKind::shape, "elementwise: binary kind needs a second operand"); };
  switch (kind) {
    case Elementwise::add: need_b(); return add(a, b);
    case Elementwise::sub: need_b(); return sub(a, b);
    case Elementwise::mul: need_b(); return mul(a, b);
    case Elementwise::div: need_b(); return div(a, b);
    case Elementwise::abs: return abs(a);
    case Elementwise::exp: return exp(a);
    case Elementwise::neg: return neg(a);
    case Elementwise::square: return square(a);
    case Elementwise::clamp_min:
      need_b();
      return clamp_min(a, b.item());
  }
  fail(ErrorKind::domain, "elementwise: unknown kind");
}

// ---------------------------------------------------------------------------

Tensor reduce(Reduction kind, const Tensor& t, const std::vector<std::size_t>& axes) {
  const Shape& in_shape = t.shape();
  const std::size_t rank = in_shape.size();
  std::vector<bool> reduced(rank, false);
  for (std::size_t ax : axes) {
    require(ax < rank, ErrorKind::shape, "reduce: axis " + std::to_string(ax) + " invalid for " + to_string(in_shape));
    reduced[ax] = true;
  }
  Shape out_shape;
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    if (reduced[i]) {
      count *= in_shape[i];
    } else {
      out_shape.push_back(in_shape[i]);
    }
  }
  require(count > 0, ErrorKind::shape, "reduce: empty axis extent");

  // Map each input element to its output slot.
  const std::size_t n = t.numel();
  std::vector<std::size_t> target(n);
  {
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t flat = 0; flat < n; ++flat) {
      std::size_t o = 0;
      for (std::size_t i = 0; i < rank; ++i) {
        if (!reduced[i]) o = o * in_shape[i] + idx[i];
      }
      target[flat] = o;
      for (std::size_t i = rank; i-- > 0;) {
        if (++idx[i] < in_shape[i]) break;
        idx[i] = 0;
      }
    }
  }

  std::vector<double> out(numel(out_shape), 0.0);
  const auto d = t.data();
  for (std::size_t i = 0; i < n; ++i) out[target[i]] += d[i];
  const double scale = kind == Reduction::mean ? 1.0 / static_cast<double>(count) : 1.0;
  if (kind == Reduction::mean) {
    for (double& v : out) v /= static_cast<double>(count);
  }
  const char* name = kind == Reduction::mean ? "mean" : "sum";
  return make_result(name, std::move(out_shape), std::move(out), {t},
                     [target = std::move(target), scale](const detail::Node& o, Inputs in) {
                       auto& g = in[0]->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[target[i]] * scale;
                     });
}

namespace {
std::vector<std::size_t> all_axes(const Tensor& t) {
  std::vector<std::size_t> axes(t.dim());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  return axes;
}
}  // namespace

Tensor sum(const Tensor& t) { return reduce(Reduction::sum, t, all_axes(t)); }
Tensor mean(const Tensor& t) { return reduce(Reduction::mean, t, all_axes(t)); }
Tensor sum(const Tensor& t, const std::vector<std::size_t>& axes) { return reduce(Reduction::sum, t, axes); }
Tensor mean(const Tensor& t, const std::vector<std::size_t>& axes) { return reduce(Reduction::mean, t, axes); }

// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& t, Shape shape) {
  require(numel(shape) == t.numel(), ErrorKind::shape,
          "reshape: " + to_string(t.shape()) + " cannot become " + to_string(shape));
  return make_result("reshape", std::move(shape), t.to_vector(), {t}, [](const detail::Node& o, Inputs in) {
    auto& g = in[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), ErrorKind::shape, "concat: no inputs");
  Shape out_shape = parts[0].shape();
  const AxisSplit first = split_at(out_shape, axis);
  std::size_t total = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    Shape s = p.shape();
    require(s.size() == out_shape.size(), ErrorKind::shape, "concat: rank mismatch");
    const std::size_t len = s[axis];
    s[axis] = out_shape[axis];
    require(s == out_shape, ErrorKind::shape, "concat: extents differ off the concatenation axis");
    lens.push_back(len);
    total += len;
  }
  out_shape[axis] = total;
  const std::size_t outer = first.outer;
  const std::size_t inner = first.inner;
  std::vector<double> out(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto d = parts[k].data();
    const std::size_t block = lens[k] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(d.begin() + o * block, block, out.begin() + (o * total + offset) * inner);
    }
    offset += lens[k];
  }
  return make_result("concat", std::move(out_shape), std::move(out), parts,
                     [lens, outer, inner, total](const detail::Node& o, Inputs in) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < in.size(); ++k) {
                         const std::size_t block = lens[k] * inner;
                         if (in[k]->requires_grad) {
                           auto& g = in[k]->grad_buffer();
                           for (std::size_t oo = 0; oo < outer; ++oo) {
                             const double* src = o.grad.data() + (oo * total + off) * inner;
                             double* dst = g.data() + oo * block;
                             for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                           }
                         }
                         off += lens[k];
                       }
                     });
}

Tensor slice(const Tensor& t, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit s = split_at(t.shape(), axis);
  require(begin < end && end <= s.len, ErrorKind::shape, "slice: invalid range");
  Shape out_shape = t.shape();
  out_shape[axis] = end - begin;
  const std::size_t block = (end - begin) * s.inner;
  const auto d = t.data();
  std::vector<double> out(numel(out_shape));
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(d.begin() + (o * s.len + begin) * s.inner, block, out.begin() + o * block);
  }
  return make_result("slice", std::move(out_shape), std::move(out), {t}, [s, begin, block](const detail::Node& o, Inputs in) {
    auto& g = in[0]->grad_buffer();
    for (std::size_t oo = 0; oo < s.outer; ++oo) {
      double* dst = g.data() + (oo * s.len + begin) * s.inner;
      const double* src = o.grad.data() + oo * block;
      for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
    }
  });
}

Tensor pad2d(const Tensor& t, std::size_t pad, PadMode mode) {
  const Shape& in_shape = t.shape();
  require(in_shape.size() >= 2, ErrorKind::shape, "pad2d: need at least two axes");
  const std::size_t h = in_shape[in_shape.size() - 2];
  const std::size_t w = in_shape[in_shape.size() - 1];
  const std::size_t planes = t.numel() / (h * w);
  const std::size_t ph = h + 2 * pad;
  const std::size_t pw = w + 2 * pad;
  Shape out_shape = in_shape;
  out_shape[out_shape.size() - 2] = ph;
  out_shape[out_shape.size() - 1] = pw;

  // Source index per output position, or npos for zero fill.
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::vector<std::size_t> src(ph * pw);
  for (std::size_t y = 0; y < ph; ++y) {
    for (std::size_t x = 0; x < pw; ++x) {
      const long sy = static_cast<long>(y) - static_cast<long>(pad);
      const long sx = static_cast<long>(x) - static_cast<long>(pad);
      const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<long>(h) && sx < static_cast<long>(w);
      if (inside) {
        src[y * pw + x] = static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx);
      } else if (mode == PadMode::replicate) {
        const long cy = std::clamp(sy, 0L, static_cast<long>(h) - 1);
        const long cx = std::clamp(sx, 0L, static_cast<long>(w) - 1);
        src[y * pw + x] = static_cast<std::size_t>(cy) * w + static_cast<std::size_t>(cx);
      } else {
        src[y * pw + x] = npos;
      }
    }
  }
  const auto d = t.data();
  std::vector<double> out(planes * ph * pw, 0.0);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t i = 0; i < ph * pw; ++i) {
      if (src[i] != npos) out[p * ph * pw + i] = d[p * h * w + src[i]];
    }
  }
  return make_result("pad2d", std::move(out_shape), std::move(out), {t},
                     [src = std::move(src), planes, hw = h * w, phw = ph * pw](const detail::Node& o, Inputs in) {
                       auto& g = in[0]->grad_buffer();
                       for (std::size_t p = 0; p < planes; ++p) {
                         for (std::size_t i = 0; i < phw; ++i) {
                           if (src[i] != npos) g[p * hw + src[i]] += o.grad[p * phw + i];
                         }
                       }
                     });
}

Tensor shift(const Tensor& t, std::size_t axis, long offset) {
  const AxisSplit s = split_at(t.shape(), axis);
  std::vector<std::size_t> src(s.len);
  for (std::size_t i = 0; i < s.len; ++i) {
    src[i] = static_cast<std::size_t>(std::clamp(static_cast<long>(i) + offset, 0L, static_cast<long>(s.len) - 1));
  }
  const auto d = t.data();
  std::vector<double> out(t.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.len; ++i) {
      std::copy_n(d.begin() + (o * s.len + src[i]) * s.inner, s.inner, out.begin() + (o * s.len + i) * s.inner);
    }
  }
  return make_result("shift", t.shape(), std::move(out), {t}, [s, src = std::move(src)](const detail::Node& o, Inputs in) {
    auto& g = in[0]->grad_buffer();
    for (std::size_t oo = 0; oo < s.outer; ++oo) {
      for (std::size_t i = 0; i < s.len; ++i) {
        double* dst = g.data() + (oo * s.len + src[i]) * s.inner;
        const double* from = o.grad.data() + (oo * s.len + i) * s.inner;
        for (std::size_t k = 0; k < s.inner; ++k) dst[k] += from[k];
      }
    }
  });
}

// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& t, std::size_t axis) {
  const AxisSplit s = split_at(t.shape(), axis);
  const auto d = t.data();
  std::vector<double> out(t.numel());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double mx = d[base];
      for (std::size_t k = 1; k < s.len; ++k) mx = std::max(mx, d[base + k * s.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < s.len; ++k) {
        const double e = std::exp(d[base + k * s.inner] - mx);
        out[base + k * s.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < s.len; ++k) out[base + k * s.inner] /= z;
    }
  }
  return make_result("softmax", t.shape(), std::move(out), {t}, [s](const detail::Node& o, Inputs in) {
    auto& g = in[0]->grad_buffer();
    for (std::size_t oo = 0; oo < s.outer; ++oo) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = oo * s.len * s.inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < s.len; ++k) dot += o.grad[base + k * s.inner] * o.data[base + k * s.inner];
        for (std::size_t k = 0; k < s.len; ++k) {
          const std::size_t j = base + k * s.inner;
          g[j] += o.data[j] * (o.grad[j] - dot);
        }
      }
    }
  });
}

Tensor avg_pool2d(const Tensor& t, std::size_t window, std::size_t stride) {
  require(t.dim() == 3, ErrorKind::shape, "avg_pool2d: expected [C,H,W], got " + to_string(t.shape()));
  require(window >= 1 && stride >= 1, ErrorKind::domain, "avg_pool2d: window and stride must be positive");
  const std::size_t c = t.extent(0), h = t.extent(1), w = t.extent(2);
  require(window <= h && window <= w, ErrorKind::shape, "avg_pool2d: window exceeds spatial extents");
  const std::size_t oh = (h - window) / stride + 1;
  const std::size_t ow = (w - window) / stride + 1;
  const double area = static_cast<double>(window * window);
  const auto d = t.data();
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* plane = d.data() + ch * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t dy = 0; dy < window; ++dy) {
          const double* row = plane + (y * stride + dy) * w + x * stride;
          for (std::size_t dx = 0; dx < window; ++dx) acc += row[dx];
        }
        out[(ch * oh + y) * ow + x] = acc / area;
      }
    }
  }
  return make_result("avg_pool2d", {c, oh, ow}, std::move(out), {t},
                     [c, h, w, oh, ow, window, stride, area](const detail::Node& o, Inputs in) {
                       auto& g = in[0]->grad_buffer();
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         double* plane = g.data() + ch * h * w;
                         for (std::size_t y = 0; y < oh; ++y) {
                           for (std::size_t x = 0; x < ow; ++x) {
                             const double share = o.grad[(ch * oh + y) * ow + x] / area;
                             for (std::size_t dy = 0; dy < window; ++dy) {
                               double* row = plane + (y * stride + dy) * w + x * stride;
                               for (std::size_t dx = 0; dx < window; ++dx) row[dx] += share;
                             }
                           }
                         }
                       }
                     });
}

Tensor resample_linear(const Tensor& t, std::size_t axis, std::size_t out_len, Alignment alignment) {
  require(out_len >= 1, ErrorKind::domain, "resample_linear: target extent must be positive");
  const AxisSplit s = split_at(t.shape(), axis);
  if (out_len == s.len) {
    // Identity; still recorded so gradients flow.
    return reshape(t, t.shape());
  }
  struct Tap {
    std::size_t i0, i1;
    double frac;
  };
  std::vector<Tap> taps(out_len);
  const bool corners = alignment == Alignment::corners;
  const double scale = corners ? (out_len > 1 ? static_cast<double>(s.len - 1) / static_cast<double>(out_len - 1) : 0.0)
                               : static_cast<double>(s.len) / static_cast<double>(out_len);
  for (std::size_t j = 0; j < out_len; ++j) {
    double src = corners ? static_cast<double>(j) * scale : (static_cast<double>(j) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t i0 = static_cast<std::size_t>(src);
    if (i0 > s.len - 1) i0 = s.len - 1;
    const std::size_t i1 = std::min(i0 + 1, s.len - 1);
    taps[j] = {i0, i1, src - static_cast<double>(i0)};
  }
  Shape out_shape = t.shape();
  out_shape[axis] = out_len;
  const auto d = t.data();
  std::vector<double> out(s.outer * out_len * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < out_len; ++j) {
      const Tap& tap = taps[j];
      const double* a = d.data() + (o * s.len + tap.i0) * s.inner;
      const double* b = d.data() + (o * s.len + tap.i1) * s.inner;
      double* dst = out.data() + (o * out_len + j) * s.inner;
      const double wa = 1.0 - tap.frac;
      for (std::size_t k = 0; k < s.inner; ++k) dst[k] = wa * a[k] + tap.frac * b[k];
    }
  }
  return make_result("resample_linear", std::move(out_shape), std::move(out), {t},
                     [s, out_len, taps = std::move(taps)](const detail::Node& o, Inputs in) {
                       auto& g = in[0]->grad_buffer();
                       for (std::size_t oo = 0; oo < s.outer; ++oo) {
                         for (std::size_t j = 0; j < out_len; ++j) {
                           const Tap& tap = taps[j];
                           const double* src = o.grad.data() + (oo * out_len + j) * s.inner;
                           double* a = g.data() + (oo * s.len + tap.i0) * s.inner;
                           double* b = g.data() + (oo * s.len + tap.i1) * s.inner;
                           const double wa = 1.0 - tap.frac;
                           for (std::size_t k = 0; k < s.inner; ++k) {
                             a[k] += wa * src[k];
                             b[k] += tap.frac * src[k];
                           }
                         }
                       }
                     });
}

Tensor upsample_bilinear2d(const Tensor& t, std::size_t out_h, std::size_t out_w) {
  require(t.dim() == 3, ErrorKind::shape, "upsample_bilinear2d: expected [C,H,W], got " + to_string(t.shape()));
  return resample_linear(resample_linear(t, 1, out_h), 2, out_w);
}

Tensor upsample_trilinear3d(const Tensor& t, std::size_t out_d, std::size_t out_h, std::size_t out_w) {
  require(t.dim() == 4, ErrorKind::shape, "upsample_trilinear3d: expected [C,D,H,W], got " + to_string(t.shape()));
  return resample_linear(resample_linear(resample_linear(t, 1, out_d), 2, out_h), 3, out_w);
}

}  // namespace sdm
