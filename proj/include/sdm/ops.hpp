#pragma once

#include <cstddef>
#include <vector>

#include "sdm/tensor.hpp"

namespace sdm {

// ---------------------------------------------------------------------------
// Pointwise arithmetic. Binary ops take equal shapes, or one single-element
// operand which is broadcast.

enum class Elementwise { add, sub, mul, div, abs, exp, neg, square, clamp_min };

/// Dispatches on `kind`. Unary kinds ignore `b`; clamp_min reads its lower
/// bound from single-element `b`.
Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor& b = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Domain error if any divisor element is zero.
Tensor div(const Tensor& a, const Tensor& b);
Tensor abs(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);
/// max(a, lo); the gradient passes where a > lo.
Tensor clamp_min(const Tensor& a, double lo);
inline Tensor relu(const Tensor& a) { return clamp_min(a, 0.0); }

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
inline Tensor operator*(double a, const Tensor& b) { return mul(Tensor::scalar(a), b); }
inline Tensor operator+(double a, const Tensor& b) { return add(Tensor::scalar(a), b); }
inline Tensor operator-(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }

// ---------------------------------------------------------------------------
// Reductions. Reducing over every axis yields a rank-0 tensor.

enum class Reduction { sum, mean };

Tensor reduce(Reduction kind, const Tensor& t, const std::vector<std::size_t>& axes);
Tensor sum(const Tensor& t);
Tensor mean(const Tensor& t);
Tensor sum(const Tensor& t, const std::vector<std::size_t>& axes);
Tensor mean(const Tensor& t, const std::vector<std::size_t>& axes);

// ---------------------------------------------------------------------------
// Layout.

Tensor reshape(const Tensor& t, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& t, std::size_t axis, std::size_t begin, std::size_t end);

enum class PadMode { zero, replicate };

/// Pads the last two axes by `pad` on every side.
Tensor pad2d(const Tensor& t, std::size_t pad, PadMode mode);

/// out[..., i, ...] = t[..., clamp(i + offset, 0, n - 1), ...] along `axis`.
Tensor shift(const Tensor& t, std::size_t axis, long offset);

// ---------------------------------------------------------------------------
// Convolution (cross-correlation, zero padding).

/// input [C_in,H,W], kernels [C_out,C_in,kh,kw], bias [C_out] or undefined.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride = 1,
              std::size_t padding = 0);

/// input [C_in,D,H,W], kernels [C_out,C_in,kd,kh,kw], bias [C_out] or undefined.
Tensor conv3d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride = 1,
              std::size_t padding = 0);

// ---------------------------------------------------------------------------
// Normalization, pooling, resampling.

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& t, std::size_t axis);

/// Mean over window x window blocks of the last two axes of [C,H,W], no padding.
Tensor avg_pool2d(const Tensor& t, std::size_t window, std::size_t stride);

enum class Alignment {
  half_pixel,  // pixel centres: src = (j + 0.5) * n_in / n_out - 0.5, clamped
  corners,     // end points coincide: src = j * (n_in - 1) / (n_out - 1)
};

/// Linear resampling of one axis with sources clamped to the valid range.
/// Same length is the bit-exact identity.
Tensor resample_linear(const Tensor& t, std::size_t axis, std::size_t out_len,
                       Alignment alignment = Alignment::half_pixel);

/// [C,H,W] -> [C,out_h,out_w].
Tensor upsample_bilinear2d(const Tensor& t, std::size_t out_h, std::size_t out_w);

/// [C,D,H,W] -> [C,out_d,out_h,out_w].
Tensor upsample_trilinear3d(const Tensor& t, std::size_t out_d, std::size_t out_h, std::size_t out_w);

}  // namespace sdm
