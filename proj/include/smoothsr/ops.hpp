#pragma once

#include <cstddef>
#include <vector>

#include "smoothsr/tensor.hpp"

namespace smoothsr {

/// Broadcast result of two shapes under trailing-dimension (numpy) rules.
/// Throws TensorError naming both shapes when they are incompatible.
Shape broadcast_shapes(const Shape& a, const Shape& b);

// ---------------------------------------------------------------------------
// Elementwise

enum class ElementwiseKind { add, sub, mul, div, pow, exp, log, abs, max };

/// Dispatcher over the elementwise family. Unary kinds ignore `b`; `pow`
/// takes its exponent from a one-element `b`.
Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor& b = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double s);
Tensor mul(const Tensor& a, double s);
Tensor pow(const Tensor& a, double exponent);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sqrt(const Tensor& a);
/// 1/x, with 0 mapped to 0 (used for subgradients at zero norm).
Tensor safe_reciprocal(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
/// max(x,0) + slope * min(x,0); `slope` broadcasts against `x`.
Tensor prelu(const Tensor& x, const Tensor& slope);
Tensor leaky_relu(const Tensor& x, double slope);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator+(const Tensor& a, double s) { return add(a, s); }
inline Tensor operator+(double s, const Tensor& a) { return add(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add(a, -s); }
inline Tensor operator-(double s, const Tensor& a) { return add(neg(a), s); }
inline Tensor operator*(const Tensor& a, double s) { return mul(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul(a, s); }
inline Tensor operator/(const Tensor& a, double s) { return mul(a, 1.0 / s); }

// ---------------------------------------------------------------------------
// Reductions and broadcasting

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, const std::vector<std::size_t>& axes, bool keepdim);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, const std::vector<std::size_t>& axes, bool keepdim);
/// Sums `a` down to `shape`, the adjoint of broadcasting `shape` up to `a`.
Tensor sum_to(const Tensor& a, const Shape& shape);
Tensor broadcast_to(const Tensor& a, const Shape& shape);
/// log(sum(exp(a))) over the last axis, kept as an extent-1 axis. Its backward
/// rule is numeric only, so it cannot sit under a second-order pass.
Tensor logsumexp(const Tensor& a);

// ---------------------------------------------------------------------------
// Layout

Tensor reshape(const Tensor& a, const Shape& shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& dims);
Tensor transpose(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
/// Zero padding along one axis; the adjoint of `narrow`.
Tensor pad_axis(const Tensor& a, std::size_t axis, std::size_t before, std::size_t after);

// ---------------------------------------------------------------------------
// Linear algebra and image ops (NCHW)

Tensor matmul(const Tensor& a, const Tensor& b);

/// Cross-correlation (no kernel flip), the usual deep-learning convention:
/// y[b,o,i,j] = sum_{c,u,v} x[b,c,i*s+u-p,j*s+v-p] * w[o,c,u,v].
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding);
/// Adjoint of conv2d with respect to its input (transposed convolution).
Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& w, const Shape& input_shape,
                         std::size_t stride, std::size_t padding);
/// Adjoint of conv2d with respect to its kernel.
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& grad_out, const Shape& weight_shape,
                          std::size_t stride, std::size_t padding);

/// Depth-to-space: [B, C*r*r, H, W] -> [B, C, r*H, r*W],
/// out[b,c,h*r+i,w*r+j] = in[b, c*r*r + i*r + j, h, w].
Tensor pixel_shuffle(const Tensor& x, std::size_t r);
Tensor pixel_unshuffle(const Tensor& x, std::size_t r);
Tensor upsample_nearest(const Tensor& x, std::size_t r);
/// Sum over non-overlapping r x r blocks; the adjoint of upsample_nearest.
Tensor block_sum(const Tensor& x, std::size_t r);
Tensor global_avg_pool(const Tensor& x);

// ---------------------------------------------------------------------------
// Normalization

inline constexpr double kNormEps = 1e-5;

enum class NormMode { train, eval };

Tensor group_norm(const Tensor& x, std::size_t groups, const Tensor& gamma, const Tensor& beta,
                  double eps = kNormEps);

/// Batch normalization over all axes but 1. In train mode uses batch
/// statistics and updates the running buffers in place; in eval mode uses the
/// running buffers.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, NormMode mode, double momentum = 0.1,
                  double eps = kNormEps);

}  // namespace smoothsr
