#include <Eigen/Core>
#include <algorithm>

#include "smoothsr/ops.hpp"

namespace smoothsr {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

struct ConvGeometry {
  std::size_t batch, channels, height, width;
  std::size_t out_channels, kh, kw;
  std::size_t stride, pad;
  std::size_t out_h, out_w;

  std::size_t patch() const { return channels * kh * kw; }
  std::size_t plane() const { return out_h * out_w; }
  std::size_t columns() const { return batch * plane(); }
};

ConvGeometry conv_geometry(const Shape& x, const Shape& w, std::size_t stride, std::size_t pad) {
  if (x.size() != 4) throw TensorError("conv2d expects input [B,C,H,W], got " + shape_str(x));
  if (w.size() != 4) throw TensorError("conv2d expects kernel [O,C,kh,kw], got " + shape_str(w));
  if (w[1] != x[1]) {
    throw TensorError("conv2d: kernel " + shape_str(w) + " does not match input channels of " + shape_str(x));
  }
  if (stride == 0) throw TensorError("conv2d: stride must be >= 1");
  if (w[2] > x[2] + 2 * pad || w[3] > x[3] + 2 * pad) {
    throw TensorError("conv2d: kernel " + shape_str(w) + " larger than padded input " + shape_str(x) +
                      " with padding " + std::to_string(pad));
  }
  ConvGeometry g{x[0], x[1], x[2], x[3], w[0], w[2], w[3], stride, pad, 0, 0};
  g.out_h = (g.height + 2 * pad - g.kh) / stride + 1;
  g.out_w = (g.width + 2 * pad - g.kw) / stride + 1;
  return g;
}

// Grow-only per-thread buffers for the column matrices, so no call pays for
// zero-filling a fresh allocation.
enum class Scratch { cols, gcols, gy };
double* scratch(Scratch which, std::size_t n) {
  thread_local std::vector<double> buffers[3];
  auto& b = buffers[static_cast<int>(which)];
  if (b.size() < n) b.resize(n);
  return b.data();
}

// Output indices [lo, hi) whose input coordinate i*stride + k - pad lies in [0, n).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t n, std::size_t k, std::size_t stride,
                                                std::size_t pad) {
  const std::size_t lo = pad > k ? (pad - k + stride - 1) / stride : 0;
  const std::size_t hi = n + pad > k ? (n + pad - k + stride - 1) / stride : 0;
  return {std::min(lo, out), std::min(hi, out)};
}

// Column matrix [C*kh*kw, B*Ho*Wo] for the whole batch, written into `out`.
void im2col(std::span<const double> x, const ConvGeometry& g, double* out) {
  const std::size_t cols = g.columns();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t u = 0; u < g.kh; ++u) {
      const auto [ilo, ihi] = valid_range(g.out_h, g.height, u, g.stride, g.pad);
      for (std::size_t v = 0; v < g.kw; ++v) {
        const auto [jlo, jhi] = valid_range(g.out_w, g.width, v, g.stride, g.pad);
        double* row = out + ((c * g.kh + u) * g.kw + v) * cols;
        for (std::size_t b = 0; b < g.batch; ++b) {
          const double* src = x.data() + (b * g.channels + c) * g.height * g.width;
          double* dst = row + b * g.plane();
          std::fill_n(dst, ilo * g.out_w, 0.0);
          for (std::size_t i = ilo; i < ihi; ++i) {
            double* drow = dst + i * g.out_w;
            const double* srow = src + (i * g.stride + u - g.pad) * g.width;
            std::fill_n(drow, jlo, 0.0);
            if (g.stride == 1) {
              std::copy(srow + (jlo + v - g.pad), srow + (jhi + v - g.pad), drow + jlo);
            } else {
              for (std::size_t j = jlo; j < jhi; ++j) drow[j] = srow[j * g.stride + v - g.pad];
            }
            std::fill(drow + jhi, drow + g.out_w, 0.0);
          }
          std::fill(dst + ihi * g.out_w, dst + g.plane(), 0.0);
        }
      }
    }
  }
}

std::vector<double> col2im(const double* cols_data, const ConvGeometry& g) {
  const std::size_t cols = g.columns();
  std::vector<double> out(g.batch * g.channels * g.height * g.width, 0.0);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t u = 0; u < g.kh; ++u) {
      const auto [ilo, ihi] = valid_range(g.out_h, g.height, u, g.stride, g.pad);
      for (std::size_t v = 0; v < g.kw; ++v) {
        const auto [jlo, jhi] = valid_range(g.out_w, g.width, v, g.stride, g.pad);
        const double* row = cols_data + ((c * g.kh + u) * g.kw + v) * cols;
        for (std::size_t b = 0; b < g.batch; ++b) {
          double* dst = out.data() + (b * g.channels + c) * g.height * g.width;
          const double* src = row + b * g.plane();
          for (std::size_t i = ilo; i < ihi; ++i) {
            const double* srow = src + i * g.out_w;
            double* drow = dst + (i * g.stride + u - g.pad) * g.width;
            for (std::size_t j = jlo; j < jhi; ++j) drow[j * g.stride + v - g.pad] += srow[j];
          }
        }
      }
    }
  }
  return out;
}

// [B,O,Ho*Wo] <-> [O, B*Ho*Wo]
double* batch_to_channel_major(std::span<const double> y, const ConvGeometry& g) {
  double* out = scratch(Scratch::gy, y.size());
  const std::size_t plane = g.plane();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      std::copy_n(y.data() + (b * g.out_channels + o) * plane, plane, out + o * g.columns() + b * plane);
    }
  }
  return out;
}

std::vector<double> channel_to_batch_major(const double* y, std::size_t size, const ConvGeometry& g) {
  std::vector<double> out(size);
  const std::size_t plane = g.plane();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      std::copy_n(y + o * g.columns() + b * plane, plane, out.data() + (b * g.out_channels + o) * plane);
    }
  }
  return out;
}

void check_grad_out(const Tensor& gy, const ConvGeometry& g) {
  const Shape expect{g.batch, g.out_channels, g.out_h, g.out_w};
  if (gy.shape() != expect) {
    throw TensorError("conv2d adjoint: output gradient " + shape_str(gy.shape()) + " expected " + shape_str(expect));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw TensorError("matmul: inner dimensions of " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                      " do not agree");
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() = ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
  return make_result({m, n}, std::move(out), "matmul", {a, b},
                     [a, b](const Tensor&, const Tensor& g, const std::vector<bool>& needs) {
                       Tensor ga, gb;
                       if (needs[0]) ga = matmul(g, transpose(b));
                       if (needs[1]) gb = matmul(transpose(a), g);
                       return std::vector<Tensor>{ga, gb};
                     });
}

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding) {
  const auto g = conv_geometry(x.shape(), w.shape(), stride, padding);
  double* cols = scratch(Scratch::cols, g.patch() * g.columns());
  im2col(x.data(), g, cols);
  double* y = scratch(Scratch::gcols, g.out_channels * g.columns());
  MutMap(y, g.out_channels, g.columns()).noalias() =
      ConstMap(w.data().data(), g.out_channels, g.patch()) * ConstMap(cols, g.patch(), g.columns());
  const Shape xs = x.shape(), ws = w.shape();
  return make_result({g.batch, g.out_channels, g.out_h, g.out_w}, channel_to_batch_major(y, g.out_channels * g.columns(), g), "conv2d", {x, w},
                     [x, w, xs, ws, stride, padding](const Tensor&, const Tensor& gy, const std::vector<bool>& needs) {
                       Tensor gx, gw;
                       if (needs[0]) gx = conv2d_input_grad(gy, w, xs, stride, padding);
                       if (needs[1]) gw = conv2d_weight_grad(x, gy, ws, stride, padding);
                       return std::vector<Tensor>{gx, gw};
                     });
}

Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& w, const Shape& input_shape, std::size_t stride,
                         std::size_t padding) {
  const auto g = conv_geometry(input_shape, w.shape(), stride, padding);
  check_grad_out(grad_out, g);
  const auto gy = batch_to_channel_major(grad_out.data(), g);
  double* gcols = scratch(Scratch::gcols, g.patch() * g.columns());
  MutMap(gcols, g.patch(), g.columns()).noalias() =
      ConstMap(w.data().data(), g.out_channels, g.patch()).transpose() * ConstMap(gy, g.out_channels, g.columns());
  const Shape ws = w.shape();
  return make_result(input_shape, col2im(gcols, g), "conv2d_input_grad", {grad_out, w},
                     [grad_out, w, ws, stride, padding](const Tensor&, const Tensor& up,
                                                        const std::vector<bool>& needs) {
                       Tensor g_gy, g_w;
                       if (needs[0]) g_gy = conv2d(up, w, stride, padding);
                       if (needs[1]) g_w = conv2d_weight_grad(up, grad_out, ws, stride, padding);
                       return std::vector<Tensor>{g_gy, g_w};
                     });
}

Tensor conv2d_weight_grad(const Tensor& x, const Tensor& grad_out, const Shape& weight_shape, std::size_t stride,
                          std::size_t padding) {
  const auto g = conv_geometry(x.shape(), weight_shape, stride, padding);
  check_grad_out(grad_out, g);
  double* cols = scratch(Scratch::cols, g.patch() * g.columns());
  im2col(x.data(), g, cols);
  const double* gy = batch_to_channel_major(grad_out.data(), g);
  std::vector<double> gw(g.out_channels * g.patch());
  MutMap(gw.data(), g.out_channels, g.patch()).noalias() =
      ConstMap(gy, g.out_channels, g.columns()) * ConstMap(cols, g.patch(), g.columns()).transpose();
  const Shape xs = x.shape();
  return make_result(weight_shape, std::move(gw), "conv2d_weight_grad", {x, grad_out},
                     [x, grad_out, xs, stride, padding](const Tensor&, const Tensor& up,
                                                        const std::vector<bool>& needs) {
                       Tensor g_x, g_gy;
                       if (needs[0]) g_x = conv2d_input_grad(grad_out, up, xs, stride, padding);
                       if (needs[1]) g_gy = conv2d(x, up, stride, padding);
                       return std::vector<Tensor>{g_x, g_gy};
                     });
}

// ---------------------------------------------------------------------------
// Resampling

namespace {

void require_nchw(const Tensor& x, std::string_view op) {
  if (x.rank() != 4) throw TensorError(std::string(op) + " expects [B,C,H,W], got " + shape_str(x.shape()));
}

}  // namespace

Tensor pixel_shuffle(const Tensor& x, std::size_t r) {
  require_nchw(x, "pixel_shuffle");
  if (r == 0) throw TensorError("pixel_shuffle: factor must be >= 1");
  const std::size_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (Cin % (r * r) != 0) {
    throw TensorError("pixel_shuffle: " + std::to_string(Cin) + " channels not divisible by r^2 = " +
                      std::to_string(r * r));
  }
  const std::size_t C = Cin / (r * r);
  const std::size_t OH = H * r, OW = W * r;
  std::vector<double> out(x.numel());
  const auto d = x.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) {
          const double* src = d.data() + ((b * Cin + c * r * r + i * r + j) * H) * W;
          double* dst = out.data() + (b * C + c) * OH * OW;
          for (std::size_t h = 0; h < H; ++h)
            for (std::size_t w = 0; w < W; ++w) dst[(h * r + i) * OW + w * r + j] = src[h * W + w];
        }
  return make_result({B, C, OH, OW}, std::move(out), "pixel_shuffle", {x},
                     [r](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{pixel_unshuffle(g, r)};
                     });
}

Tensor pixel_unshuffle(const Tensor& x, std::size_t r) {
  require_nchw(x, "pixel_unshuffle");
  if (r == 0) throw TensorError("pixel_unshuffle: factor must be >= 1");
  const std::size_t B = x.dim(0), C = x.dim(1), OH = x.dim(2), OW = x.dim(3);
  if (OH % r != 0 || OW % r != 0) {
    throw TensorError("pixel_unshuffle: spatial extent of " + shape_str(x.shape()) + " not divisible by " +
                      std::to_string(r));
  }
  const std::size_t H = OH / r, W = OW / r, Cout = C * r * r;
  std::vector<double> out(x.numel());
  const auto d = x.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) {
          const double* src = d.data() + (b * C + c) * OH * OW;
          double* dst = out.data() + ((b * Cout + c * r * r + i * r + j) * H) * W;
          for (std::size_t h = 0; h < H; ++h)
            for (std::size_t w = 0; w < W; ++w) dst[h * W + w] = src[(h * r + i) * OW + w * r + j];
        }
  return make_result({B, Cout, H, W}, std::move(out), "pixel_unshuffle", {x},
                     [r](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{pixel_shuffle(g, r)};
                     });
}

Tensor upsample_nearest(const Tensor& x, std::size_t r) {
  require_nchw(x, "upsample_nearest");
  if (r == 0) throw TensorError("upsample_nearest: factor must be >= 1");
  if (r == 1) return x;
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t OH = H * r, OW = W * r;
  std::vector<double> out(B * C * OH * OW);
  const auto d = x.data();
  for (std::size_t p = 0; p < B * C; ++p)
    for (std::size_t h = 0; h < OH; ++h)
      for (std::size_t w = 0; w < OW; ++w) out[(p * OH + h) * OW + w] = d[(p * H + h / r) * W + w / r];
  return make_result({B, C, OH, OW}, std::move(out), "upsample_nearest", {x},
                     [r](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{block_sum(g, r)};
                     });
}

Tensor block_sum(const Tensor& x, std::size_t r) {
  require_nchw(x, "block_sum");
  if (r == 0 || x.dim(2) % r != 0 || x.dim(3) % r != 0) {
    throw TensorError("block_sum: " + shape_str(x.shape()) + " not divisible into blocks of " + std::to_string(r));
  }
  if (r == 1) return x;
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t OH = H / r, OW = W / r;
  std::vector<double> out(B * C * OH * OW, 0.0);
  const auto d = x.data();
  for (std::size_t p = 0; p < B * C; ++p)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w) out[(p * OH + h / r) * OW + w / r] += d[(p * H + h) * W + w];
  return make_result({B, C, OH, OW}, std::move(out), "block_sum", {x},
                     [r](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{upsample_nearest(g, r)};
                     });
}

Tensor global_avg_pool(const Tensor& x) {
  require_nchw(x, "global_avg_pool");
  return mean(x, {2, 3}, true);
}

}  // namespace smoothsr
