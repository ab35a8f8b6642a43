#pragma once

#include <cstddef>

#include "smoothsr/params.hpp"

namespace smoothsr {

enum class NormKind { none, batch, group };
enum class ActKind { none, relu, leaky_relu, prelu };

struct BlockConfig {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t reduction = 4;  // channel-attention squeeze ratio
  NormKind norm = NormKind::group;
  std::size_t groups = 2;
  ActKind act = ActKind::relu;
  bool project = true;        // 1x1 projection on the skip when in != out

  /// Throws TensorError on non-positive extents or an indivisible reduction.
  void validate() const;
};

// Primitive layers. Parameter names are relative to the scope.

/// Convolution; weights "w" [out,in,k,k] and, with `bias`, "b" [out]. Convs
/// feeding a normalization go without bias, which the norm would cancel.
Tensor conv_layer(const Scope& s, const Tensor& x, std::size_t out, std::size_t kernel, std::size_t stride,
                  std::size_t padding, bool bias = true);
/// Fully connected: x [B,in] -> [B,out]; "w" [in,out], "b" [out].
Tensor linear_layer(const Scope& s, const Tensor& x, std::size_t out);
/// "gamma"/"beta" parameters; batch norm also owns "running_mean"/"running_var" buffers.
Tensor norm_layer(const Scope& s, const Tensor& x, NormKind kind, std::size_t groups);
/// prelu owns a per-channel "slope" initialised to 0.25; leaky uses 0.2.
Tensor activation(const Scope& s, const Tensor& x, ActKind kind);

/// x + F(x), F = conv-norm-act-conv-norm; 1x1 projected skip when channels differ.
Tensor resnet_block(const Scope& s, const Tensor& x, const BlockConfig& cfg);

/// Per-channel gate sigmoid(W2 relu(W1 gap(y))), shape [B,C,1,1].
Tensor channel_attention(const Scope& s, const Tensor& y, std::size_t reduction);

/// x + s * F(x) with F = conv-relu-conv and s = channel_attention(F(x)).
Tensor rca_block(const Scope& s, const Tensor& x, const BlockConfig& cfg);

/// Intermediate values of one rcabp_block evaluation.
struct RcabpTrace {
  Tensor up;        // u = up_a(x), 2x spatial
  Tensor residual;  // r = down_a(u) - x
  Tensor feedback;  // e = up_b(r)
  Tensor refined;   // y = down_b(u + e), input spatial size
};

/// Back-projection block: u = up_a(x); r = down_a(u) - x; e = up_b(r);
/// y = down_b(u + e); out = x + channel_attention(y) * y.
/// up_* are a 1x1 conv to 4C followed by pixel shuffle; down_* are stride-2
/// 3x3 convolutions. Output has the input's shape.
Tensor rcabp_block(const Scope& s, const Tensor& x, const BlockConfig& cfg, RcabpTrace* trace = nullptr);

/// Units alternate RCA and RCABP. With `dense`, unit i sees the channel
/// concatenation of the block input and every earlier unit output, squeezed
/// back to cfg.in channels by a 1x1 conv; otherwise it sees only the previous
/// output. A trailing 1x1 conv fuses everything to cfg.out channels.
Tensor dense_block(const Scope& s, const Tensor& x, std::size_t n_units, const BlockConfig& cfg,
                   bool dense = true);

enum class UpsampleKind { pixel_shuffle, nearest };

/// Spatial upsampling by `factor` then conv-norm-activation (norm and
/// activation from cfg). factor 1 gives a resolution-preserving refinement
/// block. Pixel shuffle needs in channels divisible by factor^2.
Tensor upsample_block(const Scope& s, const Tensor& x, UpsampleKind kind, const BlockConfig& cfg,
                      std::size_t factor = 2);

}  // namespace smoothsr
