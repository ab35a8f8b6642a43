#include "smoothsr/blocks.hpp"

#include <string>

namespace smoothsr {

namespace {

void require_channels(const Tensor& x, std::size_t c, const char* what) {
  if (x.rank() != 4 || x.dim(1) != c) {
    throw TensorError(std::string(what) + ": expected " + std::to_string(c) + " input channels, got " +
                      shape_str(x.shape()));
  }
}

}  // namespace

void BlockConfig::validate() const {
  if (in == 0 || out == 0 || kernel == 0 || stride == 0 || reduction == 0) {
    throw TensorError("block config: all extents must be positive");
  }
  if (out % reduction != 0 || out / reduction == 0) {
    throw TensorError("block config: reduction " + std::to_string(reduction) + " does not divide " +
                      std::to_string(out) + " channels");
  }
}

Tensor conv_layer(const Scope& s, const Tensor& x, std::size_t out, std::size_t kernel, std::size_t stride,
                  std::size_t padding, bool bias) {
  if (x.rank() != 4) throw TensorError("conv_layer expects NCHW input, got " + shape_str(x.shape()));
  const std::size_t in = x.dim(1);
  Tensor w = s.param("w", {out, in, kernel, kernel}, Init::he(in * kernel * kernel));
  Tensor y = conv2d(x, w, stride, padding);
  if (!bias) return y;
  Tensor b = s.param("b", {out}, Init::zeros());
  return add(y, reshape(b, {1, out, 1, 1}));
}

Tensor linear_layer(const Scope& s, const Tensor& x, std::size_t out) {
  if (x.rank() != 2) throw TensorError("linear_layer expects [B,in], got " + shape_str(x.shape()));
  const std::size_t in = x.dim(1);
  Tensor w = s.param("w", {in, out}, Init::he(in));
  Tensor b = s.param("b", {out}, Init::zeros());
  return add(matmul(x, w), b);
}

Tensor norm_layer(const Scope& s, const Tensor& x, NormKind kind, std::size_t groups) {
  if (kind == NormKind::none) return x;
  const std::size_t c = x.dim(1);
  Tensor gamma = s.param("gamma", {c}, Init::ones());
  Tensor beta = s.param("beta", {c}, Init::zeros());
  if (kind == NormKind::group) return group_norm(x, groups, gamma, beta);
  Tensor& rm = s.buffer("running_mean", {c}, Init::zeros());
  Tensor& rv = s.buffer("running_var", {c}, Init::ones());
  return batch_norm(x, gamma, beta, rm, rv, s.mode());
}

Tensor activation(const Scope& s, const Tensor& x, ActKind kind) {
  switch (kind) {
    case ActKind::none:
      return x;
    case ActKind::relu:
      return relu(x);
    case ActKind::leaky_relu:
      return leaky_relu(x, 0.2);
    case ActKind::prelu: {
      const std::size_t c = x.dim(1);
      Tensor slope = s.param("slope", {c}, Init::constant(0.25));
      return prelu(x, reshape(slope, {1, c, 1, 1}));
    }
  }
  return x;
}

Tensor resnet_block(const Scope& s, const Tensor& x, const BlockConfig& cfg) {
  cfg.validate();
  require_channels(x, cfg.in, "resnet_block");
  if (cfg.in != cfg.out && !cfg.project) {
    throw TensorError("resnet_block: " + std::to_string(cfg.in) + " -> " + std::to_string(cfg.out) +
                      " channels needs a projection");
  }
  const std::size_t pad = cfg.kernel / 2;
  const bool bias = cfg.norm == NormKind::none;
  Tensor h = conv_layer(s.child("conv1"), x, cfg.out, cfg.kernel, 1, pad, bias);
  h = norm_layer(s.child("norm1"), h, cfg.norm, cfg.groups);
  h = activation(s.child("act"), h, cfg.act);
  h = conv_layer(s.child("conv2"), h, cfg.out, cfg.kernel, 1, pad, bias);
  h = norm_layer(s.child("norm2"), h, cfg.norm, cfg.groups);
  Tensor skip = cfg.in == cfg.out ? x : conv_layer(s.child("proj"), x, cfg.out, 1, 1, 0);
  return add(skip, h);
}

Tensor channel_attention(const Scope& s, const Tensor& y, std::size_t reduction) {
  const std::size_t c = y.dim(1);
  if (reduction == 0 || c % reduction != 0) {
    throw TensorError("channel_attention: reduction " + std::to_string(reduction) + " does not divide " +
                      std::to_string(c) + " channels");
  }
  Tensor p = global_avg_pool(y);
  p = relu(conv_layer(s.child("squeeze"), p, c / reduction, 1, 1, 0));
  return sigmoid(conv_layer(s.child("excite"), p, c, 1, 1, 0));
}

Tensor rca_block(const Scope& s, const Tensor& x, const BlockConfig& cfg) {
  cfg.validate();
  require_channels(x, cfg.in, "rca_block");
  if (cfg.in != cfg.out) throw TensorError("rca_block is shape-preserving; in and out channels must match");
  const std::size_t pad = cfg.kernel / 2;
  Tensor f = conv_layer(s.child("conv1"), x, cfg.out, cfg.kernel, 1, pad);
  f = conv_layer(s.child("conv2"), relu(f), cfg.out, cfg.kernel, 1, pad);
  return add(x, mul(channel_attention(s.child("ca"), f, cfg.reduction), f));
}

Tensor rcabp_block(const Scope& s, const Tensor& x, const BlockConfig& cfg, RcabpTrace* trace) {
  cfg.validate();
  require_channels(x, cfg.in, "rcabp_block");
  if (cfg.in != cfg.out) throw TensorError("rcabp_block is shape-preserving; in and out channels must match");
  if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw TensorError("rcabp_block needs even spatial extents, got " + shape_str(x.shape()));
  }
  const std::size_t c = cfg.in;
  auto up = [&](const std::string& name, const Tensor& t) {
    return pixel_shuffle(conv_layer(s.child(name), t, 4 * c, 1, 1, 0), 2);
  };
  auto down = [&](const std::string& name, const Tensor& t) { return conv_layer(s.child(name), t, c, 3, 2, 1); };
  Tensor u = up("up_a", x);
  Tensor r = sub(down("down_a", u), x);
  Tensor e = up("up_b", r);
  Tensor y = down("down_b", add(u, e));
  if (trace) *trace = {u, r, e, y};
  return add(x, mul(channel_attention(s.child("ca"), y, cfg.reduction), y));
}

Tensor dense_block(const Scope& s, const Tensor& x, std::size_t n_units, const BlockConfig& cfg, bool dense) {
  if (n_units == 0) throw TensorError("dense_block needs at least one unit");
  require_channels(x, cfg.in, "dense_block");
  BlockConfig unit = cfg;
  unit.out = cfg.in;
  std::vector<Tensor> outputs{x};
  for (std::size_t i = 0; i < n_units; ++i) {
    const Scope us = s.child("unit" + std::to_string(i));
    Tensor in = dense ? (outputs.size() == 1 ? x : concat(outputs, 1)) : outputs.back();
    if (in.dim(1) != cfg.in) in = conv_layer(us.child("squeeze"), in, cfg.in, 1, 1, 0);
    Tensor y = i % 2 == 0 ? rca_block(us.child("rca"), in, unit) : rcabp_block(us.child("rcabp"), in, unit);
    outputs.push_back(y);
  }
  const std::size_t expected = cfg.in * (n_units + 1);
  Tensor all = dense ? concat(outputs, 1) : outputs.back();
  if (dense && all.dim(1) != expected) throw TensorError("dense_block: channel bookkeeping mismatch");
  return conv_layer(s.child("fuse"), all, cfg.out, 1, 1, 0);
}

Tensor upsample_block(const Scope& s, const Tensor& x, UpsampleKind kind, const BlockConfig& cfg,
                      std::size_t factor) {
  require_channels(x, cfg.in, "upsample_block");
  if (factor == 0) throw TensorError("upsample_block: factor must be positive");
  Tensor h = x;
  if (factor > 1) {
    if (kind == UpsampleKind::pixel_shuffle) {
      if (cfg.in % (factor * factor) != 0) {
        throw TensorError("upsample_block: " + std::to_string(cfg.in) + " channels not divisible by " +
                          std::to_string(factor * factor));
      }
      h = pixel_shuffle(h, factor);
    } else {
      h = upsample_nearest(h, factor);
    }
  }
  h = conv_layer(s.child("conv"), h, cfg.out, cfg.kernel, 1, cfg.kernel / 2, cfg.norm == NormKind::none);
  h = norm_layer(s.child("norm"), h, cfg.norm, cfg.groups);
  return activation(s.child("act"), h, cfg.act);
}

}  // namespace smoothsr
