#include "smoothsr/networks.hpp"

#include <sstream>

#include "smoothsr/hash.hpp"

namespace smoothsr {

namespace {

bool is_pow2(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

void require_image(const Tensor& x, std::size_t channels, std::size_t size, const std::string& who) {
  if (x.rank() != 4 || x.dim(1) != channels || x.dim(2) != size || x.dim(3) != size) {
    throw TensorError(who + ": expected [B," + std::to_string(channels) + "," + std::to_string(size) + "," +
                      std::to_string(size) + "], got " + shape_str(x.shape()));
  }
}

}  // namespace

std::size_t NetSpec::g_upsample_stages() const {
  std::size_t stages = 0;
  for (std::size_t s = feat_size(); s < hr_size(); s *= 2) ++stages;
  return stages;
}

std::size_t NetSpec::g_stage_width(std::size_t i) const {
  std::size_t w = g_width;
  for (std::size_t k = 0; k < i; ++k) w /= 2;
  return std::max(w, g_min_width);
}

void NetSpec::validate() const {
  if (scale == 0 || lr_size == 0 || z_dim == 0 || feat_channels == 0) throw TensorError("net spec: zero extent");
  if (lr_size % 16 != 0) throw TensorError("net spec: LR size must be divisible by 16");
  if (!is_pow2(scale)) throw TensorError("net spec: scale must be a power of two");
  if (f_widths.size() != 4) throw TensorError("net spec: f needs four stage widths");
  if (f_widths[3] % 4 != 0 || f_widths[2] % 4 != 0) {
    throw TensorError("net spec: f widths feeding pixel shuffle must be divisible by 4");
  }
  if (dense_blocks > g_upsample_stages()) throw TensorError("net spec: more dense blocks than g stages");
  if (feat_channels % 4 != 0) throw TensorError("net spec: feature channels must be divisible by 4");
  for (std::size_t i = 0; i + 1 < g_upsample_stages(); ++i) {
    if (g_stage_width(i) % 4 != 0) throw TensorError("net spec: g widths must be divisible by 4");
  }
  if (g_stage_width(0) % reduction != 0) throw TensorError("net spec: reduction must divide g widths");
}

Network::Network(std::string name, NetSpec spec, std::uint64_t seed)
    : name_(std::move(name)), spec_(std::move(spec)) {
  spec_.validate();
  store_.set_seed(derive_seed(seed, name_));
}

std::string Network::manifest() const { return "# " + name_ + "\n" + store_.manifest(); }

// ---------------------------------------------------------------------------

DegradationGenerator::DegradationGenerator(const NetSpec& spec, std::uint64_t seed, std::string name)
    : Network(std::move(name), spec, seed) {
  const std::size_t l = spec_.lr_size;
  build([&] { forward(Tensor::zeros({1, 3, l, l}), Tensor::zeros({1, spec_.z_dim}), {NormMode::eval, false}); });
}

Tensor DegradationGenerator::expand_z(const Tensor& z, std::size_t h, std::size_t w) {
  if (z.rank() != 2) throw TensorError("expand_z expects [B,n], got " + shape_str(z.shape()));
  return broadcast_to(reshape(z, {z.dim(0), z.dim(1), 1, 1}), {z.dim(0), z.dim(1), h, w});
}

Tensor DegradationGenerator::forward(const Tensor& x, const Tensor& z, const ForwardOptions& opts) {
  const std::size_t l = spec_.lr_size;
  require_image(x, 3, l, name_);
  if (z.rank() != 2 || z.dim(0) != x.dim(0) || z.dim(1) != spec_.z_dim) {
    throw TensorError(name_ + ": z must be [" + std::to_string(x.dim(0)) + "," + std::to_string(spec_.z_dim) +
                      "], got " + shape_str(z.shape()));
  }
  const Scope s = scope(opts);
  const std::size_t w = spec_.gd_width;
  const std::size_t widths[4] = {w, 2 * w, 2 * w, 2 * w};
  auto rb = [&](const std::string& name, const Tensor& t) {
    BlockConfig cfg;
    cfg.in = cfg.out = t.dim(1);
    cfg.reduction = 1;
    return resnet_block(s.child(name), t, cfg);
  };

  Tensor h = conv_layer(s.child("head"), concat({x, expand_z(z, l, l)}, 1), widths[0], 3, 1, 1);
  std::vector<Tensor> skips{h};
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string n = "down" + std::to_string(i + 1);
    h = rb(n + ".res", h);
    h = relu(conv_layer(s.child(n + ".conv"), h, widths[i + 1], 3, 2, 1));
    if (i < 2) skips.push_back(h);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string n = "up" + std::to_string(i + 1);
    const Tensor& skip = skips[2 - i];
    h = rb(n + ".res", h);
    h = relu(conv_layer(s.child(n + ".conv"), upsample_nearest(h, 2), skip.dim(1), 3, 1, 1));
    h = add(h, skip);
  }
  return sigmoid(conv_layer(s.child("tail"), h, 3, 3, 1, 1));
}

// ---------------------------------------------------------------------------

Critic::Critic(const NetSpec& spec, std::uint64_t seed, std::size_t input_size, std::size_t width,
               std::string name)
    : Network(std::move(name), spec, seed), input_size_(input_size), width_(width) {
  if (input_size_ < 8 || !is_pow2(input_size_)) throw TensorError("critic input size must be a power of two >= 8");
  build([&] { forward(Tensor::zeros({1, 3, input_size_, input_size_}), {NormMode::eval, false}); });
}

Tensor Critic::forward(const Tensor& x, const ForwardOptions& opts) {
  require_image(x, 3, input_size_, name_);
  const Scope s = scope(opts);
  const std::size_t groups = spec_.critic_groups;
  std::size_t c = width_;
  // Strided stem: nothing runs at full input resolution.
  Tensor h = leaky_relu(conv_layer(s.child("conv0"), x, c, 4, 2, 1), 0.2);
  std::size_t stage = 0;
  for (std::size_t size = input_size_ / 2; size > 4; size /= 2, ++stage) {
    const Scope st = s.child("stage" + std::to_string(stage + 1));
    h = conv_layer(st.child("down"), h, c, 3, 2, 1, false);
    h = leaky_relu(norm_layer(st.child("norm_a"), h, NormKind::group, groups), 0.2);
    h = conv_layer(st.child("widen"), h, 2 * c, 3, 1, 1, false);
    h = leaky_relu(norm_layer(st.child("norm_b"), h, NormKind::group, groups), 0.2);
    c *= 2;
  }
  h = reshape(h, {h.dim(0), h.numel() / h.dim(0)});
  h = leaky_relu(linear_layer(s.child("fc1"), h, spec_.critic_hidden), 0.2);
  return linear_layer(s.child("fc2"), h, 1);
}

// ---------------------------------------------------------------------------

FeatureExtractor::FeatureExtractor(const NetSpec& spec, std::uint64_t seed, std::string name)
    : Network(std::move(name), spec, seed) {
  const std::size_t l = spec_.lr_size;
  build([&] { forward(Tensor::zeros({1, 3, l, l}), {NormMode::eval, false}); });
}

Tensor FeatureExtractor::forward(const Tensor& x, const ForwardOptions& opts) {
  if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) % 16 != 0 || x.dim(3) % 16 != 0) {
    throw TensorError(name_ + ": input must be [B,3,H,W] with H,W divisible by 16, got " + shape_str(x.shape()));
  }
  require_image(x, 3, spec_.lr_size, name_);
  const Scope s = scope(opts);
  const auto& w = spec_.f_widths;
  std::vector<Tensor> stages;
  Tensor h = x;
  for (std::size_t i = 0; i < 4; ++i) {
    const Scope st = s.child("down" + std::to_string(i + 1));
    h = conv_layer(st.child("conv"), h, w[i], 3, 2, 1);
    BlockConfig cfg;
    cfg.in = cfg.out = w[i];
    cfg.reduction = spec_.reduction;
    h = rca_block(st.child("rca"), h, cfg);
    stages.push_back(h);
  }
  // Two up stages, each joined by a long skip from the down stage at the same
  // resolution.
  for (std::size_t i = 0; i < 2; ++i) {
    const Tensor& skip = stages[2 - i];
    BlockConfig cfg;
    cfg.in = h.dim(1);
    cfg.out = skip.dim(1);
    cfg.norm = NormKind::group;
    cfg.groups = 2;
    cfg.act = ActKind::prelu;
    h = upsample_block(s.child("up" + std::to_string(i + 1)), h, UpsampleKind::pixel_shuffle, cfg);
    h = add(h, skip);
  }
  return conv_layer(s.child("out"), h, spec_.feat_channels, 3, 1, 1);
}

// ---------------------------------------------------------------------------

SRModule::SRModule(const NetSpec& spec, std::uint64_t seed, std::string name) : Network(std::move(name), spec, seed) {
  const std::size_t fs = spec_.feat_size();
  build([&] { forward(Tensor::zeros({1, spec_.feat_channels, fs, fs}), {NormMode::eval, false}); });
}

Tensor SRModule::forward(const Tensor& h, const ForwardOptions& opts) {
  require_image(h, spec_.feat_channels, spec_.feat_size(), name_);
  const Scope s = scope(opts);
  auto up_cfg = [&](std::size_t in, std::size_t out) {
    BlockConfig cfg;
    cfg.in = in;
    cfg.out = out;
    cfg.norm = NormKind::batch;
    cfg.act = ActKind::prelu;
    return cfg;
  };
  Tensor y = h;
  std::size_t refines_left = spec_.refine_blocks;
  for (std::size_t i = 0; i < spec_.g_upsample_stages(); ++i) {
    const std::string n = std::to_string(i + 1);
    const std::size_t width = spec_.g_stage_width(i);
    y = upsample_block(s.child("up" + n), y, UpsampleKind::pixel_shuffle, up_cfg(y.dim(1), width));
    if (i < spec_.dense_blocks) {
      BlockConfig cfg;
      cfg.in = cfg.out = width;
      cfg.reduction = spec_.reduction;
      y = dense_block(s.child("dense" + n), y, spec_.dense_units, cfg);
    }
    if (refines_left > 0) {
      y = upsample_block(s.child("refine" + n), y, UpsampleKind::pixel_shuffle, up_cfg(width, width), 1);
      --refines_left;
    }
  }
  return sigmoid(conv_layer(s.child("out"), y, 3, 3, 1, 1));
}

// ---------------------------------------------------------------------------

NetworkSet::NetworkSet(const NetSpec& spec, std::uint64_t seed)
    : gd(spec, seed),
      d(spec, seed, spec.lr_size, spec.critic_lr_width, "d"),
      f(spec, seed),
      g(spec, seed),
      dsr(spec, seed, spec.hr_size(), spec.critic_hr_width, "dsr") {}

std::vector<Network*> NetworkSet::all() { return {&gd, &d, &f, &g, &dsr}; }

}  // namespace smoothsr
