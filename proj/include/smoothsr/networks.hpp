#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smoothsr/blocks.hpp"

namespace smoothsr {

/// Geometry and widths shared by every network.
struct NetSpec {
  std::size_t scale = 4;
  std::size_t lr_size = 16;
  std::size_t z_dim = 16;
  std::size_t feat_channels = 64;
  std::size_t reduction = 4;

  std::size_t gd_width = 16;
  std::size_t critic_lr_width = 8;
  std::size_t critic_hr_width = 4;
  std::size_t critic_hidden = 32;
  std::size_t critic_groups = 2;

  std::vector<std::size_t> f_widths = {32, 64, 64, 64};
  std::size_t g_width = 32;      // channels after the first upsampling stage; halves per stage
  std::size_t g_min_width = 8;
  std::size_t dense_blocks = 2;  // one after each of the first stages
  std::size_t dense_units = 2;
  std::size_t refine_blocks = 2;

  std::size_t hr_size() const { return lr_size * scale; }
  std::size_t feat_size() const { return lr_size / 4; }
  /// Number of 2x stages in g: log2(hr_size / feat_size).
  std::size_t g_upsample_stages() const;
  /// Width after upsampling stage i of g.
  std::size_t g_stage_width(std::size_t i) const;
  void validate() const;
};

struct ForwardOptions {
  NormMode mode = NormMode::train;
  /// Use detached copies of the parameters; no gradient reaches this network.
  bool frozen = false;
};

class Network {
 public:
  Network(std::string name, NetSpec spec, std::uint64_t seed);
  virtual ~Network() = default;

  const std::string& name() const { return name_; }
  const NetSpec& spec() const { return spec_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  std::string manifest() const;

 protected:
  Scope scope(const ForwardOptions& opts) { return Scope(store_, name_, opts.mode, opts.frozen); }
  /// Runs `build` once in eval mode without gradients, then seals the store.
  template <typename F>
  void build(F&& dry_run) {
    NoGradGuard ng;
    dry_run();
    store_.seal();
  }

  std::string name_;
  NetSpec spec_;
  ParamStore store_;
};

/// Encoder-decoder degradation generator: (x_c [B,3,L,L], z [B,z_dim]) -> [B,3,L,L] in [0,1].
class DegradationGenerator : public Network {
 public:
  explicit DegradationGenerator(const NetSpec& spec, std::uint64_t seed, std::string name = "gd");
  Tensor forward(const Tensor& x, const Tensor& z, const ForwardOptions& opts = {});
  /// z [B,n] -> [B,n,h,w] where channel k is the constant z[b,k].
  static Tensor expand_z(const Tensor& z, std::size_t h, std::size_t w);
};

/// Strided conv critic with group norm and a dense scoring head; [B,3,S,S] -> [B,1].
class Critic : public Network {
 public:
  Critic(const NetSpec& spec, std::uint64_t seed, std::size_t input_size, std::size_t width,
         std::string name);
  Tensor forward(const Tensor& x, const ForwardOptions& opts = {});
  std::size_t input_size() const { return input_size_; }

 private:
  std::size_t input_size_;
  std::size_t width_;
};

/// Feature extractor f: [B,3,L,L] -> [B,feat_channels,L/4,L/4].
class FeatureExtractor : public Network {
 public:
  explicit FeatureExtractor(const NetSpec& spec, std::uint64_t seed, std::string name = "f");
  Tensor forward(const Tensor& x, const ForwardOptions& opts = {});
};

/// SR module g: [B,feat_channels,L/4,L/4] -> [B,3,L*s,L*s] in [0,1].
class SRModule : public Network {
 public:
  explicit SRModule(const NetSpec& spec, std::uint64_t seed, std::string name = "g");
  Tensor forward(const Tensor& h, const ForwardOptions& opts = {});
};

/// All five networks of an experiment, seeded from one base seed.
struct NetworkSet {
  NetworkSet(const NetSpec& spec, std::uint64_t seed);
  DegradationGenerator gd;
  Critic d;
  FeatureExtractor f;
  SRModule g;
  Critic dsr;

  std::vector<Network*> all();
};

}  // namespace smoothsr
