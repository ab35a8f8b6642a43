#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smoothsr/tensor.hpp"

namespace smoothsr {

/// Planar image, channel-major, values nominally in [0,1].
struct Image {
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<double> px;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0) : channels(c), height(h), width(w), px(c * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) { return px[(c * height + y) * width + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return px[(c * height + y) * width + x]; }
  std::size_t size() const { return px.size(); }
  bool same_shape(const Image& o) const { return channels == o.channels && height == o.height && width == o.width; }
};

/// Stacks equally sized images into [B,C,H,W].
Tensor to_batch(const std::vector<Image>& images);
/// Image `b` of a [B,C,H,W] tensor.
Image from_batch(const Tensor& t, std::size_t b);

/// Geometry of one synthetic face on a square canvas (pixel units).
struct FaceParams {
  std::uint64_t seed = 0;
  std::size_t size = 64;
  double head_cx = 32, head_cy = 33, head_rx = 20, head_ry = 25, head_angle = 0;
  double eye_dx = 8, eye_y = 27, eye_rx = 3.5, eye_ry = 2.5, eye_angle = 0;
  double mouth_y = 44, mouth_w = 9, mouth_curve = 3, mouth_thickness = 1.5;
  double skin[3] = {0.8, 0.6, 0.5};
  double feature[3] = {0.15, 0.1, 0.1};
  double mouth_color[3] = {0.6, 0.2, 0.2};
  double bg_a[3] = {0.3, 0.4, 0.6};
  double bg_b[3] = {0.6, 0.7, 0.8};
  double texture = 0.05;        // amplitude of the background texture
  double texture_phase[4] = {0, 0, 0, 0};

  /// Draws every field from `seed`.
  static FaceParams sample(std::uint64_t seed, std::size_t size = 64);
  /// Throws std::invalid_argument if any primitive leaves the canvas.
  void validate() const;
};

/// Renders the face with 4x4 supersampling per pixel. Output is [3,size,size].
Image generate_face(const FaceParams& p);

/// Cubic convolution kernel with a = -0.5.
double bicubic_kernel(double x);

/// Antialiased bicubic resize by an integer factor: the kernel is stretched
/// by `s`, centred at each output pixel's footprint and applied separably
/// with half-sample symmetric boundary extension.
Image bicubic_downsample(const Image& y, std::size_t s);

/// Bicubic upsampling by an integer factor, same boundary rule.
Image bicubic_upsample(const Image& x, std::size_t s);

struct DegradationParams {
  double blur_sigma = 0.0;     // isotropic Gaussian, 0 disables
  double motion_angle = 0.0;   // radians
  double motion_length = 0.0;  // pixels, 0 disables
  double noise_sigma = 0.0;
  double quantization = 0.0;   // scale on the 8x8 DCT step table, 0 disables
  std::uint64_t seed = 0;      // noise stream

  /// Random draw in the training ranges: blur_sigma in [0.5,2.5],
  /// motion_length in [0,3], noise_sigma in [0,0.1], quantization in [0.1,1].
  static DegradationParams sample(std::uint64_t seed);
  void validate() const;
  bool is_identity() const { return blur_sigma == 0 && motion_length == 0 && noise_sigma == 0 && quantization == 0; }
};

/// Normalized 2D blur kernel (odd side) combining the Gaussian and motion
/// components. Empty parameters give the 1x1 unit kernel.
Image blur_kernel(const DegradationParams& dp);
/// 2D correlation with a single-channel kernel, half-sample symmetric edges.
Image blur(const Image& x, const Image& kernel);
/// Adds N(0, sigma^2) per pixel; no clamping.
Image add_gaussian_noise(const Image& x, double sigma, Rng& rng);
/// Per-channel 8x8 orthonormal DCT, coefficient rounding to a scaled JPEG
/// luminance step table, inverse DCT. Partial edge blocks use a shorter DCT.
Image block_quantize(const Image& x, double strength);
/// blur -> noise -> quantize -> clamp to [0,1].
Image synthetic_degrade(const Image& x, const DegradationParams& dp);

/// alpha * x_c + (1 - alpha) * x_d, evaluated as x_d + alpha * (x_c - x_d);
/// alpha strictly inside (0,1).
Image mix(const Image& x_c, const Image& x_d, double alpha);
Tensor mix(const Tensor& x_c, const Tensor& x_d, double alpha);

struct ImagePair {
  Image y_c, x_c, x_d, x_in;
  std::uint64_t face_seed = 0;
  DegradationParams degradation;
  double alpha = 0.3;
};

/// One corpus entry: clean HR face, its LR version and a synthetic
/// degradation of that LR image.
struct Sample {
  std::size_t index = 0;
  std::uint64_t face_seed = 0;
  DegradationParams degradation;
  Image y_c, x_c, x_d;
};

/// Deterministic corpus keyed by (seed, index). The paired stream feeds SR
/// training; the unpaired degraded stream renders different faces and plays
/// the part of real degraded images when training the degradation model.
class Corpus {
 public:
  Corpus(std::uint64_t seed, std::size_t hr_size = 64, std::size_t scale = 4);

  Sample sample(std::size_t index) const;
  /// Degraded LR image from a face disjoint from the paired stream.
  Image unpaired_degraded(std::size_t index) const;
  ImagePair pair(std::size_t index, double alpha) const;

  std::uint64_t seed() const { return seed_; }
  std::size_t hr_size() const { return hr_size_; }
  std::size_t lr_size() const { return hr_size_ / scale_; }
  std::size_t scale() const { return scale_; }

  /// CSV with header: index,face_seed,blur_sigma,motion_angle,
  /// motion_length,noise_sigma,quantization,noise_seed.
  std::string manifest(std::size_t count) const;
  /// FNV-1a over the 16-bit quantized pixels of the first `count` samples.
  std::uint64_t content_hash(std::size_t count) const;

 private:
  std::uint64_t seed_;
  std::size_t hr_size_, scale_;
};

/// 8-bit RGB (or gray for one channel) PNG. Values are clamped and rounded.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);
/// Tiles equally sized images into rows of `cols` with a 1-pixel gap.
Image make_grid(const std::vector<Image>& images, std::size_t cols, double gap_value = 1.0);

}  // namespace smoothsr
