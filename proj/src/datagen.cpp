#include "smoothsr/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "smoothsr/hash.hpp"
#include "smoothsr/ops.hpp"

namespace smoothsr {

namespace {

double uni(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Half-sample symmetric extension: ... c b a | a b c ... c | c b a ...
std::size_t sym_index(long j, std::size_t n) {
  const long period = 2 * static_cast<long>(n);
  long m = j % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - 1 - m);
}

struct Taps {
  std::vector<std::size_t> index;
  std::vector<double> weight;
  std::vector<std::size_t> start;  // per output, offset into index/weight
};

// Resampling weights along one axis of length n_in to n_out samples.
Taps resample_taps(std::size_t n_in, std::size_t n_out, double in_per_out, double kernel_scale) {
  Taps t;
  const double support = 2.0 * kernel_scale;
  for (std::size_t i = 0; i < n_out; ++i) {
    t.start.push_back(t.index.size());
    const double c = (static_cast<double>(i) + 0.5) * in_per_out - 0.5;
    const long lo = static_cast<long>(std::floor(c - support)) + 1;
    const long hi = static_cast<long>(std::floor(c + support));
    double total = 0.0;
    const std::size_t first = t.weight.size();
    for (long j = lo; j <= hi; ++j) {
      const double w = bicubic_kernel((c - static_cast<double>(j)) / kernel_scale);
      if (w == 0.0) continue;
      t.index.push_back(sym_index(j, n_in));
      t.weight.push_back(w);
      total += w;
    }
    for (std::size_t k = first; k < t.weight.size(); ++k) t.weight[k] /= total;
  }
  t.start.push_back(t.index.size());
  return t;
}

Image resample(const Image& x, std::size_t out_h, std::size_t out_w, double in_per_out, double kernel_scale) {
  const Taps th = resample_taps(x.height, out_h, in_per_out, kernel_scale);
  const Taps tw = resample_taps(x.width, out_w, in_per_out, kernel_scale);
  Image rows(x.channels, x.height, out_w);
  for (std::size_t c = 0; c < x.channels; ++c)
    for (std::size_t y = 0; y < x.height; ++y)
      for (std::size_t i = 0; i < out_w; ++i) {
        double acc = 0.0;
        for (std::size_t k = tw.start[i]; k < tw.start[i + 1]; ++k) acc += tw.weight[k] * x.at(c, y, tw.index[k]);
        rows.at(c, y, i) = acc;
      }
  Image out(x.channels, out_h, out_w);
  for (std::size_t c = 0; c < x.channels; ++c)
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t xx = 0; xx < out_w; ++xx) {
        double acc = 0.0;
        for (std::size_t k = th.start[i]; k < th.start[i + 1]; ++k) acc += th.weight[k] * rows.at(c, th.index[k], xx);
        out.at(c, i, xx) = acc;
      }
  return out;
}

bool inside_ellipse(double x, double y, double cx, double cy, double rx, double ry, double angle) {
  const double dx = x - cx, dy = y - cy;
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
  return (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
}

// Half extents of a rotated ellipse's bounding box.
std::pair<double, double> ellipse_extent(double rx, double ry, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {std::sqrt(rx * rx * c * c + ry * ry * s * s), std::sqrt(rx * rx * s * s + ry * ry * c * c)};
}

const int kJpegLuma[8][8] = {
    {16, 11, 10, 16, 24, 40, 51, 61},     {12, 12, 14, 19, 26, 58, 60, 55},
    {14, 13, 16, 24, 40, 57, 69, 56},     {14, 17, 22, 29, 51, 87, 80, 62},
    {18, 22, 37, 56, 68, 109, 103, 77},   {24, 35, 55, 64, 81, 104, 113, 92},
    {49, 64, 78, 87, 103, 121, 120, 101}, {72, 92, 95, 98, 112, 100, 103, 99},
};

// Orthonormal DCT-II basis, row u holds frequency u.
std::vector<double> dct_basis(std::size_t n) {
  std::vector<double> b(n * n);
  for (std::size_t u = 0; u < n; ++u) {
    const double s = u == 0 ? std::sqrt(1.0 / double(n)) : std::sqrt(2.0 / double(n));
    for (std::size_t k = 0; k < n; ++k) b[u * n + k] = s * std::cos(std::numbers::pi * (2.0 * double(k) + 1.0) * double(u) / (2.0 * double(n)));
  }
  return b;
}

}  // namespace

Tensor to_batch(const std::vector<Image>& images) {
  if (images.empty()) throw std::invalid_argument("to_batch: no images");
  const Image& f = images.front();
  std::vector<double> data;
  data.reserve(images.size() * f.size());
  for (const auto& im : images) {
    if (!im.same_shape(f)) throw std::invalid_argument("to_batch: images differ in shape");
    data.insert(data.end(), im.px.begin(), im.px.end());
  }
  return Tensor({images.size(), f.channels, f.height, f.width}, std::move(data));
}

Image from_batch(const Tensor& t, std::size_t b) {
  if (t.rank() != 4 || b >= t.dim(0)) throw std::invalid_argument("from_batch: bad tensor or index");
  Image im(t.dim(1), t.dim(2), t.dim(3));
  auto d = t.data();
  std::copy(d.begin() + static_cast<long>(b * im.size()), d.begin() + static_cast<long>((b + 1) * im.size()), im.px.begin());
  return im;
}

FaceParams FaceParams::sample(std::uint64_t seed, std::size_t size) {
  Rng rng(seed);
  FaceParams p;
  p.seed = seed;
  p.size = size;
  const double k = static_cast<double>(size) / 64.0;
  p.head_cx = k * uni(rng, 29, 35);
  p.head_cy = k * uni(rng, 30, 35);
  p.head_rx = k * uni(rng, 15, 21);
  p.head_ry = k * uni(rng, 19, 25);
  p.head_angle = uni(rng, -0.2, 0.2);
  p.eye_dx = k * uni(rng, 6, 10);
  p.eye_y = p.head_cy - k * uni(rng, 4, 9);
  p.eye_rx = k * uni(rng, 2.5, 4.5);
  p.eye_ry = k * uni(rng, 1.5, 3.5);
  p.eye_angle = uni(rng, -0.3, 0.3);
  p.mouth_y = p.head_cy + k * uni(rng, 8, 14);
  p.mouth_w = k * uni(rng, 6, 12);
  p.mouth_curve = k * uni(rng, -3, 4);
  p.mouth_thickness = k * uni(rng, 1.0, 2.2);
  for (int c = 0; c < 3; ++c) {
    p.skin[c] = uni(rng, 0.35, 0.95);
    p.feature[c] = uni(rng, 0.0, 0.3);
    p.mouth_color[c] = uni(rng, 0.2, 0.8);
    p.bg_a[c] = uni(rng, 0.0, 1.0);
    p.bg_b[c] = uni(rng, 0.0, 1.0);
  }
  p.texture = uni(rng, 0.0, 0.1);
  for (double& ph : p.texture_phase) ph = uni(rng, 0.0, 2.0 * std::numbers::pi);
  p.validate();
  return p;
}

void FaceParams::validate() const {
  const double s = static_cast<double>(size);
  auto check = [&](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("face geometry out of canvas: ") + what);
  };
  check(size >= 8, "canvas too small");
  check(head_rx > 0 && head_ry > 0 && eye_rx > 0 && eye_ry > 0 && mouth_w > 0 && mouth_thickness > 0,
        "non-positive radius");
  const auto [hx, hy] = ellipse_extent(head_rx, head_ry, head_angle);
  check(head_cx - hx >= 0 && head_cx + hx <= s && head_cy - hy >= 0 && head_cy + hy <= s, "head");
  const auto [ex, ey] = ellipse_extent(eye_rx, eye_ry, eye_angle);
  check(head_cx - eye_dx - ex >= 0 && head_cx + eye_dx + ex <= s && eye_y - ey >= 0 && eye_y + ey <= s, "eyes");
  const double m_lo = mouth_y + std::min(0.0, mouth_curve) - mouth_thickness;
  const double m_hi = mouth_y + std::max(0.0, mouth_curve) + mouth_thickness;
  check(head_cx - mouth_w >= 0 && head_cx + mouth_w <= s && m_lo >= 0 && m_hi <= s, "mouth");
  for (int c = 0; c < 3; ++c) {
    for (double v : {skin[c], feature[c], mouth_color[c], bg_a[c], bg_b[c]}) check(v >= 0 && v <= 1, "colour");
  }
  check(texture >= 0 && texture <= 0.5, "texture level");
}

Image generate_face(const FaceParams& p) {
  p.validate();
  const std::size_t n = p.size;
  const double s = static_cast<double>(n);
  const int ss = 4;
  Image img(3, n, n);
  const double ca = std::cos(p.head_angle), sa = std::sin(p.head_angle);
  // Eye centres rotate with the head.
  const double ey = p.eye_y - p.head_cy;
  const double lx = p.head_cx + ca * -p.eye_dx - sa * ey, ly = p.head_cy + sa * -p.eye_dx + ca * ey;
  const double rx = p.head_cx + ca * p.eye_dx - sa * ey, ry = p.head_cy + sa * p.eye_dx + ca * ey;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      double acc[3] = {0, 0, 0};
      for (int sy = 0; sy < ss; ++sy)
        for (int sx = 0; sx < ss; ++sx) {
          const double fx = double(x) + (sx + 0.5) / ss, fy = double(y) + (sy + 0.5) / ss;
          const double* col;
          double bg[3];
          if (inside_ellipse(fx, fy, lx, ly, p.eye_rx, p.eye_ry, p.head_angle + p.eye_angle) ||
              inside_ellipse(fx, fy, rx, ry, p.eye_rx, p.eye_ry, p.head_angle - p.eye_angle)) {
            col = p.feature;
          } else if (const double t = (fx - p.head_cx) / p.mouth_w;
                     std::abs(t) <= 1.0 &&
                     std::abs(fy - (p.mouth_y + p.mouth_curve * (1.0 - t * t))) <= p.mouth_thickness) {
            col = p.mouth_color;
          } else if (inside_ellipse(fx, fy, p.head_cx, p.head_cy, p.head_rx, p.head_ry, p.head_angle)) {
            col = p.skin;
          } else {
            const double g = fy / s;
            const double tex = p.texture * (std::sin(0.45 * fx + p.texture_phase[0]) * std::sin(0.37 * fy + p.texture_phase[1]) +
                                            std::sin(0.21 * (fx + fy) + p.texture_phase[2]) * std::cos(0.9 * fx - 0.3 * fy + p.texture_phase[3]));
            for (int c = 0; c < 3; ++c) bg[c] = (1 - g) * p.bg_a[c] + g * p.bg_b[c] + tex;
            col = bg;
          }
          for (int c = 0; c < 3; ++c) acc[c] += col[c];
        }
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = std::clamp(acc[c] / (ss * ss), 0.0, 1.0);
    }
  return img;
}

double bicubic_kernel(double x) {
  const double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

Image bicubic_downsample(const Image& y, std::size_t s) {
  if (s == 0 || y.height % s != 0 || y.width % s != 0) {
    throw std::invalid_argument("bicubic_downsample: " + std::to_string(y.height) + "x" + std::to_string(y.width) +
                                " not divisible by " + std::to_string(s));
  }
  return resample(y, y.height / s, y.width / s, double(s), double(s));
}

Image bicubic_upsample(const Image& x, std::size_t s) {
  if (s == 0) throw std::invalid_argument("bicubic_upsample: zero factor");
  return resample(x, x.height * s, x.width * s, 1.0 / double(s), 1.0);
}

DegradationParams DegradationParams::sample(std::uint64_t seed) {
  Rng rng(seed);
  DegradationParams d;
  d.blur_sigma = uni(rng, 0.5, 2.5);
  d.motion_angle = uni(rng, 0.0, std::numbers::pi);
  d.motion_length = uni(rng, 0.0, 3.0);
  d.noise_sigma = uni(rng, 0.0, 0.1);
  d.quantization = uni(rng, 0.1, 1.0);
  d.seed = splitmix64(seed);
  return d;
}

void DegradationParams::validate() const {
  for (double v : {blur_sigma, motion_length, noise_sigma, quantization}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("degradation strengths must be finite and >= 0");
  }
  if (!std::isfinite(motion_angle)) throw std::invalid_argument("motion angle must be finite");
}

Image blur_kernel(const DegradationParams& dp) {
  dp.validate();
  // Gaussian part.
  const int rg = dp.blur_sigma > 0 ? static_cast<int>(std::ceil(3.0 * dp.blur_sigma)) : 0;
  const int ng = 2 * rg + 1;
  std::vector<double> g(ng * ng, 0.0);
  if (rg == 0) {
    g[0] = 1.0;
  } else {
    for (int v = -rg; v <= rg; ++v)
      for (int u = -rg; u <= rg; ++u)
        g[(v + rg) * ng + u + rg] = std::exp(-(u * u + v * v) / (2.0 * dp.blur_sigma * dp.blur_sigma));
  }
  // Motion part: a centred segment splatted bilinearly.
  const int rm = static_cast<int>(std::ceil(dp.motion_length / 2.0));
  const int nm = 2 * rm + 1;
  std::vector<double> m(nm * nm, 0.0);
  if (dp.motion_length == 0.0) {
    m[0] = 1.0;
  } else {
    const int steps = 64;
    const double dx = std::cos(dp.motion_angle), dy = std::sin(dp.motion_angle);
    for (int i = 0; i < steps; ++i) {
      const double t = ((i + 0.5) / steps - 0.5) * dp.motion_length;
      const double px = t * dx + rm, py = t * dy + rm;
      const int x0 = static_cast<int>(std::floor(px)), y0 = static_cast<int>(std::floor(py));
      const double fx = px - x0, fy = py - y0;
      for (int b = 0; b < 2; ++b)
        for (int a = 0; a < 2; ++a) {
          const int xx = x0 + a, yy = y0 + b;
          if (xx < 0 || yy < 0 || xx >= nm || yy >= nm) continue;
          m[yy * nm + xx] += (a ? fx : 1 - fx) * (b ? fy : 1 - fy);
        }
    }
  }
  const int n = ng + nm - 1;
  Image k(1, n, n);
  for (int gy = 0; gy < ng; ++gy)
    for (int gx = 0; gx < ng; ++gx)
      for (int my = 0; my < nm; ++my)
        for (int mx = 0; mx < nm; ++mx) k.at(0, gy + my, gx + mx) += g[gy * ng + gx] * m[my * nm + mx];
  double total = 0.0;
  for (double v : k.px) total += v;
  for (double& v : k.px) v /= total;
  return k;
}

Image blur(const Image& x, const Image& kernel) {
  if (kernel.channels != 1 || kernel.height % 2 == 0 || kernel.width % 2 == 0) {
    throw std::invalid_argument("blur: kernel must be single-channel with odd sides");
  }
  const long ry = static_cast<long>(kernel.height / 2), rx = static_cast<long>(kernel.width / 2);
  Image out(x.channels, x.height, x.width);
  for (std::size_t c = 0; c < x.channels; ++c)
    for (std::size_t y = 0; y < x.height; ++y)
      for (std::size_t xx = 0; xx < x.width; ++xx) {
        double acc = 0.0;
        for (long v = -ry; v <= ry; ++v) {
          const std::size_t sy = sym_index(static_cast<long>(y) + v, x.height);
          for (long u = -rx; u <= rx; ++u) {
            acc += kernel.at(0, std::size_t(v + ry), std::size_t(u + rx)) *
                   x.at(c, sy, sym_index(static_cast<long>(xx) + u, x.width));
          }
        }
        out.at(c, y, xx) = acc;
      }
  return out;
}

Image add_gaussian_noise(const Image& x, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("noise sigma must be >= 0");
  Image out = x;
  if (sigma == 0.0) return out;
  std::normal_distribution<double> nd(0.0, sigma);
  for (double& v : out.px) v += nd(rng);
  return out;
}

Image block_quantize(const Image& x, double strength) {
  if (!(strength >= 0.0)) throw std::invalid_argument("quantization strength must be >= 0");
  Image out = x;
  if (strength == 0.0) return out;
  std::vector<std::vector<double>> bases(9);
  for (std::size_t n = 1; n <= 8; ++n) bases[n] = dct_basis(n);
  std::vector<double> blk(64), coef(64), tmp(64);
  for (std::size_t c = 0; c < x.channels; ++c)
    for (std::size_t by = 0; by < x.height; by += 8)
      for (std::size_t bx = 0; bx < x.width; bx += 8) {
        const std::size_t h = std::min<std::size_t>(8, x.height - by), w = std::min<std::size_t>(8, x.width - bx);
        const auto& bh = bases[h];
        const auto& bw = bases[w];
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j) blk[i * w + j] = x.at(c, by + i, bx + j);
        // coef = Bh * blk * Bw^T
        for (std::size_t u = 0; u < h; ++u)
          for (std::size_t j = 0; j < w; ++j) {
            double a = 0.0;
            for (std::size_t i = 0; i < h; ++i) a += bh[u * h + i] * blk[i * w + j];
            tmp[u * w + j] = a;
          }
        for (std::size_t u = 0; u < h; ++u)
          for (std::size_t v = 0; v < w; ++v) {
            double a = 0.0;
            for (std::size_t j = 0; j < w; ++j) a += tmp[u * w + j] * bw[v * w + j];
            const double step = strength * kJpegLuma[u][v] / 255.0;
            coef[u * w + v] = std::round(a / step) * step;
          }
        // blk = Bh^T * coef * Bw
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t v = 0; v < w; ++v) {
            double a = 0.0;
            for (std::size_t u = 0; u < h; ++u) a += bh[u * h + i] * coef[u * w + v];
            tmp[i * w + v] = a;
          }
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j) {
            double a = 0.0;
            for (std::size_t v = 0; v < w; ++v) a += tmp[i * w + v] * bw[v * w + j];
            out.at(c, by + i, bx + j) = a;
          }
      }
  return out;
}

Image synthetic_degrade(const Image& x, const DegradationParams& dp) {
  dp.validate();
  Image out = x;
  if (dp.blur_sigma > 0 || dp.motion_length > 0) out = blur(out, blur_kernel(dp));
  if (dp.noise_sigma > 0) {
    Rng rng(dp.seed);
    out = add_gaussian_noise(out, dp.noise_sigma, rng);
  }
  if (dp.quantization > 0) out = block_quantize(out, dp.quantization);
  for (double& v : out.px) v = std::clamp(v, 0.0, 1.0);
  return out;
}

Image mix(const Image& x_c, const Image& x_d, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("mixing coefficient must lie in (0,1)");
  if (!x_c.same_shape(x_d)) throw std::invalid_argument("mix: image shapes differ");
  Image out(x_c.channels, x_c.height, x_c.width);
  // x_d + alpha (x_c - x_d): equal inputs come back bit-exact.
  for (std::size_t i = 0; i < out.size(); ++i) out.px[i] = x_d.px[i] + alpha * (x_c.px[i] - x_d.px[i]);
  return out;
}

Tensor mix(const Tensor& x_c, const Tensor& x_d, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("mixing coefficient must lie in (0,1)");
  if (x_c.shape() != x_d.shape()) throw TensorError("mix: " + shape_str(x_c.shape()) + " vs " + shape_str(x_d.shape()));
  return add(x_d, mul(sub(x_c, x_d), alpha));
}

Corpus::Corpus(std::uint64_t seed, std::size_t hr_size, std::size_t scale) : seed_(seed), hr_size_(hr_size), scale_(scale) {
  if (scale == 0 || hr_size % scale != 0) throw std::invalid_argument("corpus: HR size must be divisible by the scale");
}

Sample Corpus::sample(std::size_t index) const {
  Sample s;
  s.index = index;
  s.face_seed = derive_seed(seed_, "face/" + std::to_string(index));
  s.degradation = DegradationParams::sample(derive_seed(seed_, "degradation/" + std::to_string(index)));
  s.y_c = generate_face(FaceParams::sample(s.face_seed, hr_size_));
  s.x_c = bicubic_downsample(s.y_c, scale_);
  s.x_d = synthetic_degrade(s.x_c, s.degradation);
  return s;
}

Image Corpus::unpaired_degraded(std::size_t index) const {
  const auto face = derive_seed(seed_, "unpaired-face/" + std::to_string(index));
  const auto dp = DegradationParams::sample(derive_seed(seed_, "unpaired-degradation/" + std::to_string(index)));
  return synthetic_degrade(bicubic_downsample(generate_face(FaceParams::sample(face, hr_size_)), scale_), dp);
}

ImagePair Corpus::pair(std::size_t index, double alpha) const {
  Sample s = sample(index);
  ImagePair p;
  p.x_in = mix(s.x_c, s.x_d, alpha);
  p.y_c = std::move(s.y_c);
  p.x_c = std::move(s.x_c);
  p.x_d = std::move(s.x_d);
  p.face_seed = s.face_seed;
  p.degradation = s.degradation;
  p.alpha = alpha;
  return p;
}

std::string Corpus::manifest(std::size_t count) const {
  std::ostringstream os;
  os.precision(17);
  os << "index,face_seed,blur_sigma,motion_angle,motion_length,noise_sigma,quantization,noise_seed\n";
  for (std::size_t i = 0; i < count; ++i) {
    const auto face = derive_seed(seed_, "face/" + std::to_string(i));
    const auto d = DegradationParams::sample(derive_seed(seed_, "degradation/" + std::to_string(i)));
    os << i << ',' << face << ',' << d.blur_sigma << ',' << d.motion_angle << ',' << d.motion_length << ','
       << d.noise_sigma << ',' << d.quantization << ',' << d.seed << '\n';
  }
  return os.str();
}

std::uint64_t Corpus::content_hash(std::size_t count) const {
  std::uint64_t h = fnv1a64("");
  std::string buf;
  for (std::size_t i = 0; i < count; ++i) {
    const Sample s = sample(i);
    for (const Image* im : {&s.y_c, &s.x_c, &s.x_d}) {
      buf.clear();
      for (double v : im->px) {
        const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
        buf.push_back(static_cast<char>(q & 0xff));
        buf.push_back(static_cast<char>(q >> 8));
      }
      h = fnv1a64(buf, h);
    }
  }
  return h;
}

Image make_grid(const std::vector<Image>& images, std::size_t cols, double gap_value) {
  if (images.empty() || cols == 0) throw std::invalid_argument("make_grid: nothing to tile");
  const Image& f = images.front();
  const std::size_t rows = (images.size() + cols - 1) / cols;
  Image g(f.channels, rows * (f.height + 1) - 1, cols * (f.width + 1) - 1, gap_value);
  for (std::size_t k = 0; k < images.size(); ++k) {
    if (!images[k].same_shape(f)) throw std::invalid_argument("make_grid: images differ in shape");
    const std::size_t oy = (k / cols) * (f.height + 1), ox = (k % cols) * (f.width + 1);
    for (std::size_t c = 0; c < f.channels; ++c)
      for (std::size_t y = 0; y < f.height; ++y)
        for (std::size_t x = 0; x < f.width; ++x) g.at(c, oy + y, ox + x) = images[k].at(c, y, x);
  }
  return g;
}

}  // namespace smoothsr
