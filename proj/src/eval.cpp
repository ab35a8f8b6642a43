#include "smoothsr/eval.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "smoothsr/hash.hpp"

namespace smoothsr {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b) || a.size() == 0) throw std::invalid_argument(std::string(what) + ": image shapes differ or are empty");
}

Image gray(const Image& x) {
  Image g(1, x.height, x.width);
  for (std::size_t y = 0; y < x.height; ++y)
    for (std::size_t i = 0; i < x.width; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < x.channels; ++c) s += x.at(c, y, i);
      g.at(0, y, i) = s / double(x.channels);
    }
  return g;
}

Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double rms_diff(const Image& a, const Image& b) {
  require_same(a, b, "pairwise_spread");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.px[i] - b.px[i]) * (a.px[i] - b.px[i]);
  return std::sqrt(s / double(a.size()));
}

std::vector<Image> split(const Tensor& t) {
  std::vector<Image> out;
  for (std::size_t b = 0; b < t.dim(0); ++b) out.push_back(from_batch(t, b));
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same(a, b, "psnr");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mse += (a.px[i] - b.px[i]) * (a.px[i] - b.px[i]);
  mse /= double(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b, std::size_t window, std::size_t stride) {
  require_same(a, b, "ssim");
  if (window == 0 || stride == 0) throw std::invalid_argument("ssim: zero window or stride");
  if (a.height < window || a.width < window) throw std::invalid_argument("ssim: image smaller than the window");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const Image ga = gray(a), gb = gray(b);
  const double n = double(window * window);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t y0 = 0; y0 + window <= a.height; y0 += stride) {
    for (std::size_t x0 = 0; x0 + window <= a.width; x0 += stride) {
      double ma = 0, mb = 0;
      for (std::size_t y = y0; y < y0 + window; ++y)
        for (std::size_t x = x0; x < x0 + window; ++x) {
          ma += ga.at(0, y, x);
          mb += gb.at(0, y, x);
        }
      ma /= n;
      mb /= n;
      double va = 0, vb = 0, cov = 0;
      for (std::size_t y = y0; y < y0 + window; ++y)
        for (std::size_t x = x0; x < x0 + window; ++x) {
          const double da = ga.at(0, y, x) - ma, db = gb.at(0, y, x) - mb;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      // Sample (n-1) window statistics.
      va /= n - 1;
      vb /= n - 1;
      cov /= n - 1;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / double(count);
}

GaussianFit fit_gaussian(const Eigen::MatrixXd& x) {
  const auto n = x.rows(), d = x.cols();
  if (n < 2 || d == 0) throw std::invalid_argument("fit_gaussian: need at least two samples");
  if (!x.allFinite()) throw std::invalid_argument("fit_gaussian: non-finite embedding");
  GaussianFit g;
  g.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centred = x.rowwise() - g.mean.transpose();
  g.cov = centred.transpose() * centred / double(n - 1);
  if (n <= d) {
    const double lambda = double(d) / double(n + d);
    const double mu = g.cov.trace() / double(d);
    g.cov = (1.0 - lambda) * g.cov + lambda * mu * Eigen::MatrixXd::Identity(d, d);
    g.shrunk = true;
  }
  return g;
}

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
  if (a.mean.size() != b.mean.size()) throw std::invalid_argument("frechet_distance: dimension mismatch");
  const Eigen::MatrixXd sa = sym_sqrt(a.cov);
  Eigen::MatrixXd m = sa * b.cov * sa;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
  return std::max(0.0, d);
}

double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return frechet_distance(fit_gaussian(a), fit_gaussian(b));
}

double frechet_feature_distance(const std::vector<Image>& a, const std::vector<Image>& b, const PerceptualNet& embed) {
  auto embed_all = [&](const std::vector<Image>& set) {
    if (set.empty()) throw std::invalid_argument("frechet_feature_distance: empty set");
    const Tensor e = embed.embed(to_batch(set));
    Eigen::MatrixXd m(e.dim(0), e.dim(1));
    const auto v = e.data();
    for (std::size_t i = 0; i < e.dim(0); ++i)
      for (std::size_t j = 0; j < e.dim(1); ++j) m(i, j) = v[i * e.dim(1) + j];
    return m;
  };
  NoGradGuard ng;
  return frechet_distance(embed_all(a), embed_all(b));
}

double pairwise_spread(const std::vector<std::vector<Image>>& outputs) {
  if (outputs.empty()) throw std::invalid_argument("pairwise_spread: no sources");
  double total = 0.0;
  for (const auto& outs : outputs) {
    if (outs.size() < 2) throw std::invalid_argument("pairwise_spread: need at least two outputs per source");
    double s = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < outs.size(); ++i)
      for (std::size_t j = i + 1; j < outs.size(); ++j, ++pairs) s += rms_diff(outs[i], outs[j]);
    total += s / double(pairs);
  }
  return total / double(outputs.size());
}

RobustnessReport robustness_test(const SrFn& model, const DegradeFn& degrade, const std::vector<Image>& sources,
                                 std::size_t scale, std::size_t z_dim, std::size_t draws, std::uint64_t seed) {
  if (draws < 2) throw std::invalid_argument("robustness_test: need at least two degradation draws");
  if (sources.empty()) throw std::invalid_argument("robustness_test: no sources");
  NoGradGuard ng;
  RobustnessReport r;
  r.sources = sources.size();
  r.draws = draws;

  std::vector<std::vector<Image>> gen_sr, gen_bic, syn_sr, syn_bic;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const std::vector<Image> repeated(draws, sources[s]);
    const Tensor x_c = to_batch(repeated);
    if (degrade) {
      Rng rng(derive_seed(seed, "robustness-z/" + std::to_string(s)));
      const Tensor x_d = degrade(x_c, Tensor::randn({draws, z_dim}, rng));
      gen_sr.push_back(split(model(x_d)));
      std::vector<Image> bic;
      for (const auto& img : split(x_d)) bic.push_back(bicubic_upsample(img, scale));
      gen_bic.push_back(std::move(bic));
    }
    std::vector<Image> variants;
    for (std::size_t k = 0; k < draws; ++k) {
      const auto dp = DegradationParams::sample(derive_seed(seed, "robustness-syn/" + std::to_string(s) + "/" + std::to_string(k)));
      variants.push_back(synthetic_degrade(sources[s], dp));
    }
    syn_sr.push_back(split(model(to_batch(variants))));
    std::vector<Image> bic;
    for (const auto& img : variants) bic.push_back(bicubic_upsample(img, scale));
    syn_bic.push_back(std::move(bic));
  }
  r.synthetic = pairwise_spread(syn_sr);
  r.bicubic_synthetic = pairwise_spread(syn_bic);
  if (degrade) {
    r.generator = pairwise_spread(gen_sr);
    r.bicubic_generator = pairwise_spread(gen_bic);
    r.score = 0.5 * (r.generator + r.synthetic);
    r.bicubic_score = 0.5 * (r.bicubic_generator + r.bicubic_synthetic);
  } else {
    r.score = r.synthetic;
    r.bicubic_score = r.bicubic_synthetic;
  }
  return r;
}

std::vector<double> default_alpha_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
  return g;
}

std::vector<SmoothnessPoint> smoothness_test(const SrFn& features, const Tensor& x_c, const Tensor& x_d,
                                             const std::vector<double>& alphas, const SinkhornOptions& opts) {
  if (alphas.size() < 5) throw std::invalid_argument("smoothness_test: need at least 5 grid points");
  for (double a : alphas)
    if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("smoothness_test: alpha outside [0,1]");
  NoGradGuard ng;
  const Tensor h_c = features(x_c);
  std::vector<SmoothnessPoint> out;
  for (double a : alphas) {
    Tensor x_in = a == 1.0 ? x_c : a == 0.0 ? x_d : mix(x_c, x_d, a);
    out.push_back({a, sinkhorn_loss(features(x_in), h_c, opts).item()});
  }
  return out;
}

std::string smoothness_csv(const std::vector<std::pair<std::string, std::vector<SmoothnessPoint>>>& curves) {
  std::string out = "curve,alpha,distance\n";
  char buf[128];
  for (const auto& [name, pts] : curves)
    for (const auto& p : pts) {
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", p.alpha, p.distance);
      out += name + buf;
    }
  return out;
}

Image plot_curves(const std::vector<std::pair<std::string, std::vector<SmoothnessPoint>>>& curves, std::size_t width,
                  std::size_t height) {
  static const double palette[][3] = {{0.85, 0.1, 0.1}, {0.1, 0.3, 0.85}, {0.1, 0.6, 0.2}, {0.6, 0.2, 0.7}};
  Image img(3, height, width, 1.0);
  const std::size_t margin = 10;
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const auto& [_, pts] : curves)
    for (const auto& p : pts) {
      if (!std::isfinite(p.distance)) continue;
      lo = any ? std::min(lo, p.distance) : p.distance;
      hi = any ? std::max(hi, p.distance) : p.distance;
      any = true;
    }
  if (!any) return img;
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const double w = double(width - 2 * margin - 1), h = double(height - 2 * margin - 1);
  auto put = [&](double px, double py, const double* col) {
    const long xi = std::lround(px), yi = std::lround(py);
    if (xi < 0 || yi < 0 || xi >= long(width) || yi >= long(height)) return;
    for (std::size_t c = 0; c < 3; ++c) img.at(c, std::size_t(yi), std::size_t(xi)) = col[c];
  };
  const double axis[3] = {0.0, 0.0, 0.0};
  for (std::size_t x = margin; x < width - margin; ++x) put(double(x), double(height - margin - 1), axis);
  for (std::size_t y = margin; y < height - margin; ++y) put(double(margin), double(y), axis);
  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const double* col = palette[ci % 4];
    const auto& pts = curves[ci].second;
    auto to_px = [&](const SmoothnessPoint& p) {
      return std::pair{margin + p.alpha * w, margin + (1.0 - (p.distance - lo) / (hi - lo)) * h};
    };
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      const auto [x0, y0] = to_px(pts[i]);
      const auto [x1, y1] = to_px(pts[i + 1]);
      const int steps = int(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) + 1;
      for (int s = 0; s <= steps; ++s) {
        const double t = double(s) / steps;
        put(x0 + t * (x1 - x0), y0 + t * (y1 - y0), col);
      }
    }
    for (const auto& p : pts) {
      const auto [x, y] = to_px(p);
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) put(x + dx, y + dy, col);
    }
  }
  return img;
}

namespace {
double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}
}  // namespace

double MetricReport::mean_psnr_degraded() const { return mean_of(psnr_degraded); }
double MetricReport::mean_ssim_degraded() const { return mean_of(ssim_degraded); }
double MetricReport::mean_psnr_clean() const { return mean_of(psnr_clean); }
double MetricReport::mean_psnr_bicubic() const { return mean_of(psnr_bicubic); }

std::string MetricReport::csv() const {
  std::string out = "index,psnr_degraded,ssim_degraded,psnr_clean,ssim_clean,psnr_bicubic\n";
  char buf[256];
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", indices[i], psnr_degraded[i], ssim_degraded[i],
                  psnr_clean[i], ssim_clean[i], psnr_bicubic[i]);
    out += buf;
  }
  out += "# Frechet distances use the frozen PerceptualNet embedding; they are not comparable to Inception FID.\n";
  std::snprintf(buf, sizeof buf, "# mean_psnr_degraded,%.17g\n# mean_ssim_degraded,%.17g\n# mean_psnr_clean,%.17g\n",
                mean_psnr_degraded(), mean_ssim_degraded(), mean_psnr_clean());
  out += buf;
  std::snprintf(buf, sizeof buf, "# mean_psnr_bicubic,%.17g\n# frechet,%.17g\n# frechet_bicubic,%.17g\n",
                mean_psnr_bicubic(), frechet, frechet_bicubic);
  out += buf;
  std::snprintf(buf, sizeof buf, "# robustness,%.17g\n# robustness_bicubic,%.17g\n", robustness.score,
                robustness.bicubic_score);
  out += buf;
  for (const auto& p : smoothness) {
    std::snprintf(buf, sizeof buf, "# smoothness,%.17g,%.17g\n", p.alpha, p.distance);
    out += buf;
  }
  return out;
}

}  // namespace smoothsr
