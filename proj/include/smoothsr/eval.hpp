#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "smoothsr/datagen.hpp"
#include "smoothsr/losses.hpp"
#include "smoothsr/sinkhorn.hpp"

namespace smoothsr {

/// 10 log10(1 / MSE) for images in [0,1], capped at 99 dB.
double psnr(const Image& a, const Image& b);
inline constexpr double kPsnrCap = 99.0;

/// Mean SSIM over window x window patches placed every `stride` pixels on
/// the channel-mean grayscale images. Constants C1 = 0.01^2, C2 = 0.03^2.
double ssim(const Image& a, const Image& b, std::size_t window = 8, std::size_t stride = 4);

/// Sample mean and covariance (divisor n-1) of the rows of `x`. When there
/// are no more samples than dimensions, the covariance is shrunk toward
/// (trace/d) I with weight d/(n+d) so it stays full rank.
struct GaussianFit {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  bool shrunk = false;
};
GaussianFit fit_gaussian(const Eigen::MatrixXd& x);

/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)). The trace of the
/// cross term is taken as tr((S_a^(1/2) S_b S_a^(1/2))^(1/2)) with negative
/// eigenvalues clipped at 0.
double frechet_distance(const GaussianFit& a, const GaussianFit& b);
/// Rows are samples.
double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
/// Fréchet distance between PerceptualNet embeddings of two image sets.
/// Not comparable to Inception-based FID values.
double frechet_feature_distance(const std::vector<Image>& a, const std::vector<Image>& b,
                                const PerceptualNet& embed);

/// Maps an LR batch [B,3,L,L] to an HR batch.
using SrFn = std::function<Tensor(const Tensor&)>;
/// Maps (x_c [B,3,L,L], z [B,n]) to a degraded batch.
using DegradeFn = std::function<Tensor(const Tensor&, const Tensor&)>;

/// Mean over sources of the mean pairwise RMS difference between the outputs
/// of one source. outputs[s][k] is output k of source s; needs >= 2 per source.
double pairwise_spread(const std::vector<std::vector<Image>>& outputs);

struct RobustnessReport {
  std::size_t sources = 0;
  std::size_t draws = 0;
  double generator = 0.0;          // spread over G_d variants
  double synthetic = 0.0;          // spread over synthetic_degrade variants
  double score = 0.0;              // mean of the two; lower is more robust
  double bicubic_generator = 0.0;  // same for 4x bicubic upsampling of the variants
  double bicubic_synthetic = 0.0;
  double bicubic_score = 0.0;
};

/// For every clean LR source, `draws` degraded variants from G_d with
/// independent z and `draws` synthetic variants, super-resolved by `model`.
/// Variant draws depend only on `seed`. Throws std::invalid_argument if
/// draws < 2. With an empty `degrade`, only synthetic variants are used.
RobustnessReport robustness_test(const SrFn& model, const DegradeFn& degrade, const std::vector<Image>& sources,
                                 std::size_t scale, std::size_t z_dim, std::size_t draws = 8,
                                 std::uint64_t seed = 0x0b5e);

struct SmoothnessPoint {
  double alpha = 0.0;
  double distance = 0.0;  // mean over pairs of Sinkhorn(f(x_in(alpha)), f(x_c))
};

/// Feature distance to the clean input along alpha x_c + (1-alpha) x_d.
/// `features` maps an LR batch to feature volumes. Needs >= 5 grid points
/// inside [0,1]; the endpoints use x_c and x_d directly.
std::vector<SmoothnessPoint> smoothness_test(const SrFn& features, const Tensor& x_c, const Tensor& x_d,
                                             const std::vector<double>& alphas, const SinkhornOptions& opts = {});
/// 0, 0.1, ..., 1.
std::vector<double> default_alpha_grid();

std::string smoothness_csv(const std::vector<std::pair<std::string, std::vector<SmoothnessPoint>>>& curves);
/// Line plot of the curves on a white canvas, one colour per curve.
Image plot_curves(const std::vector<std::pair<std::string, std::vector<SmoothnessPoint>>>& curves,
                  std::size_t width = 320, std::size_t height = 200);

/// Per-image and corpus-level metrics on a held-out set.
struct MetricReport {
  std::vector<std::size_t> indices;
  std::vector<double> psnr_degraded;  // SR of the synthetic degraded input vs y_c
  std::vector<double> ssim_degraded;
  std::vector<double> psnr_clean;     // SR of the clean LR input vs y_c
  std::vector<double> ssim_clean;
  std::vector<double> psnr_bicubic;   // bicubic upsampling of the degraded input
  double frechet = 0.0;               // SR outputs of degraded inputs vs y_c
  double frechet_bicubic = 0.0;
  RobustnessReport robustness;
  std::vector<SmoothnessPoint> smoothness;

  double mean_psnr_degraded() const;
  double mean_ssim_degraded() const;
  double mean_psnr_clean() const;
  double mean_psnr_bicubic() const;
  /// Per-image CSV followed by summary lines starting with '#'.
  std::string csv() const;
};

}  // namespace smoothsr
