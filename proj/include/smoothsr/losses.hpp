#pragma once

#include <functional>
#include <vector>

#include "smoothsr/sinkhorn.hpp"
#include "smoothsr/tensor.hpp"

namespace smoothsr {

struct LossWeights {
  double wgan = 0.05;
  double mse = 1.0;
  double pixel = 1.0;       // L1 on HR pixels
  double perceptual = 0.5;  // L1 on frozen-network features
  double adv = 0.05;
  double clean = 0.3;       // Sinkhorn(h_c, h_in)
  double degraded = 0.7;    // Sinkhorn(h_d, h_in)
  double gp = 10.0;

  /// Throws std::invalid_argument on a negative or non-finite weight.
  void validate() const;
};

/// A critic as a function of its input batch, returning [B,1] scores.
using CriticFn = std::function<Tensor(const Tensor&)>;

/// Frozen convolutional feature stack standing in for a pretrained
/// perceptual network. Weights are fixed by the seed and never trained;
/// gradients flow through it to the input only.
class PerceptualNet {
 public:
  explicit PerceptualNet(std::uint64_t seed = 0x5eed);
  /// [B,3,H,W] -> [B,32,H/4,W/4].
  Tensor features(const Tensor& x) const;
  /// Global average of the features, [B,32]; the embedding for the
  /// Fréchet distance.
  Tensor embed(const Tensor& x) const;
  std::size_t embed_dim() const { return 32; }
  const std::vector<Tensor>& weights() const { return weights_; }

 private:
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
  std::vector<std::size_t> strides_;
};

struct CriticLoss {
  Tensor total;
  double fake_score = 0.0;  // mean D(fake)
  double real_score = 0.0;  // mean D(real)
  double penalty = 0.0;     // mean (|grad| - 1)^2, unweighted
};

/// mean[(|grad_x D(x_hat)| - 1)^2] with x_hat = u*real + (1-u)*fake and
/// u ~ U(0,1) per sample, drawn from `rng` on every call.
Tensor gradient_penalty(const CriticFn& critic, const Tensor& real, const Tensor& fake, Rng& rng);

/// mean D(fake) - mean D(real) + lambda_gp * gradient_penalty. `fake` is
/// detached here, so no gradient reaches its generator.
CriticLoss critic_loss_wgan_gp(const CriticFn& critic, const Tensor& real, const Tensor& fake, double lambda_gp,
                               Rng& rng);

struct DegradationGeneratorLoss {
  Tensor total;
  double adversarial = 0.0;  // -mean D(x_gen)
  double mse = 0.0;          // mean (x_c - x_gen)^2
};

/// wgan * (-mean D(x_gen)) + mse * mean (x_c - x_gen)^2.
DegradationGeneratorLoss generator_loss_degradation(const CriticFn& critic, const Tensor& x_c,
                                                    const Tensor& x_gen, const LossWeights& w);

struct SrLoss {
  Tensor total;
  double pixel = 0.0;       // mean |y - y_hat|
  double perceptual = 0.0;  // mean |phi(y) - phi(y_hat)|
  double adversarial = 0.0; // -mean D_sr(y_hat)
};

/// pixel * L1 + perceptual * L1(phi) + adv * (-mean D_sr(y_hat)). Terms with
/// zero weight are not evaluated.
SrLoss sr_loss(const Tensor& y_hat, const Tensor& y, const CriticFn& critic, const PerceptualNet& phi,
               const LossWeights& w);

/// WGAN-GP critic loss at HR resolution.
inline CriticLoss sr_critic_loss(const CriticFn& critic, const Tensor& y, const Tensor& y_hat, double lambda_gp,
                                 Rng& rng) {
  return critic_loss_wgan_gp(critic, y, y_hat, lambda_gp, rng);
}

struct RobustLoss {
  Tensor total;
  double clean = 0.0;     // Sinkhorn(h_c, h_in)
  double degraded = 0.0;  // Sinkhorn(h_d, h_in)
};

/// clean * Sinkhorn(h_c, h_in) + degraded * Sinkhorn(h_d, h_in).
RobustLoss robust_loss(const Tensor& h_c, const Tensor& h_d, const Tensor& h_in, const LossWeights& w,
                       const SinkhornOptions& opts = {}, SinkhornStats* stats = nullptr);

}  // namespace smoothsr
