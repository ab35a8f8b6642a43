#include "smoothsr/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "smoothsr/hash.hpp"
#include "smoothsr/ops.hpp"

namespace smoothsr {

void LossWeights::validate() const {
  for (double v : {wgan, mse, pixel, perceptual, adv, clean, degraded, gp}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("loss weights must be finite and >= 0");
  }
}

PerceptualNet::PerceptualNet(std::uint64_t seed) {
  struct Layer {
    std::size_t in, out, stride;
  };
  const Layer layers[] = {{3, 8, 1}, {8, 16, 2}, {16, 16, 1}, {16, 32, 2}};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& l = layers[i];
    Rng rng(derive_seed(seed, "phi.conv" + std::to_string(i)));
    weights_.push_back(Tensor::randn({l.out, l.in, 3, 3}, rng, std::sqrt(2.0 / double(l.in * 9))));
    biases_.push_back(Tensor::uniform({1, l.out, 1, 1}, rng, -0.1, 0.1));
    strides_.push_back(l.stride);
  }
}

Tensor PerceptualNet::features(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != 3) throw TensorError("perceptual net expects [B,3,H,W], got " + shape_str(x.shape()));
  Tensor h = x;
  for (std::size_t i = 0; i < weights_.size(); ++i) h = relu(add(conv2d(h, weights_[i], strides_[i], 1), biases_[i]));
  return h;
}

Tensor PerceptualNet::embed(const Tensor& x) const {
  Tensor f = features(x);
  return reshape(global_avg_pool(f), {f.dim(0), f.dim(1)});
}

Tensor gradient_penalty(const CriticFn& critic, const Tensor& real, const Tensor& fake, Rng& rng) {
  if (real.shape() != fake.shape()) {
    throw TensorError("gradient penalty: real " + shape_str(real.shape()) + " vs fake " + shape_str(fake.shape()));
  }
  const std::size_t b = real.dim(0);
  Shape ushape(real.rank(), 1);
  ushape[0] = b;
  Tensor u = Tensor::uniform(ushape, rng);
  Tensor x_hat;
  {
    NoGradGuard ng;
    x_hat = add(mul(u, real.detach()), mul(add(neg(u), 1.0), fake.detach()));
  }
  x_hat.set_requires_grad(true);
  GradModeGuard on(true);
  Tensor scores = critic(x_hat);
  // A critic that ignores its input has a zero input gradient.
  Tensor g = scores.requires_grad() ? grad(sum(scores), {x_hat}, true)[0] : Tensor();
  if (!g.defined()) g = Tensor::zeros(x_hat.shape());
  std::vector<std::size_t> axes;
  for (std::size_t d = 1; d < g.rank(); ++d) axes.push_back(d);
  Tensor norms = sqrt(sum(square(g), axes, false));
  return mean(square(add(norms, -1.0)));
}

CriticLoss critic_loss_wgan_gp(const CriticFn& critic, const Tensor& real, const Tensor& fake, double lambda_gp,
                               Rng& rng) {
  if (real.shape() != fake.shape()) {
    throw TensorError("critic loss: real " + shape_str(real.shape()) + " vs fake " + shape_str(fake.shape()));
  }
  CriticLoss out;
  Tensor fake_mean = mean(critic(fake.detach()));
  Tensor real_mean = mean(critic(real.detach()));
  Tensor gp = gradient_penalty(critic, real, fake, rng);
  out.fake_score = fake_mean.item();
  out.real_score = real_mean.item();
  out.penalty = gp.item();
  out.total = add(sub(fake_mean, real_mean), mul(gp, lambda_gp));
  return out;
}

DegradationGeneratorLoss generator_loss_degradation(const CriticFn& critic, const Tensor& x_c,
                                                    const Tensor& x_gen, const LossWeights& w) {
  if (x_c.shape() != x_gen.shape()) {
    throw TensorError("generator loss: x_c " + shape_str(x_c.shape()) + " vs generated " + shape_str(x_gen.shape()));
  }
  DegradationGeneratorLoss out;
  Tensor adv = neg(mean(critic(x_gen)));
  Tensor mse = mean(square(sub(x_c.detach(), x_gen)));
  out.adversarial = adv.item();
  out.mse = mse.item();
  out.total = add(mul(adv, w.wgan), mul(mse, w.mse));
  return out;
}

SrLoss sr_loss(const Tensor& y_hat, const Tensor& y, const CriticFn& critic, const PerceptualNet& phi,
               const LossWeights& w) {
  if (y_hat.shape() != y.shape()) {
    throw TensorError("sr loss: estimate " + shape_str(y_hat.shape()) + " vs target " + shape_str(y.shape()));
  }
  SrLoss out;
  const Tensor target = y.detach();
  Tensor pixel = mean(abs(sub(target, y_hat)));
  out.pixel = pixel.item();
  Tensor total = mul(pixel, w.pixel);
  if (w.perceptual != 0.0) {
    Tensor perc = mean(abs(sub(phi.features(target), phi.features(y_hat))));
    out.perceptual = perc.item();
    total = add(total, mul(perc, w.perceptual));
  }
  if (w.adv != 0.0) {
    Tensor adv = neg(mean(critic(y_hat)));
    out.adversarial = adv.item();
    total = add(total, mul(adv, w.adv));
  }
  out.total = total;
  return out;
}

RobustLoss robust_loss(const Tensor& h_c, const Tensor& h_d, const Tensor& h_in, const LossWeights& w,
                       const SinkhornOptions& opts, SinkhornStats* stats) {
  if (h_c.shape() != h_in.shape() || h_d.shape() != h_in.shape()) {
    throw TensorError("robust loss: feature volumes must share a shape");
  }
  RobustLoss out;
  Tensor lc = sinkhorn_loss(h_c, h_in, opts, stats);
  Tensor ld = sinkhorn_loss(h_d, h_in, opts, stats);
  out.clean = lc.item();
  out.degraded = ld.item();
  out.total = add(mul(lc, w.clean), mul(ld, w.degraded));
  return out;
}

}  // namespace smoothsr
