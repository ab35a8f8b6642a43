// Acceptance checks, one PASS/FAIL line per criterion. With arguments, runs
// only the listed criterion numbers. Exit status is nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles/finite_diff.hpp"
#include "oracles/transport.hpp"
#include "smoothsr/config.hpp"
#include "smoothsr/eval.hpp"
#include "smoothsr/ops.hpp"
#include "smoothsr/sinkhorn.hpp"
#include "smoothsr/training.hpp"

using namespace smoothsr;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("smoothsr_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Tensor> store_params(ParamStore& store) {
  std::vector<Tensor> out;
  for (const auto& n : store.names()) out.push_back(store.at(n));
  return out;
}

std::vector<double> flat_params(Network& n) {
  std::vector<double> out;
  for (const auto& name : n.params().names()) {
    const auto d = n.params().at(name).data();
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

Eigen::MatrixXd random_cloud(Rng& rng, int n, int d, double scale = 1.0) {
  std::uniform_real_distribution<double> u(0.0, scale);
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = u(rng);
  return m;
}

// --- 1 ---------------------------------------------------------------------

Outcome autodiff() {
  Outcome out;
  const auto t0 = Clock::now();
  Rng rng(2024);
  Tensor x = Tensor::uniform({2, 4, 4, 4}, rng, -1.0, 1.0, true);
  Tensor pos = Tensor::uniform({2, 4, 4, 4}, rng, 0.5, 2.0, true);
  Tensor y = Tensor::uniform({4, 1, 1}, rng, 0.5, 1.5, true);
  Tensor w = Tensor::randn({3, 4, 3, 3}, rng, 0.5, true);
  Tensor slope = Tensor::uniform({1, 4, 1, 1}, rng, 0.1, 0.3, true);
  Tensor gamma = Tensor::uniform({4}, rng, 0.5, 1.5, true);
  Tensor beta = Tensor::randn({4}, rng, 0.5, true);
  Tensor a = Tensor::randn({3, 5}, rng, 1.0, true);
  Tensor b = Tensor::randn({5, 2}, rng, 1.0, true);
  Tensor ha = Tensor::randn({2, 3, 2, 3}, rng, 1.0, true);
  Tensor hb = Tensor::randn({2, 3, 2, 3}, rng, 1.0, true);
  Tensor rm = Tensor::zeros({4}), rv = Tensor::ones({4});
  SinkhornOptions so;
  so.relative_epsilon = false;
  so.epsilon = 0.5;
  so.max_iters = 50;
  so.tol = 0.0;

  struct Case {
    std::string name;
    std::function<Tensor()> f;
    std::vector<Tensor> params;
  };
  std::vector<Case> cases = {
      {"add", [&] { return add(x, y); }, {x, y}},
      {"add_scalar", [&] { return add(x, 0.7); }, {x}},
      {"sub", [&] { return sub(x, y); }, {x, y}},
      {"mul", [&] { return mul(x, y); }, {x, y}},
      {"mul_scalar", [&] { return mul(x, -1.3); }, {x}},
      {"div", [&] { return div(x, pos); }, {x, pos}},
      {"neg", [&] { return neg(x); }, {x}},
      {"pow", [&] { return pow(pos, 2.5); }, {pos}},
      {"square", [&] { return square(x); }, {x}},
      {"exp", [&] { return exp(x); }, {x}},
      {"log", [&] { return log(pos); }, {pos}},
      {"abs", [&] { return abs(x); }, {x}},
      {"max", [&] { return maximum(x, y); }, {x, y}},
      {"sqrt", [&] { return sqrt(pos); }, {pos}},
      {"safe_reciprocal", [&] { return safe_reciprocal(pos); }, {pos}},
      {"sigmoid", [&] { return sigmoid(x); }, {x}},
      {"relu", [&] { return relu(x); }, {x}},
      {"leaky_relu", [&] { return leaky_relu(x, 0.2); }, {x}},
      {"prelu", [&] { return prelu(x, slope); }, {x, slope}},
      {"logsumexp", [&] { return logsumexp(x); }, {x}},
      {"sum", [&] { return sum(x); }, {x}},
      {"sum_axes", [&] { return sum(x, {1, 3}, false); }, {x}},
      {"mean", [&] { return mean(x); }, {x}},
      {"mean_axes", [&] { return mean(x, {0}, true); }, {x}},
      {"sum_to", [&] { return sum_to(x, {1, 4, 1, 4}); }, {x}},
      {"broadcast_to", [&] { return broadcast_to(y, {2, 4, 4, 4}); }, {y}},
      {"reshape", [&] { return reshape(x, {8, 16}); }, {x}},
      {"permute", [&] { return permute(x, {3, 1, 0, 2}); }, {x}},
      {"transpose", [&] { return transpose(a); }, {a}},
      {"concat", [&] { return concat({x, pos}, 2); }, {x, pos}},
      {"narrow", [&] { return narrow(x, 3, 1, 2); }, {x}},
      {"pad_axis", [&] { return pad_axis(x, 2, 1, 2); }, {x}},
      {"matmul", [&] { return matmul(a, b); }, {a, b}},
      {"conv2d", [&] { return conv2d(x, w, 1, 1); }, {x, w}},
      {"conv2d_s2", [&] { return conv2d(x, w, 2, 1); }, {x, w}},
      {"pixel_shuffle", [&] { return pixel_shuffle(x, 2); }, {x}},
      {"pixel_unshuffle", [&] { return pixel_unshuffle(x, 2); }, {x}},
      {"upsample", [&] { return upsample_nearest(x, 2); }, {x}},
      {"block_sum", [&] { return block_sum(x, 2); }, {x}},
      {"gap", [&] { return global_avg_pool(x); }, {x}},
      {"group_norm", [&] { return group_norm(x, 2, gamma, beta); }, {x, gamma, beta}},
      {"batch_norm", [&] {
         Tensor m = rm, v = rv;  // running buffers are not under test
         return batch_norm(x, gamma, beta, m, v, NormMode::train);
       }, {x, gamma, beta}},
      {"batch_norm_eval", [&] { return batch_norm(x, gamma, beta, rm, rv, NormMode::eval); }, {x, gamma, beta}},
      {"feature_to_cloud", [&] { return feature_to_cloud(x); }, {x}},
      {"cost_matrix", [&] { return cost_matrix(feature_to_cloud(ha), feature_to_cloud(hb)); }, {ha, hb}},
      {"sinkhorn_loss", [&] { return sinkhorn_loss(ha, hb, so); }, {ha, hb}},
  };
  std::size_t failed = 0;
  for (auto& c : cases) {
    const auto shape = c.f().shape();
    Tensor probe = Tensor::randn(shape, rng);
    auto r = oracle::check_gradients([&] { return sum(mul(c.f(), probe)); }, c.params, 100, rng, 1e-4, 1e-5);
    if (!r.ok()) {
      ++failed;
      out.require(false, c.name + ": " + r.worst);
    }
  }
  out.note(std::to_string(cases.size() - failed) + "/" + std::to_string(cases.size()) + " ops");

  NetSpec spec;
  NetworkSet nets(spec, 7);
  Tensor lx = Tensor::uniform({2, 3, spec.lr_size, spec.lr_size}, rng);
  Tensor z = Tensor::randn({2, spec.z_dim}, rng);
  Tensor hy = Tensor::uniform({2, 3, spec.hr_size(), spec.hr_size()}, rng);
  Tensor h = Tensor::randn({2, spec.feat_channels, spec.feat_size(), spec.feat_size()}, rng);
  struct NetCase {
    const char* name;
    std::function<Tensor()> loss;
    Network* net;
  };
  std::vector<NetCase> net_cases = {
      {"f", [&] { return mean(abs(sub(nets.f.forward(lx), h))); }, &nets.f},
      {"g", [&] { return mean(abs(sub(nets.g.forward(h), hy))); }, &nets.g},
      {"gd", [&] { return mean(square(sub(nets.gd.forward(lx, z), lx))); }, &nets.gd},
      {"d", [&] { return mean(nets.d.forward(lx)); }, &nets.d},
      {"dsr", [&] { return mean(nets.dsr.forward(hy)); }, &nets.dsr},
  };
  std::size_t net_ok = 0;
  for (auto& c : net_cases) {
    auto r = oracle::check_gradients(c.loss, store_params(c.net->params()), 40, rng, 1e-4, 1e-5);
    out.require(r.ok(), std::string(c.name) + ": " + r.worst);
    net_ok += r.ok() ? 1 : 0;
  }
  out.note(std::to_string(net_ok) + "/5 networks");
  const double elapsed = seconds_since(t0);
  out.require(elapsed < 300.0, "took " + fmt("%.0f", elapsed) + " s");
  out.note(fmt("%.1f s", elapsed));
  return out;
}

// --- 2 ---------------------------------------------------------------------

Outcome double_backward() {
  Outcome out;
  Rng rng(31);
  // Two-layer critic on flat inputs: score = w2 . leaky(W1 x + b1).
  Tensor w1 = Tensor::randn({6, 5}, rng, 0.5, true);
  Tensor b1 = Tensor::randn({5}, rng, 0.2, true);
  Tensor w2 = Tensor::randn({5, 1}, rng, 0.5, true);
  Tensor real = Tensor::randn({4, 6}, rng);
  Tensor fake = Tensor::randn({4, 6}, rng);
  CriticFn critic = [&](const Tensor& in) { return matmul(leaky_relu(add(matmul(in, w1), b1), 0.2), w2); };
  auto loss = [&] {
    GradModeGuard on(true);
    Rng local(99);  // same interpolation points on every evaluation
    return gradient_penalty(critic, real, fake, local);
  };
  auto r = oracle::check_gradients(loss, {w1, b1, w2}, 100, rng, 1e-4, 1e-5);
  out.require(r.ok(), "two-layer: " + r.worst);
  out.note("two-layer max rel err " + fmt("%.2e", r.max_rel_err));

  auto full = [&] {
    GradModeGuard on(true);
    Rng local(5);
    return critic_loss_wgan_gp(critic, real, fake, 10.0, local).total;
  };
  auto rf = oracle::check_gradients(full, {w1, b1, w2}, 100, rng, 1e-4, 1e-5);
  out.require(rf.ok(), "critic loss: " + rf.worst);

  // Linear critic D(x) = w.x: penalty (|w|-1)^2, gradient 2(|w|-1) w/|w|.
  const std::vector<double> wv = {0.3, -1.2, 2.0, 0.45};
  Tensor w(Shape{4, 1}, wv, true);
  CriticFn linear = [&](const Tensor& in) { return matmul(in, w); };
  Rng local(3);
  Tensor pen = gradient_penalty(linear, Tensor::randn({3, 4}, rng), Tensor::randn({3, 4}, rng), local);
  backward(pen);
  double n = 0.0;
  for (double v : wv) n += v * v;
  n = std::sqrt(n);
  double worst = std::abs(pen.item() - (n - 1) * (n - 1));
  const auto gw = w.grad().to_vector();
  for (std::size_t i = 0; i < wv.size(); ++i) worst = std::max(worst, std::abs(gw[i] - 2 * (n - 1) * wv[i] / n));
  out.require(worst <= 1e-10, "linear closed form off by " + fmt("%.2e", worst));
  out.note("linear abs err " + fmt("%.1e", worst));
  return out;
}

// --- 3 ---------------------------------------------------------------------

Outcome sinkhorn_vs_exact() {
  Outcome out;
  Rng rng(5);
  std::uniform_int_distribution<int> dim(1, 16);
  double worst = 0.0;
  std::size_t below = 0, outside = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = dim(rng);
    Eigen::MatrixXd a = random_cloud(rng, 8, d), b = random_cloud(rng, 8, d);
    const double exact = oracle::exact_uniform_ot(cost_matrix(a, b));
    auto p = TransportProblem::uniform(a, b, 1e-3);
    p.epsilon_scaling = true;
    p.max_iters = 20000;
    const auto r = sinkhorn_solve(p);
    if (!(r.cost >= exact - 1e-9)) ++below;
    if (!(r.cost <= exact * 1.01)) ++outside;
    worst = std::max(worst, r.cost / exact - 1.0);
  }
  out.require(below == 0, std::to_string(below) + " below the optimum");
  out.require(outside == 0, std::to_string(outside) + " more than 1% above");
  out.note("worst gap " + fmt("%.3e", worst));

  Eigen::MatrixXd a = random_cloud(rng, 8, 2, 70.0), b = random_cloud(rng, 8, 2, 70.0);
  const Eigen::MatrixXd c = cost_matrix(a, b);
  auto p = TransportProblem::uniform(a, b, 1e-4);
  const auto naive = oracle::naive_sinkhorn(c, p.source_weights, p.target_weights, 1e-4, 200);
  const auto r = sinkhorn_solve(p);
  out.require(!naive.finite, "naive scaling stayed finite, the case is not discriminating");
  out.require(std::isfinite(r.cost) && r.plan.allFinite(), "log-domain result not finite");
  out.note("eps=1e-4 cost " + fmt("%.4g", r.cost));
  return out;
}

// --- 4 ---------------------------------------------------------------------

ExperimentConfig small_nets(ExperimentConfig c) {
  c.batch_size = 2;
  c.corpus_size = 8;
  c.heldout_size = 4;
  c.sinkhorn.max_iters = 50;
  return c;
}

Outcome mixing_and_isolation() {
  Outcome out;
  Rng rng(4);
  const double alpha = 0.3;
  Tensor xc = Tensor::uniform({2, 3, 16, 16}, rng), xd = Tensor::uniform({2, 3, 16, 16}, rng);
  const Tensor m = mix(xc, xd, alpha);
  bool exact = true;
  for (std::size_t i = 0; i < m.numel(); ++i) {
    const double c = xc.data()[i], d = xd.data()[i];
    exact &= m.data()[i] == d + alpha * (c - d);
  }
  out.require(exact, "tensor mix differs from x_d + alpha (x_c - x_d)");
  Corpus corpus(7, 64, 4);
  const auto pair = corpus.pair(3, alpha);
  const Image im = mix(pair.x_c, pair.x_d, alpha);
  out.require(im.px == pair.x_in.px, "corpus x_in differs from mix");
  const Tensor tm = mix(to_batch({pair.x_c}), to_batch({pair.x_d}), alpha);
  out.require(from_batch(tm, 0).px == im.px, "image and tensor mix differ");

  auto with = small_nets(ExperimentConfig{});
  with.out_dir = scratch_dir("iso_a").string();
  auto without = with;
  without.loss.clean = without.loss.degraded = 0.0;
  Trainer a(with), b(without);
  for (int i = 0; i < 2; ++i) {
    const auto sa = a.sr_step();
    b.sr_step();
    out.require(sa.robust_loss > 0.0, "robust step did not run");
    // After the first step f differs, so only the first comparison isolates
    // backprop 2.
    if (i == 0) {
      out.require(flat_params(a.nets().g) == flat_params(b.nets().g), "g changed by backprop 2");
      out.require(flat_params(a.nets().f) != flat_params(b.nets().f), "backprop 2 did not move f");
    }
  }
  out.note("x_in bit-exact, g bit-identical after backprop 2");
  return out;
}

// --- 5 ---------------------------------------------------------------------

double training_psnr(Trainer& t, const Tensor& x_in, const std::vector<Image>& y) {
  const Tensor out = t.super_resolve(x_in);
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) total += psnr(from_batch(out, i), y[i]);
  return total / static_cast<double>(y.size());
}

Outcome overfit() {
  Outcome out;
  const auto t0 = Clock::now();
  ExperimentConfig c;
  c.corpus_size = 8;
  c.degrader_iterations = 200;
  c.sr_iterations = 2000;
  c.log_every = 100;
  c.out_dir = scratch_dir("overfit").string();
  Trainer t(c);
  train_degradation_gan(t);
  const double degrader_s = seconds_since(t0);

  std::vector<Image> xc, y;
  for (std::size_t i = 0; i < c.corpus_size; ++i) {
    xc.push_back(t.sample(i).x_c);
    y.push_back(t.sample(i).y_c);
  }
  Rng zr(17);
  const Tensor xcb = to_batch(xc);
  const Tensor x_in = mix(xcb, t.degrade(xcb, Tensor::randn({c.corpus_size, c.net.z_dim}, zr)), c.alpha);
  const double before = training_psnr(t, x_in, y);
  train_sr(t);
  const double after = training_psnr(t, x_in, y);
  const double elapsed = seconds_since(t0);
  out.require(after - before >= 3.0, "gain " + fmt("%.2f dB", after - before));
  out.require(elapsed <= 1800.0, "took " + fmt("%.0f s", elapsed));
  out.note("PSNR " + fmt("%.2f", before) + " -> " + fmt("%.2f dB", after) + ", degrader " +
           fmt("%.0f s", degrader_s) + ", total " + fmt("%.0f s", elapsed));
  return out;
}

// --- 6 ---------------------------------------------------------------------

Outcome robustness_claim() {
  Outcome out;
  ExperimentConfig robust;
  robust.batch_size = 4;
  robust.corpus_size = 64;
  robust.heldout_size = 32;
  robust.degrader_iterations = 200;
  robust.sr_iterations = 400;
  robust.log_every = 100;
  robust.out_dir = scratch_dir("claim_robust").string();
  ExperimentConfig ablation = robust;
  ablation.loss.clean = ablation.loss.degraded = 0.0;
  ablation.out_dir = scratch_dir("claim_ablation").string();

  Trainer a(robust);
  train_degradation_gan(a);
  const std::string handoff = (fs::path(robust.out_dir) / "degrader.ckpt").string();
  Trainer b(ablation);
  b.load(handoff, false);
  train_sr(a);
  train_sr(b);

  const auto held = a.heldout_indices();
  std::vector<Image> sources, degraded;
  for (auto i : held) {
    sources.push_back(a.sample(i).x_c);
    degraded.push_back(a.sample(i).x_d);
  }
  auto score = [&](Trainer& t) {
    return robustness_test([&](const Tensor& x) { return t.super_resolve(x); },
                           [&](const Tensor& x, const Tensor& z) { return t.degrade(x, z); }, sources,
                           robust.net.scale, robust.net.z_dim);
  };
  const auto ra = score(a), rb = score(b);
  out.require(ra.score < rb.score, "robustness " + fmt("%.5f", ra.score) + " vs ablation " + fmt("%.5f", rb.score));
  out.note("(a) robustness " + fmt("%.5f", ra.score) + " vs " + fmt("%.5f", rb.score));

  const Tensor xc = to_batch(sources), xd = to_batch(degraded);
  const auto grid = default_alpha_grid();
  auto curve = [&](Trainer& t) {
    return smoothness_test([&](const Tensor& x) { return t.features(x); }, xc, xd, grid, robust.sinkhorn);
  };
  const auto ca = curve(a), cb = curve(b);
  std::size_t lower = 0;
  for (std::size_t k = 0; k < grid.size(); ++k) lower += ca[k].distance < cb[k].distance ? 1 : 0;
  const double frac = static_cast<double>(lower) / static_cast<double>(grid.size());
  out.require(frac >= 0.8, "smoothness lower at " + std::to_string(lower) + "/" + std::to_string(grid.size()));
  out.note("(b) smoothness lower at " + std::to_string(lower) + "/" + std::to_string(grid.size()) + " points");
  return out;
}

// --- 7 ---------------------------------------------------------------------

Outcome frechet() {
  Outcome out;
  Rng rng(7);
  const int d = 8, n = 5000;
  std::normal_distribution<double> g(0.0, 1.0);
  // Equal covariances: the distance reduces to |mu_a - mu_b|^2.
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= i; ++j) l(i, j) = i == j ? 1.0 + 0.1 * i : 0.2 * g(rng);
  Eigen::VectorXd shift(d);
  for (int i = 0; i < d; ++i) shift(i) = 0.5 + 0.1 * i;
  auto draw = [&](const Eigen::VectorXd& mu) {
    Eigen::MatrixXd x(n, d);
    for (int r = 0; r < n; ++r) {
      Eigen::VectorXd e(d);
      for (int k = 0; k < d; ++k) e(k) = g(rng);
      x.row(r) = (mu + l * e).transpose();
    }
    return x;
  };
  const Eigen::MatrixXd a = draw(Eigen::VectorXd::Zero(d)), b = draw(shift);
  const double expected = shift.squaredNorm();
  const double got = frechet_distance(a, b);
  const double rel = std::abs(got - expected) / expected;
  out.require(rel <= 0.02, "relative error " + fmt("%.4f", rel));
  const double self = frechet_distance(a, a);
  out.require(std::abs(self) <= 1e-8, "d(A,A) = " + fmt("%.3e", self));
  out.note("closed form " + fmt("%.4f", expected) + ", estimate " + fmt("%.4f", got) + ", d(A,A) " +
           fmt("%.1e", self));
  return out;
}

// --- 8 ---------------------------------------------------------------------

Outcome determinism() {
  Outcome out;
  std::string logs[2];
  for (int run = 0; run < 2; ++run) {
    auto c = small_nets(ExperimentConfig{});
    c.degrader_iterations = 3;
    c.sr_iterations = 3;
    const auto dir = scratch_dir("det" + std::to_string(run));
    c.out_dir = dir.string();
    Trainer t(c);
    train_degradation_gan(t);
    train_sr(t);
    logs[run] = read_file(dir / "degrader_log.csv") + read_file(dir / "sr_log.csv");
  }
  out.require(!logs[0].empty() && logs[0] == logs[1], "loss logs differ");

  const auto dir = scratch_dir("resume");
  auto c = small_nets(ExperimentConfig{});
  c.out_dir = dir.string();
  Trainer a(c);
  a.degrader_step();
  a.sr_step();
  const std::string ckpt = (dir / "mid.ckpt").string();
  a.save(ckpt);
  auto b = Trainer::resume(ckpt);
  std::size_t same = 0;
  for (int i = 0; i < 10; ++i) same += sr_log_row(a.sr_step()) == sr_log_row(b->sr_step()) ? 1 : 0;
  out.require(same == 10, "resume matched " + std::to_string(same) + "/10 iterations");
  bool params = true;
  for (std::size_t k = 0; k < 5; ++k) params &= flat_params(*a.nets().all()[k]) == flat_params(*b->nets().all()[k]);
  out.require(params, "parameters differ after resume");
  out.note("logs identical, resume exact over 10 iterations");
  return out;
}

// --- 9 ---------------------------------------------------------------------

Outcome conformance() {
  Outcome out;
  const double lr0 = 1e-4;
  out.require(lr_schedule(0, lr0) == lr0 && lr_schedule(10000, lr0) == lr0 / 2 && lr_schedule(25000, lr0) == lr0 / 4,
              "schedule");

  ParamStore s;
  Tensor& p = s.param("p", {3}, Init::constant(0.5));
  p.accumulate_grad(std::vector<double>{1.0, 1.0, 1.0});
  const AdamConfig adam;
  adam_step(s, 1e-3, adam);
  // m_hat = v_hat = 1 after bias correction.
  const double expected = 0.5 - 1e-3 * 1.0 / (1.0 + adam.eps);
  bool first = true;
  for (double v : s.at("p").data()) first &= std::abs(v - expected) <= 1e-15;
  out.require(first, "Adam first step");

  auto c = small_nets(ExperimentConfig{});
  c.out_dir = scratch_dir("ledger").string();
  Trainer t(c);
  for (int i = 0; i < 3; ++i) t.degrader_step();
  for (int i = 0; i < 3; ++i) t.sr_step();
  const auto& dl = t.degrader_ledger();
  const auto& sl = t.sr_ledger();
  out.require(dl.critic_updates == 5 * dl.generator_updates && dl.generator_updates == 3, "degrader ledger");
  out.require(sl.critic_updates == 5 * sl.generator_updates && sl.generator_updates == 3, "sr ledger");
  out.note("ledgers " + std::to_string(dl.critic_updates) + ":" + std::to_string(dl.generator_updates) + " and " +
           std::to_string(sl.critic_updates) + ":" + std::to_string(sl.generator_updates));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
  };
  const std::vector<Criterion> all = {
      {1, "autodiff matches finite differences", autodiff},
      {2, "gradient penalty double backward", double_backward},
      {3, "Sinkhorn against exact transport", sinkhorn_vs_exact},
      {4, "input mixing and backprop isolation", mixing_and_isolation},
      {5, "overfit smoke run", overfit},
      {6, "robust loss against ablation", robustness_claim},
      {7, "Frechet distance closed form", frechet},
      {8, "determinism and resume", determinism},
      {9, "schedule, Adam and update ledger", conformance},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    std::printf("%s criterion %d: %s (%s) [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
