#include "smoothsr/training.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "smoothsr/hash.hpp"

namespace smoothsr {

namespace fs = std::filesystem;

namespace {

constexpr const char* kMagic = "smoothsr-checkpoint";
constexpr std::uint64_t kVersion = 1;
constexpr std::size_t kSinkhornWindow = 100;

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + v[i];
  return out;
}

std::vector<Image> split(const Tensor& t) {
  std::vector<Image> out;
  for (std::size_t b = 0; b < t.dim(0); ++b) out.push_back(from_batch(t, b));
  return out;
}

double mean_laplacian(const Tensor& batch) {
  double s = 0.0;
  for (const auto& img : split(batch)) s += laplacian_variance(img);
  return s / double(batch.dim(0));
}

double mean_psnr(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(0); ++i) s += psnr(from_batch(a, i), from_batch(b, i));
  return s / double(a.dim(0));
}

void write_moments(std::ostream& os, const MomentSet& m) {
  io::write_u64(os, m.size());
  for (const auto& [name, st] : m) {
    io::write_string(os, name);
    io::write_u64(os, st.step);
    io::write_doubles(os, st.m);
    io::write_doubles(os, st.v);
  }
}

MomentSet read_moments(std::istream& is) {
  MomentSet m;
  const auto n = io::read_u64(is);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::string name = io::read_string(is);
    AdamState st;
    st.step = io::read_u64(is);
    st.m = io::read_doubles(is);
    st.v = io::read_doubles(is);
    m.emplace(name, std::move(st));
  }
  return m;
}

struct CheckpointHeader {
  std::uint64_t hash = 0;
  std::string config_text;
};

CheckpointHeader read_header(std::istream& is, const std::string& path) {
  if (io::read_string(is) != kMagic) throw std::runtime_error(path + ": not a checkpoint");
  if (const auto v = io::read_u64(is); v != kVersion) {
    throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(v));
  }
  CheckpointHeader h;
  h.hash = io::read_u64(is);
  h.config_text = io::read_string(is);
  if (fnv1a64(h.config_text) != h.hash) throw std::runtime_error(path + ": config hash does not match stored config");
  return h;
}

std::string fmt_row(std::initializer_list<double> values) {
  std::string out;
  char buf[40];
  bool first = true;
  for (double v : values) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    if (!first) out += ',';
    out += buf;
    first = false;
  }
  return out + "\n";
}

}  // namespace

MissingGradError::MissingGradError(std::vector<std::string> names)
    : std::runtime_error("adam_step: no gradient for " + join(names)), names_(std::move(names)) {}

void adam_step(ParamStore& store, double lr, const AdamConfig& cfg, MomentSet* moments) {
  std::vector<std::string> missing;
  for (const auto& name : store.names())
    if (!store.at(name).has_grad()) missing.push_back(name);
  if (!missing.empty()) throw MissingGradError(std::move(missing));

  for (const auto& name : store.names()) {
    Tensor& p = store.at(name);
    AdamState& st = moments ? (*moments)[name] : store.adam(name);
    const std::size_t n = p.numel();
    if (st.m.size() != n) {
      st.m.assign(n, 0.0);
      st.v.assign(n, 0.0);
      st.step = 0;
    }
    ++st.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, double(st.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, double(st.step));
    const Tensor g = p.grad();
    const auto gd = g.data();
    auto pd = p.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * gd[i];
      st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * gd[i] * gd[i];
      const double m_hat = st.m[i] / c1;
      const double v_hat = st.v[i] / c2;
      pd[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
  store.zero_grad();
}

double laplacian_variance(const Image& img) {
  if (img.height < 3 || img.width < 3) throw std::invalid_argument("laplacian_variance: image smaller than 3x3");
  auto gray = [&](std::size_t y, std::size_t x) {
    double s = 0.0;
    for (std::size_t c = 0; c < img.channels; ++c) s += img.at(c, y, x);
    return s / double(img.channels);
  };
  std::vector<double> lap;
  for (std::size_t y = 1; y + 1 < img.height; ++y)
    for (std::size_t x = 1; x + 1 < img.width; ++x)
      lap.push_back(gray(y - 1, x) + gray(y + 1, x) + gray(y, x - 1) + gray(y, x + 1) - 4.0 * gray(y, x));
  double mean = 0.0;
  for (double v : lap) mean += v;
  mean /= double(lap.size());
  double var = 0.0;
  for (double v : lap) var += (v - mean) * (v - mean);
  return var / double(lap.size());
}

// ---------------------------------------------------------------------------

Trainer::Trainer(ExperimentConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))),
      corpus_(cfg_.data_seed, cfg_.net.hr_size(), cfg_.net.scale),
      nets_(cfg_.net, cfg_.seed),
      rng_(derive_seed(cfg_.seed, "train")) {}

const Sample& Trainer::sample(std::size_t index) {
  auto it = sample_cache_.find(index);
  if (it == sample_cache_.end()) it = sample_cache_.emplace(index, corpus_.sample(index)).first;
  return it->second;
}

const Image& Trainer::unpaired(std::size_t index) {
  auto it = unpaired_cache_.find(index);
  if (it == unpaired_cache_.end()) it = unpaired_cache_.emplace(index, corpus_.unpaired_degraded(index)).first;
  return it->second;
}

std::vector<std::size_t> Trainer::heldout_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cfg_.heldout_size; ++i) out.push_back(cfg_.corpus_size + i);
  return out;
}

std::vector<std::size_t> Trainer::draw_indices(std::size_t range) {
  std::uniform_int_distribution<std::size_t> pick(0, range - 1);
  std::vector<std::size_t> idx(cfg_.batch_size);
  for (auto& i : idx) i = pick(rng_);
  return idx;
}

Tensor Trainer::draw_z() { return Tensor::randn({cfg_.batch_size, cfg_.net.z_dim}, rng_); }

Tensor Trainer::super_resolve(const Tensor& x) {
  NoGradGuard ng;
  const ForwardOptions eval{NormMode::eval, true};
  return nets_.g.forward(nets_.f.forward(x, eval), eval);
}

Tensor Trainer::features(const Tensor& x) {
  NoGradGuard ng;
  return nets_.f.forward(x, {NormMode::eval, true});
}

Tensor Trainer::degrade(const Tensor& x_c, const Tensor& z) {
  NoGradGuard ng;
  return nets_.gd.forward(x_c, z, {NormMode::eval, true});
}

void Trainer::check_finite(const char* what, double value, const std::vector<std::pair<std::string, Tensor>>& batch) {
  if (std::isfinite(value)) return;
  std::string dump;
  try {
    const fs::path dir = fs::path(cfg_.out_dir) / "failure";
    fs::create_directories(dir);
    std::ofstream txt(dir / "batch.txt");
    txt << "loss " << what << " = " << value << "\n"
        << "degrader_iteration " << degrader_iter_ << "\nsr_iteration " << sr_iter_ << "\n";
    for (const auto& [name, t] : batch) {
      txt << name << ' ' << shape_str(t.shape());
      std::size_t bad = 0;
      for (double v : t.data()) bad += !std::isfinite(v);
      txt << " non-finite " << bad << "\n";
      if (t.rank() == 4 && t.dim(1) == 3) {
        auto images = split(t);
        for (auto& img : images)
          for (auto& v : img.px) v = std::isfinite(v) ? v : 0.0;
        write_png((dir / (name + ".png")).string(), make_grid(images, images.size()));
      }
    }
    dump = dir.string();
  } catch (const std::exception&) {
    dump.clear();
  }
  throw NumericalError(std::string("non-finite ") + what + " loss" + (dump.empty() ? "" : "; batch dumped to " + dump),
                       dump);
}

DegraderStepStats Trainer::degrader_step() {
  const double lr = lr_schedule(degrader_iter_, cfg_.lr, cfg_.lr_decay, cfg_.lr_decay_every);
  const double clr = lr_schedule(degrader_iter_, cfg_.critic_lr, cfg_.lr_decay, cfg_.lr_decay_every);
  auto& d = nets_.d;
  auto& gd = nets_.gd;
  const CriticFn critic = [&d](const Tensor& x) { return d.forward(x, {NormMode::train, false}); };
  const CriticFn frozen = [&d](const Tensor& x) { return d.forward(x, {NormMode::train, true}); };

  auto lr_batch = [&](bool unpaired_stream) {
    std::vector<Image> imgs;
    for (std::size_t i : draw_indices(cfg_.corpus_size)) imgs.push_back(unpaired_stream ? unpaired(i) : sample(i).x_c);
    return to_batch(imgs);
  };

  DegraderStepStats st;
  st.lr = lr;
  st.critic_lr = clr;
  Tensor real;
  for (std::size_t k = 0; k < cfg_.critic_steps; ++k) {
    real = lr_batch(true);
    const Tensor x_c = lr_batch(false);
    const Tensor z = draw_z();
    Tensor fake;
    {
      NoGradGuard ng;
      fake = gd.forward(x_c, z, {NormMode::train, false});
    }
    const CriticLoss cl = critic_loss_wgan_gp(critic, real, fake, cfg_.loss.gp, rng_);
    check_finite("degradation critic", cl.total.item(), {{"real", real}, {"fake", fake}, {"x_c", x_c}});
    backward(cl.total);
    adam_step(d.params(), clr, cfg_.adam);
    ++degrader_ledger_.critic_updates;
    st.critic_loss = cl.total.item();
    st.wasserstein = cl.real_score - cl.fake_score;
    st.penalty = cl.penalty;
  }

  const Tensor x_c = lr_batch(false);
  const Tensor z = draw_z();
  const Tensor x_gen = gd.forward(x_c, z, {NormMode::train, false});
  const auto gl = generator_loss_degradation(frozen, x_c, x_gen, cfg_.loss);
  check_finite("degradation generator", gl.total.item(), {{"x_c", x_c}, {"x_gen", x_gen}});
  backward(gl.total);
  adam_step(gd.params(), lr, cfg_.adam);
  ++degrader_ledger_.generator_updates;
  ++degrader_iter_;

  st.iteration = degrader_iter_;
  st.generator_loss = gl.total.item();
  st.adversarial = gl.adversarial;
  st.mse = gl.mse;
  st.fake_laplacian = mean_laplacian(x_gen);
  st.real_laplacian = mean_laplacian(real);
  st.critic_updates = degrader_ledger_.critic_updates;
  st.generator_updates = degrader_ledger_.generator_updates;
  return st;
}

Trainer::Batch Trainer::sr_batch() {
  Batch b;
  std::vector<Image> y, xc, xd;
  for (std::size_t i : draw_indices(cfg_.corpus_size)) {
    const Sample& s = sample(i);
    y.push_back(s.y_c);
    xc.push_back(s.x_c);
    if (source_ == DegradationSource::synthetic) xd.push_back(s.x_d);
  }
  b.y_c = to_batch(y);
  b.x_c = to_batch(xc);
  b.x_d = source_ == DegradationSource::synthetic ? to_batch(xd) : degrade(b.x_c, draw_z());
  b.x_in = mix(b.x_c, b.x_d, cfg_.alpha);
  return b;
}

void Trainer::track_sinkhorn(const SinkhornStats& s) {
  sinkhorn_window_.emplace_back(s.solves, s.nonconverged);
  if (sinkhorn_window_.size() < kSinkhornWindow) return;
  std::size_t solves = 0, bad = 0;
  for (const auto& [n, b] : sinkhorn_window_) {
    solves += n;
    bad += b;
  }
  const double rate = solves ? double(bad) / double(solves) : 0.0;
  if (rate > cfg_.nonconvergence_warn) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "sinkhorn: %zu of %zu solves did not converge over iterations %zu-%zu", bad, solves,
                  sr_iter_ + 1 - kSinkhornWindow, sr_iter_);
    warnings_.emplace_back(buf);
  }
  sinkhorn_window_.clear();
}

SrStepStats Trainer::sr_step() {
  const double lr = lr_schedule(sr_iter_, cfg_.lr, cfg_.lr_decay, cfg_.lr_decay_every);
  const double clr = lr_schedule(sr_iter_, cfg_.critic_lr, cfg_.lr_decay, cfg_.lr_decay_every);
  auto& f = nets_.f;
  auto& g = nets_.g;
  auto& dsr = nets_.dsr;
  const ForwardOptions train{NormMode::train, false};
  const CriticFn critic = [&dsr](const Tensor& x) { return dsr.forward(x, {NormMode::train, false}); };
  const CriticFn frozen = [&dsr](const Tensor& x) { return dsr.forward(x, {NormMode::train, true}); };

  SrStepStats st;
  st.lr = lr;
  st.critic_lr = clr;
  for (std::size_t k = 0; k < cfg_.critic_steps; ++k) {
    const Batch b = sr_batch();
    Tensor y_hat;
    {
      NoGradGuard ng;
      y_hat = g.forward(f.forward(b.x_in, train), train);
    }
    const CriticLoss cl = sr_critic_loss(critic, b.y_c, y_hat, cfg_.loss.gp, rng_);
    check_finite("sr critic", cl.total.item(), {{"y_c", b.y_c}, {"y_hat", y_hat}, {"x_in", b.x_in}});
    backward(cl.total);
    adam_step(dsr.params(), clr, cfg_.adam);
    ++sr_ledger_.critic_updates;
    st.critic_loss = cl.total.item();
    st.wasserstein = cl.real_score - cl.fake_score;
    st.penalty = cl.penalty;
  }

  // Backprop 1: L_sr through g and f.
  const Batch b = sr_batch();
  const Tensor y_hat = g.forward(f.forward(b.x_in, train), train);
  const SrLoss sl = sr_loss(y_hat, b.y_c, frozen, phi_, cfg_.loss);
  check_finite("sr", sl.total.item(), {{"y_c", b.y_c}, {"y_hat", y_hat}, {"x_in", b.x_in}});
  backward(sl.total);
  adam_step(g.params(), lr, cfg_.adam);
  adam_step(f.params(), lr, cfg_.adam);
  ++sr_ledger_.generator_updates;
  st.sr_loss = sl.total.item();
  st.pixel = sl.pixel;
  st.perceptual = sl.perceptual;
  st.adversarial = sl.adversarial;
  st.psnr = mean_psnr(y_hat, b.y_c);

  // Backprop 2: L_robust on a fresh tape, updating only f.
  if (cfg_.loss.clean > 0.0 || cfg_.loss.degraded > 0.0) {
    GraphTape tape;
    const auto active = tape.activate();
    const Tensor x_in = mix(b.x_c, b.x_d, cfg_.alpha);
    const Tensor h_c = f.forward(b.x_c, train);
    const Tensor h_d = f.forward(b.x_d, train);
    const Tensor h_in = f.forward(x_in, train);
    SinkhornStats ss;
    const RobustLoss rl = robust_loss(h_c, h_d, h_in, cfg_.loss, cfg_.sinkhorn, &ss);
    check_finite("robust", rl.total.item(), {{"x_c", b.x_c}, {"x_d", b.x_d}, {"x_in", x_in}});
    if (graph_tape_ids(rl.total) != std::vector<std::uint64_t>{tape.id()}) {
      throw GraphError("robust loss graph reaches nodes outside its own tape");
    }
    backward(rl.total);
    for (const auto& name : g.params().names())
      if (g.params().at(name).has_grad()) throw GraphError("robust loss produced a gradient for " + name);
    adam_step(f.params(), lr, cfg_.adam, &robust_moments_);
    st.robust_loss = rl.total.item();
    st.sinkhorn_clean = rl.clean;
    st.sinkhorn_degraded = rl.degraded;
    st.sinkhorn_solves = ss.solves;
    st.sinkhorn_nonconverged = ss.nonconverged;
    ++sr_iter_;
    track_sinkhorn(ss);
  } else {
    ++sr_iter_;
  }
  st.iteration = sr_iter_;
  st.critic_updates = sr_ledger_.critic_updates;
  return st;
}

void Trainer::save(const std::string& path) const {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp);
    const std::string text = cfg_.canonical();
    io::write_string(os, kMagic);
    io::write_u64(os, kVersion);
    io::write_u64(os, fnv1a64(text));
    io::write_string(os, text);
    io::write_u64(os, degrader_iter_);
    io::write_u64(os, sr_iter_);
    io::write_u64(os, degrader_ledger_.critic_updates);
    io::write_u64(os, degrader_ledger_.generator_updates);
    io::write_u64(os, sr_ledger_.critic_updates);
    io::write_u64(os, sr_ledger_.generator_updates);
    io::write_u64(os, static_cast<std::uint64_t>(source_));
    std::ostringstream rng_state;
    rng_state << rng_;
    io::write_string(os, rng_state.str());
    const Network* nets[] = {&nets_.gd, &nets_.d, &nets_.f, &nets_.g, &nets_.dsr};
    io::write_u64(os, std::size(nets));
    for (const Network* n : nets) {
      io::write_string(os, n->name());
      n->params().save(os);
    }
    write_moments(os, robust_moments_);
    io::write_u64(os, sinkhorn_window_.size());
    for (const auto& [a, b] : sinkhorn_window_) {
      io::write_u64(os, a);
      io::write_u64(os, b);
    }
    if (!os) throw std::runtime_error("failed writing " + tmp);
  }
  fs::rename(tmp, path);
}

void Trainer::load(const std::string& path, bool strict) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  const CheckpointHeader h = read_header(is, path);
  if (strict && h.hash != cfg_.hash()) throw std::runtime_error(path + ": checkpoint was written with a different config");
  degrader_iter_ = io::read_u64(is);
  sr_iter_ = io::read_u64(is);
  degrader_ledger_.critic_updates = io::read_u64(is);
  degrader_ledger_.generator_updates = io::read_u64(is);
  sr_ledger_.critic_updates = io::read_u64(is);
  sr_ledger_.generator_updates = io::read_u64(is);
  source_ = static_cast<DegradationSource>(io::read_u64(is));
  std::istringstream rng_state(io::read_string(is));
  rng_state >> rng_;
  const auto count = io::read_u64(is);
  if (count != nets_.all().size()) throw std::runtime_error(path + ": unexpected network count");
  for (Network* n : nets_.all()) {
    if (const auto name = io::read_string(is); name != n->name()) {
      throw std::runtime_error(path + ": expected network " + n->name() + ", found " + name);
    }
    n->params().load(is);
  }
  robust_moments_ = read_moments(is);
  sinkhorn_window_.clear();
  const auto window = io::read_u64(is);
  for (std::uint64_t i = 0; i < window; ++i) {
    const auto a = io::read_u64(is);
    const auto b = io::read_u64(is);
    sinkhorn_window_.emplace_back(a, b);
  }
  if (!is) throw std::runtime_error(path + ": truncated checkpoint");
}

ExperimentConfig Trainer::checkpoint_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  return ExperimentConfig::from_text(read_header(is, path).config_text);
}

std::unique_ptr<Trainer> Trainer::resume(const std::string& path) {
  auto t = std::make_unique<Trainer>(checkpoint_config(path));
  t->load(path, true);
  return t;
}

// ---------------------------------------------------------------------------

std::string degrader_log_header() {
  return "iteration,lr,critic_lr,critic_loss,wasserstein,penalty,generator_loss,adversarial,mse,fake_laplacian,"
         "real_laplacian,critic_updates,generator_updates\n";
}

std::string degrader_log_row(const DegraderStepStats& s) {
  return fmt_row({double(s.iteration), s.lr, s.critic_lr, s.critic_loss, s.wasserstein, s.penalty, s.generator_loss,
                  s.adversarial, s.mse, s.fake_laplacian, s.real_laplacian, double(s.critic_updates),
                  double(s.generator_updates)});
}

std::string sr_log_header() {
  return "iteration,lr,critic_lr,critic_loss,wasserstein,penalty,sr_loss,pixel,perceptual,adversarial,robust_loss,"
         "sinkhorn_clean,sinkhorn_degraded,psnr,sinkhorn_solves,sinkhorn_nonconverged,critic_updates\n";
}

std::string sr_log_row(const SrStepStats& s) {
  return fmt_row({double(s.iteration), s.lr, s.critic_lr, s.critic_loss, s.wasserstein, s.penalty, s.sr_loss, s.pixel,
                  s.perceptual, s.adversarial, s.robust_loss, s.sinkhorn_clean, s.sinkhorn_degraded, s.psnr,
                  double(s.sinkhorn_solves), double(s.sinkhorn_nonconverged), double(s.critic_updates)});
}

MetricReport evaluate(Trainer& trainer, const std::vector<std::size_t>& indices, std::size_t draws) {
  if (indices.empty()) throw std::invalid_argument("evaluate: no indices");
  const auto& cfg = trainer.config();
  MetricReport r;
  r.indices = indices;
  std::vector<Image> y, xc, xd, sr_outputs, bic_outputs;
  for (std::size_t i : indices) {
    const Sample& s = trainer.sample(i);
    y.push_back(s.y_c);
    xc.push_back(s.x_c);
    xd.push_back(s.x_d);
  }
  const Tensor x_c = to_batch(xc), x_d = to_batch(xd);
  const auto sr_d = split(trainer.super_resolve(x_d));
  const auto sr_c = split(trainer.super_resolve(x_c));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Image bic = bicubic_upsample(xd[k], cfg.net.scale);
    r.psnr_degraded.push_back(psnr(sr_d[k], y[k]));
    r.ssim_degraded.push_back(ssim(sr_d[k], y[k]));
    r.psnr_clean.push_back(psnr(sr_c[k], y[k]));
    r.ssim_clean.push_back(ssim(sr_c[k], y[k]));
    r.psnr_bicubic.push_back(psnr(bic, y[k]));
    bic_outputs.push_back(bic);
  }
  if (indices.size() >= 2) {
    r.frechet = frechet_feature_distance(sr_d, y, trainer.perceptual());
    r.frechet_bicubic = frechet_feature_distance(bic_outputs, y, trainer.perceptual());
  }
  const SrFn model = [&trainer](const Tensor& x) { return trainer.super_resolve(x); };
  const DegradeFn degrade = [&trainer](const Tensor& x, const Tensor& z) { return trainer.degrade(x, z); };
  r.robustness = robustness_test(model, degrade, xc, cfg.net.scale, cfg.net.z_dim, draws);
  const SrFn feats = [&trainer](const Tensor& x) { return trainer.features(x); };
  r.smoothness = smoothness_test(feats, x_c, x_d, default_alpha_grid(), cfg.sinkhorn);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

void append(const fs::path& path, const std::string& header, const std::string& row) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream os(path, std::ios::app);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  if (fresh) os << header;
  os << row;
}

std::vector<Image> upsampled(const Tensor& lr, std::size_t scale) {
  std::vector<Image> out;
  for (const auto& img : split(lr)) out.push_back(bicubic_upsample(img, scale));
  return out;
}

void degrader_grid(Trainer& t, const fs::path& path) {
  const auto& cfg = t.config();
  const std::size_t n = std::min<std::size_t>(4, cfg.corpus_size);
  std::vector<Image> xc, real;
  for (std::size_t i = 0; i < n; ++i) {
    xc.push_back(t.sample(i).x_c);
    real.push_back(t.unpaired(i));
  }
  Rng rng(derive_seed(cfg.seed, "grid"));
  const Tensor x_c = to_batch(xc);
  const Tensor fake = t.degrade(x_c, Tensor::randn({n, cfg.net.z_dim}, rng));
  std::vector<Image> tiles = xc;
  for (const auto& img : split(fake)) tiles.push_back(img);
  tiles.insert(tiles.end(), real.begin(), real.end());
  write_png(path.string(), make_grid(tiles, n));
}

void sr_grid(Trainer& t, const fs::path& path) {
  const auto& cfg = t.config();
  std::vector<std::size_t> idx = t.heldout_indices();
  if (idx.empty()) idx.push_back(0);
  idx.resize(std::min<std::size_t>(idx.size(), 4));
  std::vector<Image> xd, y;
  for (std::size_t i : idx) {
    xd.push_back(t.sample(i).x_d);
    y.push_back(t.sample(i).y_c);
  }
  const Tensor x_d = to_batch(xd);
  std::vector<Image> tiles = upsampled(x_d, cfg.net.scale);
  for (const auto& img : split(t.super_resolve(x_d))) tiles.push_back(img);
  tiles.insert(tiles.end(), y.begin(), y.end());
  write_png(path.string(), make_grid(tiles, idx.size()));
}

void flush_warnings(Trainer& t, std::size_t& reported, const TrainHooks& hooks) {
  for (; reported < t.warnings().size(); ++reported) {
    if (hooks.on_warning) hooks.on_warning(t.warnings()[reported]);
  }
}

}  // namespace

void train_degradation_gan(Trainer& trainer, const TrainHooks& hooks) {
  const auto& cfg = trainer.config();
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  while (trainer.degrader_iteration() < cfg.degrader_iterations) {
    const DegraderStepStats s = trainer.degrader_step();
    if (s.iteration % cfg.log_every == 0) append(dir / "degrader_log.csv", degrader_log_header(), degrader_log_row(s));
    if (hooks.on_degrader_step) hooks.on_degrader_step(s);
    if (cfg.checkpoint_every && s.iteration % cfg.checkpoint_every == 0) {
      trainer.save((dir / ("degrader_" + std::to_string(s.iteration) + ".ckpt")).string());
    }
    if (cfg.sample_every && s.iteration % cfg.sample_every == 0) {
      degrader_grid(trainer, dir / ("degrader_" + std::to_string(s.iteration) + ".png"));
    }
  }
  trainer.save((dir / "degrader.ckpt").string());
}

void train_sr(Trainer& trainer, const TrainHooks& hooks) {
  const auto& cfg = trainer.config();
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  std::size_t reported = trainer.warnings().size();
  while (trainer.sr_iteration() < cfg.sr_iterations) {
    const SrStepStats s = trainer.sr_step();
    if (s.iteration % cfg.log_every == 0) append(dir / "sr_log.csv", sr_log_header(), sr_log_row(s));
    if (hooks.on_sr_step) hooks.on_sr_step(s);
    flush_warnings(trainer, reported, hooks);
    if (cfg.checkpoint_every && s.iteration % cfg.checkpoint_every == 0) {
      trainer.save((dir / ("sr_" + std::to_string(s.iteration) + ".ckpt")).string());
    }
    if (cfg.sample_every && s.iteration % cfg.sample_every == 0) {
      sr_grid(trainer, dir / ("sr_" + std::to_string(s.iteration) + ".png"));
    }
  }
  trainer.save((dir / "sr.ckpt").string());
}

}  // namespace smoothsr
