// Command-line front end: data generation, both training phases, metrics and
// probes. Exit codes: 0 success, 1 usage or input error, 2 numerical failure.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "smoothsr/hash.hpp"
#include "smoothsr/training.hpp"

using namespace smoothsr;
namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::string checkpoint;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* app, Common& c, bool with_checkpoint = true) {
  app->add_option("--config", c.config, "config file (key = value lines)")->check(CLI::ExistingFile);
  if (with_checkpoint) app->add_option("--checkpoint", c.checkpoint, "checkpoint file")->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "output directory");
  app->add_option_function<std::uint64_t>(
      "--seed", [&c](std::uint64_t s) { c.seed = s, c.seed_set = true; }, "training seed");
  app->add_option("--set", c.overrides, "extra config assignment key=value (repeatable)");
}

void apply_overrides(ExperimentConfig& cfg, const Common& c) {
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (c.seed_set) cfg.seed = c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  cfg.validate();
}

/// Config from --config, else from the checkpoint, else defaults; then
/// --set, --seed and --out on top.
ExperimentConfig resolve_config(const Common& c) {
  ExperimentConfig cfg;
  if (!c.config.empty()) {
    cfg = ExperimentConfig::from_file(c.config);
  } else if (!c.checkpoint.empty()) {
    cfg = Trainer::checkpoint_config(c.checkpoint);
  }
  apply_overrides(cfg, c);
  return cfg;
}

std::unique_ptr<Trainer> trainer_for(const Common& c) {
  auto t = std::make_unique<Trainer>(resolve_config(c));
  if (!c.checkpoint.empty()) t->load(c.checkpoint, false);
  return t;
}

fs::path out_dir(const Common& c, const ExperimentConfig& cfg) {
  const fs::path p = c.out.empty() ? fs::path(cfg.out_dir) : fs::path(c.out);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

void require_checkpoint(const Common& c, const char* cmd) {
  if (c.checkpoint.empty()) throw UsageError(std::string(cmd) + " needs --checkpoint");
}

// --- subcommands ------------------------------------------------------------

int gen_data(const Common& c, std::size_t count, bool images) {
  const ExperimentConfig cfg = resolve_config(c);
  const fs::path dir = out_dir(c, cfg);
  const Corpus corpus(c.seed_set ? c.seed : cfg.data_seed, cfg.net.hr_size(), cfg.net.scale);
  write_text(dir / "manifest.csv", corpus.manifest(count));
  std::vector<Image> preview;
  for (std::size_t i = 0; i < count; ++i) {
    const Sample s = corpus.sample(i);
    if (images) {
      char name[32];
      std::snprintf(name, sizeof name, "%05zu", i);
      write_png((dir / (std::string(name) + "_hr.png")).string(), s.y_c);
      write_png((dir / (std::string(name) + "_lr.png")).string(), s.x_c);
      write_png((dir / (std::string(name) + "_degraded.png")).string(), s.x_d);
    }
    if (i < 8) {
      preview.push_back(bicubic_upsample(s.x_c, cfg.net.scale));
      preview.push_back(bicubic_upsample(s.x_d, cfg.net.scale));
      preview.push_back(s.y_c);
    }
  }
  if (!preview.empty()) write_png((dir / "preview.png").string(), make_grid(preview, 3));
  std::printf("wrote %zu samples to %s, content hash %016llx\n", count, dir.string().c_str(),
              static_cast<unsigned long long>(corpus.content_hash(count)));
  return 0;
}

TrainHooks print_hooks(std::size_t every) {
  TrainHooks h;
  h.on_degrader_step = [every](const DegraderStepStats& s) {
    if (s.iteration % every == 0) {
      std::printf("degrader %6zu  critic %.4f  gen %.4f  mse %.5f  laplacian fake %.5f real %.5f\n", s.iteration,
                  s.critic_loss, s.generator_loss, s.mse, s.fake_laplacian, s.real_laplacian);
      std::fflush(stdout);
    }
  };
  h.on_sr_step = [every](const SrStepStats& s) {
    if (s.iteration % every == 0) {
      std::printf("sr %6zu  critic %.4f  sr %.4f  robust %.4f  psnr %.2f\n", s.iteration, s.critic_loss, s.sr_loss,
                  s.robust_loss, s.psnr);
      std::fflush(stdout);
    }
  };
  h.on_warning = [](const std::string& w) { std::fprintf(stderr, "warning: %s\n", w.c_str()); };
  return h;
}

int train_degrader(const Common& c, std::size_t print_every) {
  auto t = trainer_for(c);
  train_degradation_gan(*t, print_hooks(print_every));
  std::printf("degrader checkpoint: %s\n", (fs::path(t->config().out_dir) / "degrader.ckpt").string().c_str());
  return 0;
}

int train_sr_cmd(const Common& c, std::size_t print_every, bool synthetic) {
  auto t = trainer_for(c);
  if (synthetic) t->set_degradation_source(DegradationSource::synthetic);
  train_sr(*t, print_hooks(print_every));
  std::printf("sr checkpoint: %s\n", (fs::path(t->config().out_dir) / "sr.ckpt").string().c_str());
  return 0;
}

int eval_cmd(const Common& c, std::size_t draws) {
  require_checkpoint(c, "eval");
  auto t = trainer_for(c);
  const fs::path dir = out_dir(c, t->config());
  const MetricReport r = evaluate(*t, t->heldout_indices(), draws);
  write_text(dir / "metrics.csv", r.csv());
  std::printf("held-out sources      %zu\n", r.indices.size());
  std::printf("PSNR degraded input   %.3f dB (bicubic %.3f dB)\n", r.mean_psnr_degraded(), r.mean_psnr_bicubic());
  std::printf("PSNR clean input      %.3f dB\n", r.mean_psnr_clean());
  std::printf("SSIM degraded input   %.4f\n", r.mean_ssim_degraded());
  std::printf("Frechet (PerceptualNet embedding, not Inception FID)  %.6g (bicubic %.6g)\n", r.frechet,
              r.frechet_bicubic);
  std::printf("robustness            %.6g (bicubic %.6g)\n", r.robustness.score, r.robustness.bicubic_score);
  std::printf("report: %s\n", (dir / "metrics.csv").string().c_str());
  return 0;
}

int robustness_cmd(const Common& c, std::size_t draws) {
  require_checkpoint(c, "robustness");
  auto t = trainer_for(c);
  const fs::path dir = out_dir(c, t->config());
  std::vector<Image> sources;
  for (std::size_t i : t->heldout_indices()) sources.push_back(t->sample(i).x_c);
  const SrFn model = [&t](const Tensor& x) { return t->super_resolve(x); };
  const DegradeFn degrade = [&t](const Tensor& x, const Tensor& z) { return t->degrade(x, z); };
  const auto r = robustness_test(model, degrade, sources, t->config().net.scale, t->config().net.z_dim, draws);
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "model,variants,score\nsr,generator,%.17g\nsr,synthetic,%.17g\nsr,combined,%.17g\n"
                "bicubic,generator,%.17g\nbicubic,synthetic,%.17g\nbicubic,combined,%.17g\n",
                r.generator, r.synthetic, r.score, r.bicubic_generator, r.bicubic_synthetic, r.bicubic_score);
  write_text(dir / "robustness.csv", buf);
  std::printf("robustness over %zu sources x %zu draws: %.6g (bicubic %.6g); lower is more robust\n", r.sources,
              r.draws, r.score, r.bicubic_score);
  return 0;
}

int smoothness_cmd(const Common& c, const std::string& compare) {
  require_checkpoint(c, "smoothness");
  std::vector<std::pair<std::string, std::vector<SmoothnessPoint>>> curves;
  fs::path dir;
  auto run = [&](const std::string& ckpt, const std::string& label) {
    Common cc = c;
    cc.checkpoint = ckpt;
    auto t = trainer_for(cc);
    if (dir.empty()) dir = out_dir(c, t->config());
    std::vector<Image> xc, xd;
    for (std::size_t i : t->heldout_indices()) {
      xc.push_back(t->sample(i).x_c);
      xd.push_back(t->sample(i).x_d);
    }
    const SrFn feats = [&t](const Tensor& x) { return t->features(x); };
    curves.emplace_back(label, smoothness_test(feats, to_batch(xc), to_batch(xd), default_alpha_grid(),
                                               t->config().sinkhorn));
  };
  run(c.checkpoint, fs::path(c.checkpoint).stem().string());
  if (!compare.empty()) run(compare, fs::path(compare).stem().string() + "_compare");
  write_text(dir / "smoothness.csv", smoothness_csv(curves));
  write_png((dir / "smoothness.png").string(), plot_curves(curves));
  for (const auto& [name, pts] : curves) {
    std::printf("%s:", name.c_str());
    for (const auto& p : pts) std::printf(" %.2f:%.4g", p.alpha, p.distance);
    std::printf("\n");
  }
  return 0;
}

// Central differences against backward() on sampled parameters of every
// network at a small size.
int gradcheck_cmd(const Common& c, std::size_t samples) {
  ExperimentConfig cfg = resolve_config(c);
  NetSpec& s = cfg.net;
  s.lr_size = 16;
  s.scale = 2;
  s.z_dim = 4;
  s.feat_channels = 8;
  s.reduction = 2;
  s.gd_width = 4;
  s.critic_lr_width = s.critic_hr_width = 4;
  s.critic_hidden = 8;
  s.f_widths = {8, 8, 8, 8};
  s.g_width = 8;
  s.g_min_width = 4;
  s.dense_blocks = s.dense_units = s.refine_blocks = 1;
  NetworkSet nets(s, cfg.seed);
  Rng rng(derive_seed(cfg.seed, "gradcheck"));
  const Tensor x = Tensor::uniform({2, 3, 16, 16}, rng);
  const Tensor z = Tensor::randn({2, s.z_dim}, rng);
  const Tensor h = nets.f.forward(x, {NormMode::eval, true}).detach();
  const Tensor y = Tensor::uniform({2, 3, 32, 32}, rng);
  const ForwardOptions train{NormMode::train, false};

  struct Case {
    Network* net;
    std::function<Tensor()> out;
  };
  std::vector<Case> cases{
      {&nets.gd, [&] { return nets.gd.forward(x, z, train); }},
      {&nets.d, [&] { return nets.d.forward(x, train); }},
      {&nets.f, [&] { return nets.f.forward(x, train); }},
      {&nets.g, [&] { return nets.g.forward(h, train); }},
      {&nets.dsr, [&] { return nets.dsr.forward(y, train); }},
  };
  bool ok = true;
  for (auto& cs : cases) {
    Network& n = *cs.net;
    const Tensor probe = Tensor::randn(cs.out().shape(), rng);
    auto loss = [&] { return sum(mul(cs.out(), probe)); };
    n.params().zero_grad();
    backward(loss());
    std::vector<std::pair<std::string, std::size_t>> coords;
    std::vector<std::string> names = n.params().names();
    for (std::size_t k = 0; k < samples; ++k) {
      const auto& name = names[rng() % names.size()];
      coords.emplace_back(name, rng() % n.params().at(name).numel());
    }
    double worst = 0.0;
    std::size_t failures = 0;
    for (const auto& [name, i] : coords) {
      Tensor& p = n.params().at(name);
      const double analytic = p.has_grad() ? p.grad().data()[i] : 0.0;
      const double orig = p.data()[i];
      auto eval_at = [&](double v) {
        p.mutable_data()[i] = v;
        NoGradGuard ng;
        return loss().item();
      };
      const double h_step = 1e-5;
      const double numeric = (eval_at(orig + h_step) - eval_at(orig - h_step)) / (2 * h_step);
      p.mutable_data()[i] = orig;
      const double err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      worst = std::max(worst, err);
      failures += err > 1e-4;
    }
    n.params().zero_grad();
    std::printf("%-4s %3zu coordinates  max rel err %.3e  %s\n", n.name().c_str(), coords.size(), worst,
                failures ? "FAIL" : "ok");
    ok = ok && failures == 0;
  }
  return ok ? 0 : 2;
}

int demo_cmd(const Common& c, const std::string& input, const std::string& output) {
  require_checkpoint(c, "demo");
  auto t = trainer_for(c);
  const auto& cfg = t->config();
  Image lr;
  if (input.empty()) {
    lr = t->sample(t->heldout_indices().empty() ? 0 : t->heldout_indices().front()).x_d;
  } else {
    lr = read_png(input);
    if (lr.height != cfg.net.lr_size || lr.width != cfg.net.lr_size) {
      throw UsageError("demo input must be " + std::to_string(cfg.net.lr_size) + "x" +
                       std::to_string(cfg.net.lr_size) + ", got " + std::to_string(lr.width) + "x" +
                       std::to_string(lr.height));
    }
  }
  const Image sr = from_batch(t->super_resolve(to_batch({lr})), 0);
  const fs::path out = output.empty() ? out_dir(c, cfg) / "demo.png" : fs::path(output);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_png(out.string(), sr);
  const fs::path side = out.parent_path() / (out.stem().string() + "_compare.png");
  write_png(side.string(), make_grid({bicubic_upsample(lr, cfg.net.scale), sr}, 2));
  std::printf("wrote %s and %s\n", out.string().c_str(), side.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust face super-resolution with Sinkhorn feature smoothing"};
  app.require_subcommand(1);

  Common common;
  std::size_t count = 64, print_every = 50, draws = 8, samples = 12;
  bool images = false, synthetic = false;
  std::string compare, input, output;

  auto* gen = app.add_subcommand("gen-data", "render the synthetic corpus, manifest and preview grid");
  add_common(gen, common, false);
  gen->add_option("--count", count, "number of samples")->check(CLI::PositiveNumber);
  gen->add_flag("--images", images, "also write every sample as PNG");

  auto* tdeg = app.add_subcommand("train-degrader", "train the degradation GAN (resumes from --checkpoint)");
  add_common(tdeg, common);
  tdeg->add_option("--print-every", print_every, "console progress period")->check(CLI::PositiveNumber);

  auto* tsr = app.add_subcommand("train-sr", "train f and g; --checkpoint supplies G_d or resumes");
  add_common(tsr, common);
  tsr->add_option("--print-every", print_every, "console progress period")->check(CLI::PositiveNumber);
  tsr->add_flag("--synthetic", synthetic, "degrade training inputs with the synthetic pipeline instead of G_d");

  auto* ev = app.add_subcommand("eval", "PSNR/SSIM, Frechet distance, robustness and smoothness on held-out data");
  add_common(ev, common);
  ev->add_option("--draws", draws, "degradation draws per source")->check(CLI::Range(2, 1000));

  auto* rob = app.add_subcommand("robustness", "spread of SR outputs across degradations of one source");
  add_common(rob, common);
  rob->add_option("--draws", draws, "degradation draws per source")->check(CLI::Range(2, 1000));

  auto* smo = app.add_subcommand("smoothness", "feature distance along the clean-to-degraded path");
  add_common(smo, common);
  smo->add_option("--compare", compare, "second checkpoint drawn on the same plot")->check(CLI::ExistingFile);

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every network's gradients");
  add_common(gc, common, false);
  gc->add_option("--samples", samples, "coordinates per network")->check(CLI::PositiveNumber);

  auto* demo = app.add_subcommand("demo", "super-resolve one LR image to PNG");
  add_common(demo, common);
  demo->add_option("--input", input, "LR PNG; defaults to a held-out degraded sample")->check(CLI::ExistingFile);
  demo->add_option("--output", output, "output PNG");

  auto* keys = app.add_subcommand("config-keys", "list every config key with its default and meaning");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (keys->parsed()) {
      std::fputs(ExperimentConfig::documentation().c_str(), stdout);
      return 0;
    }
    if (gen->parsed()) return gen_data(common, count, images);
    if (tdeg->parsed()) return train_degrader(common, print_every);
    if (tsr->parsed()) return train_sr_cmd(common, print_every, synthetic);
    if (ev->parsed()) return eval_cmd(common, draws);
    if (rob->parsed()) return robustness_cmd(common, draws);
    if (smo->parsed()) return smoothness_cmd(common, compare);
    if (gc->parsed()) return gradcheck_cmd(common, samples);
    if (demo->parsed()) return demo_cmd(common, input, output);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
