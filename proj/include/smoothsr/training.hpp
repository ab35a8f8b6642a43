#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "smoothsr/config.hpp"
#include "smoothsr/datagen.hpp"
#include "smoothsr/eval.hpp"
#include "smoothsr/losses.hpp"
#include "smoothsr/networks.hpp"

namespace smoothsr {

/// adam_step was asked to update parameters that received no gradient.
class MissingGradError : public std::runtime_error {
 public:
  explicit MissingGradError(std::vector<std::string> names);
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

/// A loss or gradient went non-finite. `dump_path` names the diagnostic dump
/// of the offending batch, empty if none could be written.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::string dump_path)
      : std::runtime_error(what), dump_path_(std::move(dump_path)) {}
  const std::string& dump_path() const { return dump_path_; }

 private:
  std::string dump_path_;
};

/// Adam moments kept outside a store, keyed by parameter name.
using MomentSet = std::map<std::string, AdamState>;

/// One bias-corrected Adam update of every parameter in `store`, then clears
/// the gradients. Moments come from the store unless `moments` is given.
/// Throws MissingGradError, before touching anything, if any parameter has
/// no gradient.
void adam_step(ParamStore& store, double lr, const AdamConfig& cfg = {}, MomentSet* moments = nullptr);

/// Variance of the 4-neighbour Laplacian of the channel-mean image, interior
/// pixels only. Lower means blurrier.
double laplacian_variance(const Image& img);

/// Update counts per network role.
struct UpdateLedger {
  std::size_t critic_updates = 0;
  std::size_t generator_updates = 0;
};

struct DegraderStepStats {
  std::size_t iteration = 0;  // generator updates completed, including this one
  double lr = 0.0, critic_lr = 0.0;
  double critic_loss = 0.0;   // last critic step
  double wasserstein = 0.0;   // mean D(real) - mean D(fake), last critic step
  double penalty = 0.0;
  double generator_loss = 0.0;
  double adversarial = 0.0;
  double mse = 0.0;
  double fake_laplacian = 0.0;  // mean laplacian_variance of G_d outputs
  double real_laplacian = 0.0;  // same for the unpaired degraded batch
  std::size_t critic_updates = 0;
  std::size_t generator_updates = 0;
};

struct SrStepStats {
  std::size_t iteration = 0;
  double lr = 0.0, critic_lr = 0.0;
  double critic_loss = 0.0;
  double wasserstein = 0.0;
  double penalty = 0.0;
  double sr_loss = 0.0;
  double pixel = 0.0, perceptual = 0.0, adversarial = 0.0;
  double robust_loss = 0.0;      // 0 when the robust step is disabled
  double sinkhorn_clean = 0.0;
  double sinkhorn_degraded = 0.0;
  double psnr = 0.0;             // batch mean PSNR of y_hat against y_c
  std::size_t sinkhorn_solves = 0;
  std::size_t sinkhorn_nonconverged = 0;
  std::size_t critic_updates = 0;
};

/// How a mini-batch of LR training inputs is degraded during SR training.
enum class DegradationSource {
  generator,  // x_d = G_d(x_c, z) with a frozen G_d
  synthetic,  // x_d from the synthetic pipeline of the corpus
};

/// Training state for both phases: the networks with their Adam moments, the
/// data corpus and the training random stream. Everything that influences
/// future iterations is part of the checkpoint.
class Trainer {
 public:
  explicit Trainer(ExperimentConfig cfg);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const ExperimentConfig& config() const { return cfg_; }
  NetworkSet& nets() { return nets_; }
  const Corpus& corpus() const { return corpus_; }
  const PerceptualNet& perceptual() const { return phi_; }

  std::size_t degrader_iteration() const { return degrader_iter_; }
  std::size_t sr_iteration() const { return sr_iter_; }
  const UpdateLedger& degrader_ledger() const { return degrader_ledger_; }
  const UpdateLedger& sr_ledger() const { return sr_ledger_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  void set_degradation_source(DegradationSource s) { source_ = s; }
  DegradationSource degradation_source() const { return source_; }

  /// critic_steps updates of D on unpaired degraded images against
  /// G_d(x_c, z), then one update of G_d.
  DegraderStepStats degrader_step();

  /// critic_steps updates of D_sr on fresh batches, then backprop 1 (L_sr
  /// through g and f on x_in), then backprop 2 (L_robust on a fresh tape,
  /// updating only f). Backprop 2 is skipped when both Sinkhorn weights are 0.
  SrStepStats sr_step();

  /// Super-resolves LR inputs [B,3,L,L] in eval mode without gradients.
  Tensor super_resolve(const Tensor& x);
  /// Features f(x) in eval mode without gradients.
  Tensor features(const Tensor& x);
  /// G_d(x_c, z) in eval mode without gradients.
  Tensor degrade(const Tensor& x_c, const Tensor& z);

  /// Cached corpus entry. Indices below corpus_size are the training set;
  /// the next heldout_size indices are held out.
  const Sample& sample(std::size_t index);
  const Image& unpaired(std::size_t index);
  std::vector<std::size_t> heldout_indices() const;

  /// Checkpoint with config text and hash, counters, RNG state, every
  /// parameter store and all Adam moments.
  void save(const std::string& path) const;
  /// Restores a checkpoint into this trainer. With `strict`, the stored
  /// config hash must equal this trainer's; otherwise only the network
  /// shapes must agree.
  void load(const std::string& path, bool strict = true);
  /// Trainer rebuilt from the config stored in a checkpoint, then loaded.
  static std::unique_ptr<Trainer> resume(const std::string& path);
  /// The config stored in a checkpoint.
  static ExperimentConfig checkpoint_config(const std::string& path);

  /// Hook for checking each loss before its backward pass; the default
  /// throws NumericalError with a batch dump when a value is non-finite.
  void check_finite(const char* what, double value, const std::vector<std::pair<std::string, Tensor>>& batch);

 private:
  struct Batch {
    Tensor y_c, x_c, x_d, x_in;
  };
  std::vector<std::size_t> draw_indices(std::size_t range);
  Tensor draw_z();
  Batch sr_batch();
  void track_sinkhorn(const SinkhornStats& s);

  ExperimentConfig cfg_;
  Corpus corpus_;
  NetworkSet nets_;
  PerceptualNet phi_;
  Rng rng_;
  DegradationSource source_ = DegradationSource::generator;

  std::size_t degrader_iter_ = 0;
  std::size_t sr_iter_ = 0;
  UpdateLedger degrader_ledger_;
  UpdateLedger sr_ledger_;
  MomentSet robust_moments_;  // f's moments for backprop 2
  std::deque<std::pair<std::size_t, std::size_t>> sinkhorn_window_;  // (solves, nonconverged) per iteration
  std::vector<std::string> warnings_;

  std::map<std::size_t, Sample> sample_cache_;
  std::map<std::size_t, Image> unpaired_cache_;
};

/// CSV header and row formatting for the two loss logs. Doubles use %.17g so
/// logs from identical runs compare byte for byte.
std::string degrader_log_header();
std::string degrader_log_row(const DegraderStepStats& s);
std::string sr_log_header();
std::string sr_log_row(const SrStepStats& s);

/// PSNR/SSIM, Fréchet distance, robustness and smoothness of the current
/// model on the given corpus indices (normally heldout_indices()).
MetricReport evaluate(Trainer& trainer, const std::vector<std::size_t>& indices, std::size_t draws = 8);

/// Progress callbacks for the phase drivers.
struct TrainHooks {
  std::function<void(const DegraderStepStats&)> on_degrader_step;
  std::function<void(const SrStepStats&)> on_sr_step;
  std::function<void(const std::string&)> on_warning;
};

/// Runs degrader steps until config().degrader_iterations, appending to
/// <out_dir>/degrader_log.csv and writing checkpoints and sample grids at
/// the configured periods, plus a final <out_dir>/degrader.ckpt.
void train_degradation_gan(Trainer& trainer, const TrainHooks& hooks = {});

/// Same for SR training up to config().sr_iterations; final checkpoint is
/// <out_dir>/sr.ckpt.
void train_sr(Trainer& trainer, const TrainHooks& hooks = {});

}  // namespace smoothsr
