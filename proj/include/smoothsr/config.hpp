#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "smoothsr/losses.hpp"
#include "smoothsr/networks.hpp"
#include "smoothsr/sinkhorn.hpp"

namespace smoothsr {

/// Malformed config text, unknown key or out-of-range value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamConfig {
  double beta1 = 0.0;
  double beta2 = 0.9;
  double eps = 1e-8;
};

/// Every knob of an experiment. Text form is flat `key = value` lines; `#`
/// starts a comment. See ExperimentConfig::documentation() for the keys.
struct ExperimentConfig {
  NetSpec net;
  LossWeights loss;
  AdamConfig adam;
  SinkhornOptions sinkhorn;

  double alpha = 0.3;
  double critic_lr = 4e-4;
  double lr = 1e-4;
  double lr_decay = 0.5;
  std::size_t lr_decay_every = 10000;
  std::size_t critic_steps = 5;

  std::size_t batch_size = 8;
  std::size_t degrader_iterations = 2000;
  std::size_t sr_iterations = 2000;

  std::uint64_t seed = 1;        // network init and training streams
  std::uint64_t data_seed = 7;   // corpus
  std::size_t corpus_size = 1024;  // paired training sources
  std::size_t heldout_size = 32;

  std::size_t log_every = 1;
  std::size_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::size_t sample_every = 0;      // 0 disables PNG grids
  double nonconvergence_warn = 0.2;  // over a 100-iteration window
  std::string out_dir = "runs/default";

  /// Throws ConfigError on any violated invariant.
  void validate() const;

  /// Sorted `key = value` lines, doubles printed round-trip exact.
  std::string canonical() const;
  /// FNV-1a of canonical(); stamps every checkpoint.
  std::uint64_t hash() const;

  /// Applies one `key = value` assignment. Unknown keys throw.
  void set(const std::string& key, const std::string& value);
  /// Parses a whole config text on top of the current values.
  void parse(const std::string& text);
  static ExperimentConfig from_text(const std::string& text);
  static ExperimentConfig from_file(const std::string& path);

  /// All keys with a one-line description each.
  static std::string documentation();
};

/// lr0 * decay^floor(iter / every).
double lr_schedule(std::size_t iter, double lr0, double decay = 0.5, std::size_t every = 10000);

}  // namespace smoothsr
