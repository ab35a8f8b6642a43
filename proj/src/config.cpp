#include "smoothsr/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "smoothsr/hash.hpp"

namespace smoothsr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string fmt(std::size_t v) { return std::to_string(v); }

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("config key '" + key + "': expected 0/1/true/false, got '" + v + "'");
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<std::size_t>(key, trim(item)));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

struct Key {
  const char* name;
  const char* doc;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

#define SIZE_KEY(NAME, FIELD, DOC)                                                                    \
  Key {                                                                                               \
    NAME, DOC, [](const ExperimentConfig& c) { return fmt(std::size_t(c.FIELD)); },                   \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {                         \
          c.FIELD = parse_number<std::size_t>(k, v);                                                  \
        }                                                                                             \
  }
#define DOUBLE_KEY(NAME, FIELD, DOC)                                                                       \
  Key {                                                                                                    \
    NAME, DOC, [](const ExperimentConfig& c) { return fmt(double(c.FIELD)); },                             \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_number<double>(k, v); } \
  }
#define U64_KEY(NAME, FIELD, DOC)                                                                     \
  Key {                                                                                               \
    NAME, DOC, [](const ExperimentConfig& c) { return std::to_string(c.FIELD); },                     \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {                         \
          c.FIELD = parse_number<std::uint64_t>(k, v);                                                \
        }                                                                                             \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      SIZE_KEY("net.scale", net.scale, "upscaling factor"),
      SIZE_KEY("net.lr_size", net.lr_size, "LR side in pixels (divisible by 16)"),
      SIZE_KEY("net.z_dim", net.z_dim, "degradation code dimension"),
      SIZE_KEY("net.feat_channels", net.feat_channels, "channels of the feature volume f(x)"),
      SIZE_KEY("net.reduction", net.reduction, "channel attention squeeze ratio"),
      SIZE_KEY("net.gd_width", net.gd_width, "base width of the degradation generator"),
      SIZE_KEY("net.critic_lr_width", net.critic_lr_width, "stem width of the LR critic"),
      SIZE_KEY("net.critic_hr_width", net.critic_hr_width, "stem width of the HR critic"),
      SIZE_KEY("net.critic_hidden", net.critic_hidden, "hidden units of the critic head"),
      SIZE_KEY("net.critic_groups", net.critic_groups, "group norm groups in the critics"),
      Key{"net.f_widths", "widths of the four downsampling stages of f, comma separated",
          [](const ExperimentConfig& c) {
            std::string s;
            for (std::size_t i = 0; i < c.net.f_widths.size(); ++i) s += (i ? "," : "") + std::to_string(c.net.f_widths[i]);
            return s;
          },
          [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.net.f_widths = parse_list(k, v); }},
      SIZE_KEY("net.g_width", net.g_width, "width after the first upsampling stage of g"),
      SIZE_KEY("net.g_min_width", net.g_min_width, "floor on g stage widths"),
      SIZE_KEY("net.dense_blocks", net.dense_blocks, "dense blocks in g"),
      SIZE_KEY("net.dense_units", net.dense_units, "units per dense block"),
      SIZE_KEY("net.refine_blocks", net.refine_blocks, "same-resolution refinement blocks in g"),
      DOUBLE_KEY("loss.wgan", loss.wgan, "adversarial weight in the degradation generator loss"),
      DOUBLE_KEY("loss.mse", loss.mse, "MSE weight in the degradation generator loss"),
      DOUBLE_KEY("loss.pixel", loss.pixel, "L1 pixel weight in the SR loss"),
      DOUBLE_KEY("loss.perceptual", loss.perceptual, "perceptual weight in the SR loss"),
      DOUBLE_KEY("loss.adv", loss.adv, "adversarial weight in the SR loss"),
      DOUBLE_KEY("loss.clean", loss.clean, "weight of Sinkhorn(f(x_c), f(x_in))"),
      DOUBLE_KEY("loss.degraded", loss.degraded, "weight of Sinkhorn(f(x_d), f(x_in))"),
      DOUBLE_KEY("loss.gp", loss.gp, "gradient penalty weight"),
      DOUBLE_KEY("adam.beta1", adam.beta1, "Adam first moment decay"),
      DOUBLE_KEY("adam.beta2", adam.beta2, "Adam second moment decay"),
      DOUBLE_KEY("adam.eps", adam.eps, "Adam denominator floor"),
      DOUBLE_KEY("sinkhorn.epsilon", sinkhorn.epsilon, "entropic regularization (relative to the median cost if sinkhorn.relative)"),
      Key{"sinkhorn.relative", "1: epsilon scales with the median cost; 0: absolute",
          [](const ExperimentConfig& c) { return std::string(c.sinkhorn.relative_epsilon ? "1" : "0"); },
          [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.sinkhorn.relative_epsilon = parse_bool(k, v); }},
      SIZE_KEY("sinkhorn.max_iters", sinkhorn.max_iters, "Sinkhorn iteration cap"),
      DOUBLE_KEY("sinkhorn.tol", sinkhorn.tol, "L1 marginal violation target; 0 runs max_iters"),
      DOUBLE_KEY("alpha", alpha, "mixing coefficient for x_in, strictly inside (0,1)"),
      DOUBLE_KEY("critic_lr", critic_lr, "initial critic learning rate"),
      DOUBLE_KEY("lr", lr, "initial learning rate of generators, f and g"),
      DOUBLE_KEY("lr_decay", lr_decay, "learning rate factor per decay period"),
      SIZE_KEY("lr_decay_every", lr_decay_every, "decay period in iterations"),
      SIZE_KEY("critic_steps", critic_steps, "critic updates per generator update"),
      SIZE_KEY("batch_size", batch_size, "samples per batch"),
      SIZE_KEY("degrader_iterations", degrader_iterations, "generator updates when training the degradation GAN"),
      SIZE_KEY("sr_iterations", sr_iterations, "iterations of SR training"),
      U64_KEY("seed", seed, "seed for network initialization and training streams"),
      U64_KEY("data_seed", data_seed, "seed of the synthetic corpus"),
      SIZE_KEY("corpus_size", corpus_size, "paired training sources"),
      SIZE_KEY("heldout_size", heldout_size, "held-out sources for evaluation"),
      SIZE_KEY("log_every", log_every, "CSV log period"),
      SIZE_KEY("checkpoint_every", checkpoint_every, "checkpoint period, 0 disables"),
      SIZE_KEY("sample_every", sample_every, "PNG sample grid period, 0 disables"),
      DOUBLE_KEY("nonconvergence_warn", nonconvergence_warn, "warn when this fraction of Sinkhorn solves fails over 100 iterations"),
      Key{"out_dir", "output directory for logs, checkpoints and images",
          [](const ExperimentConfig& c) { return c.out_dir; },
          [](ExperimentConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }},
  };
  return table;
}

#undef SIZE_KEY
#undef DOUBLE_KEY
#undef U64_KEY

}  // namespace

void ExperimentConfig::validate() const {
  try {
    net.validate();
    loss.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  if (!positive(critic_lr) || !positive(lr)) throw ConfigError("learning rates must be positive");
  if (!positive(lr_decay) || lr_decay > 1.0) throw ConfigError("lr_decay must lie in (0,1]");
  if (lr_decay_every == 0) throw ConfigError("lr_decay_every must be positive");
  if (critic_steps == 0) throw ConfigError("critic_steps must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (corpus_size == 0) throw ConfigError("corpus_size must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0,1)");
  }
  if (!positive(adam.eps)) throw ConfigError("adam.eps must be positive");
  if (!positive(sinkhorn.epsilon)) throw ConfigError("sinkhorn.epsilon must be positive");
  if (sinkhorn.max_iters == 0) throw ConfigError("sinkhorn.max_iters must be positive");
  if (!(sinkhorn.tol >= 0.0)) throw ConfigError("sinkhorn.tol must be >= 0");
  if (log_every == 0) throw ConfigError("log_every must be positive");
  if (!(nonconvergence_warn >= 0.0 && nonconvergence_warn <= 1.0)) throw ConfigError("nonconvergence_warn must lie in [0,1]");
}

std::string ExperimentConfig::canonical() const {
  std::map<std::string, std::string> sorted;
  for (const auto& k : keys()) sorted[k.name] = k.get(*this);
  std::string out;
  for (const auto& [k, v] : sorted) out += k + " = " + v + "\n";
  return out;
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(canonical()); }

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  for (const auto& k : keys()) {
    if (key == k.name) {
      k.set(*this, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void ExperimentConfig::parse(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash_pos = line.find('#'); hash_pos != std::string::npos) line.erase(hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (auto [it, fresh] = seen.emplace(key, lineno); !fresh) {
      throw ConfigError("config line " + std::to_string(lineno) + ": '" + key + "' already set on line " +
                        std::to_string(it->second));
    }
    try {
      set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  validate();
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
  ExperimentConfig c;
  c.parse(text);
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

std::string ExperimentConfig::documentation() {
  const ExperimentConfig defaults;
  std::string out;
  for (const auto& k : keys()) out += std::string(k.name) + " = " + k.get(defaults) + "    # " + k.doc + "\n";
  return out;
}

double lr_schedule(std::size_t iter, double lr0, double decay, std::size_t every) {
  if (every == 0) throw std::invalid_argument("lr_schedule: zero period");
  return lr0 * std::pow(decay, static_cast<double>(iter / every));
}

}  // namespace smoothsr
