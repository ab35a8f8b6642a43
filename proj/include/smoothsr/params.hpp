#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "smoothsr/ops.hpp"

namespace smoothsr {

enum class InitKind { he_normal, zeros, ones, constant };

struct Init {
  InitKind kind = InitKind::he_normal;
  double value = 0.0;       // for InitKind::constant
  std::size_t fan_in = 0;   // for InitKind::he_normal

  static Init he(std::size_t fan_in) { return {InitKind::he_normal, 0.0, fan_in}; }
  static Init zeros() { return {InitKind::zeros, 0.0, 0}; }
  static Init ones() { return {InitKind::ones, 0.0, 0}; }
  static Init constant(double v) { return {InitKind::constant, v, 0}; }
};

/// Adam moments for one parameter.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

/// Named trainable tensors plus non-trainable buffers (normalization running
/// statistics). Names are hierarchical ("f.down2.rca.conv1.w") and kept in
/// insertion order, which is the order of every listing and file.
class ParamStore {
 public:
  /// Returns the parameter, creating it with `init` if absent. Creating a new
  /// name after seal() throws. Initial values are a function of (seed, name).
  Tensor& param(const std::string& name, const Shape& shape, const Init& init);
  Tensor& buffer(const std::string& name, const Shape& shape, const Init& init);

  bool contains(const std::string& name) const;
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  AdamState& adam(const std::string& name);
  const AdamState& adam(const std::string& name) const;

  const std::vector<std::string>& names() const { return param_order_; }
  const std::vector<std::string>& buffer_names() const { return buffer_order_; }
  std::size_t size() const { return param_order_.size(); }
  std::size_t numel() const;

  void seal() { sealed_ = true; }
  bool sealed() const { return sealed_; }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  std::uint64_t seed() const { return seed_; }

  void zero_grad();

  /// One line per parameter: "name [shape] count", then a total line.
  std::string manifest() const;

  /// Binary round trip of values, Adam state and buffers. load() requires the
  /// same names and shapes as the receiving store.
  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  struct Entry {
    Tensor value;
    AdamState adam;
  };
  Tensor make(const std::string& name, const Shape& shape, const Init& init, bool trainable) const;

  std::map<std::string, Entry> params_;
  std::map<std::string, Tensor> buffers_;
  std::vector<std::string> param_order_;
  std::vector<std::string> buffer_order_;
  bool sealed_ = false;
  std::uint64_t seed_ = 0;
};

/// Builder context handed to blocks: a store, a name prefix and the forward
/// mode. With `frozen`, parameters are returned detached so no gradient
/// reaches them.
class Scope {
 public:
  Scope(ParamStore& store, std::string prefix, NormMode mode, bool frozen = false)
      : store_(&store), prefix_(std::move(prefix)), mode_(mode), frozen_(frozen) {}

  Scope child(const std::string& name) const;
  Tensor param(const std::string& name, const Shape& shape, const Init& init) const;
  Tensor& buffer(const std::string& name, const Shape& shape, const Init& init) const;
  std::string full_name(const std::string& name) const;

  NormMode mode() const { return mode_; }
  bool frozen() const { return frozen_; }
  ParamStore& store() const { return *store_; }

 private:
  ParamStore* store_;
  std::string prefix_;
  NormMode mode_;
  bool frozen_;
};

// Binary helpers shared by checkpoint writers.
namespace io {
void write_u64(std::ostream& os, std::uint64_t v);
std::uint64_t read_u64(std::istream& is);
void write_string(std::ostream& os, const std::string& s);
std::string read_string(std::istream& is);
void write_doubles(std::ostream& os, const std::vector<double>& v);
std::vector<double> read_doubles(std::istream& is);
}  // namespace io

}  // namespace smoothsr
