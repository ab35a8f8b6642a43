#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace smoothsr {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised for malformed shapes, failed broadcasts and bad op arguments.
class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for misuse of the backward graph (non-scalar loss, stale or mutated graph).
class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a second-order pass reaches an op whose backward rule is not
/// expressed in differentiable ops.
class UnsupportedDoubleBackward : public GraphError {
 public:
  explicit UnsupportedDoubleBackward(const std::string& op)
      : GraphError("double backward not supported by op '" + op + "'"), op_(op) {}
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

class Tensor;
struct Node;
struct TapeState;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::optional<std::vector<double>> grad;
  std::shared_ptr<Node> node;
  std::uint64_t version = 0;
};

/// Dense row-major array of doubles with optional reverse-mode graph linkage.
///
/// A Tensor is a cheap handle; copies share storage. Ops never write into
/// their inputs. Only leaves (tensors without a producing node) may be
/// mutated, and every mutation bumps a version counter that the backward
/// pass checks against the version recorded when the graph was built.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false);
  static Tensor uniform(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0,
                        bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> data() const;
  std::vector<double> to_vector() const;
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  /// Writable view of a leaf's storage. Bumps the version counter.
  std::span<double> mutable_data();

  bool requires_grad() const;
  bool is_leaf() const;
  Tensor& set_requires_grad(bool flag);

  /// Accumulated gradient of a leaf; undefined Tensor if none was populated.
  Tensor grad() const;
  bool has_grad() const;
  void zero_grad();
  void accumulate_grad(std::span<const double> g);

  Tensor detach() const;
  Tensor clone() const;

  std::uint64_t version() const;
  const std::shared_ptr<Node>& node() const;
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// ---------------------------------------------------------------------------
// Graph recording

/// Backward rule: receives the op's output, the incoming gradient and which
/// inputs need a gradient; returns one gradient per input (undefined where
/// not needed). Rules built from ordinary ops are differentiable again.
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& out, const Tensor& grad_out,
                                                     const std::vector<bool>& needs)>;

struct TapeState {
  std::uint64_t id = 0;
  std::uint64_t epoch = 0;
};

struct Node {
  std::string op;
  std::uint64_t seq = 0;
  std::shared_ptr<TapeState> tape;
  std::uint64_t epoch = 0;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::vector<std::uint64_t> input_versions;
  std::vector<bool> needs;
  std::weak_ptr<TensorImpl> output;
  BackwardFn backward;
  bool double_backward = true;
};

/// Recording context for one forward (or backward) pass.
///
/// Nodes created while a tape is active are stamped with its id and epoch and
/// appended to its record list in creation order, which is a topological
/// order. `reset()` bumps the epoch; graphs recorded before the reset become
/// stale and are rejected by later ops and by backward.
class GraphTape {
 public:
  GraphTape();
  GraphTape(const GraphTape&) = delete;
  GraphTape& operator=(const GraphTape&) = delete;

  class Activation {
   public:
    explicit Activation(GraphTape& tape);
    ~Activation();
    Activation(const Activation&) = delete;
    Activation& operator=(const Activation&) = delete;

   private:
    GraphTape* previous_;
  };

  [[nodiscard]] Activation activate() { return Activation(*this); }
  void reset();

  std::uint64_t id() const { return state_->id; }
  std::uint64_t epoch() const { return state_->epoch; }
  std::size_t size() const { return records_.size(); }
  /// Op names in recording order.
  std::vector<std::string> ops() const;

  void record(const std::shared_ptr<Node>& node);
  const std::shared_ptr<TapeState>& state() const { return state_; }

 private:
  std::shared_ptr<TapeState> state_;
  std::vector<std::weak_ptr<Node>> records_;
};

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op result and, when gradients are being recorded and any input
/// participates, links it to a new graph node.
Tensor make_result(Shape shape, std::vector<double> data, std::string_view op,
                   std::initializer_list<Tensor> inputs, BackwardFn backward,
                   bool double_backward = true);
Tensor make_result(Shape shape, std::vector<double> data, std::string_view op,
                   const std::vector<Tensor>& inputs, BackwardFn backward,
                   bool double_backward = true);

/// Reverse sweep from a scalar loss; accumulates into every reachable leaf
/// that requires grad.
void backward(const Tensor& loss);

/// Gradients of `output` with respect to `inputs` (leaves or intermediates).
/// With `create_graph`, the backward rules are recorded on the active tape so
/// the result can itself be differentiated.
std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs,
                         bool create_graph = false);

/// Ids of every tape that recorded a node reachable from `output`.
std::vector<std::uint64_t> graph_tape_ids(const Tensor& output);

}  // namespace smoothsr
