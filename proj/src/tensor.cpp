#include "smoothsr/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "smoothsr/ops.hpp"

namespace smoothsr {

namespace {

std::atomic<std::uint64_t> next_tape_id{1};
std::atomic<std::uint64_t> next_node_seq{1};

thread_local bool tls_grad_enabled = true;
thread_local GraphTape* tls_active_tape = nullptr;

const std::shared_ptr<TapeState>& default_tape_state() {
  thread_local std::shared_ptr<TapeState> state = std::make_shared<TapeState>();
  return state;
}

bool is_stale(const Node& node) { return node.tape && node.epoch != node.tape->epoch; }

void check_not_stale(const Node& node) {
  if (is_stale(node)) {
    throw GraphError("graph reuse after tape reset: op '" + node.op + "' belongs to tape " +
                     std::to_string(node.tape->id) + " epoch " + std::to_string(node.epoch) +
                     ", tape is now at epoch " + std::to_string(node.tape->epoch));
  }
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
  if (shape_numel(shape) != data.size()) {
    throw TensorError("shape " + shape_str(shape) + " holds " +
                      std::to_string(shape_numel(shape)) + " values, got " +
                      std::to_string(data.size()));
  }
  for (auto d : shape) {
    if (d == 0) throw TensorError("zero extent in shape " + shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }
Tensor Tensor::ones(Shape shape, bool requires_grad) { return full(std::move(shape), 1.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi, bool requires_grad) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw TensorError("undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw TensorError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
  if (!impl_) throw TensorError("undefined tensor");
  return impl_->data;
}

std::vector<double> Tensor::to_vector() const {
  auto d = data();
  return {d.begin(), d.end()};
}

double Tensor::item() const {
  if (numel() != 1) throw TensorError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw TensorError("index rank mismatch for shape " + shape_str(s));
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw TensorError("index out of range for shape " + shape_str(s));
    off = off * s[axis] + i;
    ++axis;
  }
  return impl_->data[off];
}

std::span<double> Tensor::mutable_data() {
  if (!impl_) throw TensorError("undefined tensor");
  if (impl_->node) throw GraphError("cannot mutate a non-leaf tensor produced by '" + impl_->node->op + "'");
  ++impl_->version;
  return impl_->data;
}

bool Tensor::requires_grad() const { return impl_ && (impl_->requires_grad || impl_->node); }

bool Tensor::is_leaf() const { return impl_ && !impl_->node; }

Tensor& Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw GraphError("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = flag;
  return *this;
}

Tensor Tensor::grad() const {
  if (!impl_ || !impl_->grad) return {};
  return Tensor(impl_->shape, *impl_->grad);
}

bool Tensor::has_grad() const { return impl_ && impl_->grad.has_value(); }

void Tensor::zero_grad() {
  if (impl_) impl_->grad.reset();
}

void Tensor::accumulate_grad(std::span<const double> g) {
  if (g.size() != numel()) throw TensorError("gradient size mismatch for " + shape_str(shape()));
  if (!impl_->grad) {
    impl_->grad.emplace(g.begin(), g.end());
    return;
  }
  auto& dst = *impl_->grad;
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape();
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  auto t = detach();
  t.impl_->requires_grad = impl_->requires_grad && !impl_->node;
  return t;
}

std::uint64_t Tensor::version() const { return impl_ ? impl_->version : 0; }

const std::shared_ptr<Node>& Tensor::node() const {
  static const std::shared_ptr<Node> none;
  return impl_ ? impl_->node : none;
}

// ---------------------------------------------------------------------------
// Tapes and grad mode

GraphTape::GraphTape() : state_(std::make_shared<TapeState>()) { state_->id = next_tape_id++; }

GraphTape::Activation::Activation(GraphTape& tape) : previous_(tls_active_tape) {
  tls_active_tape = &tape;
}

GraphTape::Activation::~Activation() { tls_active_tape = previous_; }

void GraphTape::reset() {
  ++state_->epoch;
  records_.clear();
}

std::vector<std::string> GraphTape::ops() const {
  std::vector<std::string> out;
  out.reserve(records_.size());
  for (const auto& w : records_) {
    auto n = w.lock();
    out.push_back(n ? n->op : std::string("<released>"));
  }
  return out;
}

void GraphTape::record(const std::shared_ptr<Node>& node) { records_.push_back(node); }

bool grad_enabled() { return tls_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(tls_grad_enabled) { tls_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { tls_grad_enabled = previous_; }

GradModeGuard::GradModeGuard(bool enabled) : previous_(tls_grad_enabled) { tls_grad_enabled = enabled; }
GradModeGuard::~GradModeGuard() { tls_grad_enabled = previous_; }

Tensor make_result(Shape shape, std::vector<double> data, std::string_view op,
                   std::initializer_list<Tensor> inputs, BackwardFn backward, bool double_backward) {
  return make_result(std::move(shape), std::move(data), op, std::vector<Tensor>(inputs),
                     std::move(backward), double_backward);
}

Tensor make_result(Shape shape, std::vector<double> data, std::string_view op,
                   const std::vector<Tensor>& inputs, BackwardFn backward, bool double_backward) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  if (!tls_grad_enabled) return Tensor(std::move(impl));

  bool any = false;
  for (const auto& in : inputs) {
    if (in.requires_grad()) any = true;
  }
  if (!any) return Tensor(std::move(impl));

  auto node = std::make_shared<Node>();
  node->op = std::string(op);
  node->seq = next_node_seq++;
  node->inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.node()) check_not_stale(*in.node());
    node->inputs.push_back(in.impl());
    node->input_versions.push_back(in.version());
    node->needs.push_back(in.requires_grad());
  }
  node->backward = std::move(backward);
  node->double_backward = double_backward;
  if (tls_active_tape) {
    node->tape = tls_active_tape->state();
    tls_active_tape->record(node);
  } else {
    node->tape = default_tape_state();
  }
  node->epoch = node->tape->epoch;
  node->output = impl;
  impl->node = std::move(node);
  return Tensor(std::move(impl));
}

// ---------------------------------------------------------------------------
// Reverse sweep

namespace {

std::vector<Node*> reverse_topological(const Tensor& output) {
  std::vector<Node*> order;
  if (!output.node()) return order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{output.node().get()};
  seen.insert(stack.back());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& in : n->inputs) {
      Node* p = in->node.get();
      if (p && seen.insert(p).second) stack.push_back(p);
    }
  }
  // Parents are always created before children, so descending sequence
  // numbers give a valid reverse topological order.
  std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->seq > b->seq; });
  return order;
}

struct SweepResult {
  std::unordered_map<Node*, Tensor> node_grads;
  std::unordered_map<TensorImpl*, Tensor> leaf_grads;
};

void accumulate(Tensor& slot, const Tensor& g) { slot = slot.defined() ? add(slot, g) : g; }

SweepResult sweep(const Tensor& output, bool create_graph) {
  SweepResult r;
  GradModeGuard mode(create_graph);
  const Tensor seed = Tensor::ones(output.shape());
  if (!output.node()) {
    r.leaf_grads[output.impl().get()] = seed;
    return r;
  }
  r.node_grads[output.node().get()] = seed;
  for (Node* n : reverse_topological(output)) {
    auto it = r.node_grads.find(n);
    if (it == r.node_grads.end()) continue;
    check_not_stale(*n);
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      if (n->inputs[i]->version != n->input_versions[i]) {
        throw GraphError("graph reuse after mutation: input " + std::to_string(i) + " of op '" +
                         n->op + "' was modified after the graph was recorded");
      }
    }
    if (create_graph && !n->double_backward) throw UnsupportedDoubleBackward(n->op);
    const Tensor g_out = it->second;
    auto out_impl = n->output.lock();
    if (!out_impl) throw GraphError("output of op '" + n->op + "' was released before backward");
    auto grads = n->backward(Tensor(std::move(out_impl)), g_out, n->needs);
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      if (!n->needs[i] || i >= grads.size() || !grads[i].defined()) continue;
      const auto& in = n->inputs[i];
      if (grads[i].shape() != in->shape) {
        throw GraphError("op '" + n->op + "' produced gradient of shape " +
                         shape_str(grads[i].shape()) + " for input of shape " + shape_str(in->shape));
      }
      if (in->node) {
        accumulate(r.node_grads[in->node.get()], grads[i]);
      } else if (in->requires_grad) {
        accumulate(r.leaf_grads[in.get()], grads[i]);
      }
    }
  }
  return r;
}

void require_scalar(const Tensor& t) {
  if (!t.defined()) throw GraphError("backward on undefined tensor");
  if (t.numel() != 1) throw GraphError("backward requires a scalar loss, got shape " + shape_str(t.shape()));
  if (!t.requires_grad()) throw GraphError("loss does not depend on any tensor that requires grad");
}

}  // namespace

void backward(const Tensor& loss) {
  require_scalar(loss);
  auto r = sweep(loss, false);
  for (auto& [impl, g] : r.leaf_grads) {
    const auto gd = g.data();
    if (!impl->grad) {
      impl->grad.emplace(gd.begin(), gd.end());
    } else {
      auto& dst = *impl->grad;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += gd[i];
    }
  }
}

std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs, bool create_graph) {
  require_scalar(output);
  auto r = sweep(output, create_graph);
  std::vector<Tensor> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) {
    Tensor g;
    if (in.node()) {
      auto it = r.node_grads.find(in.node().get());
      if (it != r.node_grads.end()) g = it->second;
    } else {
      auto it = r.leaf_grads.find(in.impl().get());
      if (it != r.leaf_grads.end()) g = it->second;
    }
    out.push_back(g.defined() ? g : Tensor::zeros(in.shape()));
  }
  return out;
}

std::vector<std::uint64_t> graph_tape_ids(const Tensor& output) {
  std::vector<std::uint64_t> ids;
  for (Node* n : reverse_topological(output)) {
    const auto id = n->tape ? n->tape->id : 0;
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace smoothsr
