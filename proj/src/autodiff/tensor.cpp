// SPDX-License-Identifier: Apache-2.0
#include "amc/autodiff/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "amc/error.hpp"

namespace amc::ad {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool t_grad_enabled = true;
thread_local bool t_params_frozen = false;

std::shared_ptr<Node> new_node(Shape shape, std::vector<float> values) {
  if (numel(shape) != values.size()) {
    throw DimensionError("tensor of shape " + to_string(shape) + " given " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::vector<float>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0f);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  std::vector<float> values(ad::numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + to_string(shape));
  }
  auto node = new_node(std::move(shape), std::move(values));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::parameter(Shape shape, std::vector<float> values) {
  Tensor t = from(std::move(shape), std::move(values), true);
  t.node_->is_parameter = true;
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                         to_string(node_->shape));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<const float> Tensor::data() const { return node_->value; }

std::span<float> Tensor::mutable_data() { return node_->value; }

float Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

float Tensor::at(std::initializer_list<std::size_t> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) {
    throw IndexError("at(): " + std::to_string(index.size()) + " indices for shape " + to_string(s));
  }
  std::size_t flat = 0, axis = 0;
  for (std::size_t i : index) {
    if (i >= s[axis]) throw IndexError("at(): index out of range for shape " + to_string(s));
    flat = flat * s[axis++] + i;
  }
  return node_->value[flat];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::is_parameter() const { return node_->is_parameter; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const float> Tensor::grad() const { return node_->grad; }
std::span<float> Tensor::mutable_grad() { return node_->grad_buffer(); }

void Tensor::zero_grad() { node_->grad.clear(); }

void Tensor::backward() const {
  if (numel() != 1) {
    throw ContractError("backward() needs a scalar root, got shape " + to_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Collect every tracked node reachable from the root.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{node_.get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      if (n->input_tracked[i]) stack.push_back(n->inputs[i].get());
    }
  }
  // Reverse construction order is a valid reverse topological order.
  std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->id > b->id; });

  for (Node* n : order) {
    if (n->backward_fn) n->grad.clear();
  }
  node_->grad_buffer()[0] += 1.0f;
  for (Node* n : order) {
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  for (Node* n : order) {
    if (n->backward_fn) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

Tensor Tensor::clone() const {
  Tensor t = from(shape(), node_->value, node_->requires_grad);
  t.node_->is_parameter = node_->is_parameter;
  return t;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

FreezeParameters::FreezeParameters() : previous_(t_params_frozen) { t_params_frozen = true; }
FreezeParameters::~FreezeParameters() { t_params_frozen = previous_; }

bool grad_enabled() { return t_grad_enabled; }
bool parameters_frozen() { return t_params_frozen; }

namespace detail {

bool tracks(const Tensor& t) {
  if (!t_grad_enabled || !t.requires_grad()) return false;
  return !(t_params_frozen && t.is_parameter());
}

Tensor make_result(Shape shape, std::vector<float> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn) {
  auto node = new_node(std::move(shape), std::move(value));
  bool any = false;
  for (const auto& in : inputs) any = any || tracks(in);
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) {
      // Untracked inputs stay attached because backward closures read their
      // values; the flag keeps gradient from flowing into them.
      node->inputs.push_back(in.node());
      node->input_tracked.push_back(tracks(in));
    }
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

}  // namespace detail

}  // namespace amc::ad
