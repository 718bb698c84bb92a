// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace amc::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// One vertex of the define-by-run graph. Each node owns its forward value and
/// (lazily) its gradient buffer. Nodes created later always carry a larger id,
/// so sorting by id gives a topological order of the graph.
struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;
  bool requires_grad = false;
  bool is_parameter = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  // Parallel to `inputs`: whether gradient flows along that edge.
  std::vector<bool> input_tracked;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward_fn;

  /// Returns the gradient buffer, allocating zeros on first use.
  std::vector<float>& grad_buffer();
  bool wants_grad(std::size_t input) const { return input_tracked[input]; }
  /// Gradient buffer of input `i`; only call when wants_grad(i).
  std::vector<float>& input_grad(std::size_t i) { return inputs[i]->grad_buffer(); }
  const std::vector<float>& input_value(std::size_t i) const { return inputs[i]->value; }
};

/// Handle to a node. Copies share the same storage (reference semantics,
/// like a framework tensor); use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);
  /// A trainable leaf. Parameters stop receiving gradient inside a
  /// FreezeParameters scope.
  static Tensor parameter(Shape shape, std::vector<float> values);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const float> data() const;
  /// Mutable access to the value. Only meaningful on leaves (parameters and
  /// inputs); writing into an intermediate does not update its consumers.
  std::span<float> mutable_data();
  float item() const;
  float at(std::size_t flat_index) const { return data()[flat_index]; }
  /// Row-major multi-index access; throws IndexError when out of range.
  float at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  bool is_parameter() const;
  bool has_grad() const;
  /// Gradient accumulated by backward(); empty span when none.
  std::span<const float> grad() const;
  std::span<float> mutable_grad();
  void zero_grad();

  /// Reverse-mode pass from this scalar. Leaf gradients accumulate across
  /// calls until zero_grad(); intermediate gradients are released afterwards.
  void backward() const;

  /// New leaf holding a copy of the value, disconnected from the graph.
  Tensor detach() const;
  /// Deep copy that keeps requires_grad / parameter flags but not the graph.
  Tensor clone() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

/// Disables graph recording in the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Treats parameter leaves as constants while recording, so a backward pass
/// only produces gradients for non-parameter leaves such as an input batch.
class FreezeParameters {
 public:
  FreezeParameters();
  ~FreezeParameters();
  FreezeParameters(const FreezeParameters&) = delete;
  FreezeParameters& operator=(const FreezeParameters&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();
bool parameters_frozen();

namespace detail {
/// Whether an input contributes to the graph under the current thread's mode.
bool tracks(const Tensor& t);
/// Builds the output node; records inputs and the backward closure only when
/// at least one input is tracked.
Tensor make_result(Shape shape, std::vector<float> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn);
}  // namespace detail

}  // namespace amc::ad
