#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "glmotion/errors.hpp"

namespace glmotion {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

/// Called with the output node (its values and d(loss)/d(output)); accumulates
/// into the inputs it captured.
using BackwardFn = std::function<void(const TensorImpl& out)>;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool consumed = false;  // graph already released by a backward pass

  // graph edge; empty for leaves
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward_fn;

  bool is_leaf() const { return inputs.empty() && !consumed; }
  void accumulate(std::size_t i, double v);
  std::span<double> grad_buffer();
};

/// Dense row-major float64 array with an optional reverse-mode graph edge.
///
/// Copies are shallow: two Tensor handles may refer to the same storage,
/// which is how parameters are shared between the model and the optimizer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  /// Writable storage. Meant for leaves (initializers, optimizers, grad
  /// checks); mutating an interior node does not update its graph.
  std::span<double> mutable_data() { return impl_->data; }
  const std::vector<double>& values() const { return impl_->data; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  void zero_grad();

  double item() const;
  bool is_leaf() const { return impl_->is_leaf(); }
  const char* op_name() const { return impl_->op; }

  /// Copy of the values with no graph history.
  Tensor detach() const;

  void backward() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Builds a result tensor. When recording is on and any input requires a
/// gradient, the result carries `backward` as its graph edge.
Tensor record_op(const char* op, Shape shape, std::vector<double> data,
                 std::vector<Tensor> inputs, BackwardFn backward);

/// Topologically ordered view of the graph reachable from a scalar root.
class AutodiffTape {
 public:
  struct Node {
    const char* op;
    TensorImpl* tensor;
    std::vector<TensorImpl*> inputs;
  };

  /// Collects every node reachable from `root` in dependency order
  /// (inputs before consumers).
  static AutodiffTape record(const Tensor& root);

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(root)/d(root) = 1, runs every backward rule in reverse order,
  /// then releases the graph so a second call fails with StateError.
  void run();

 private:
  Tensor root_;
  std::vector<std::shared_ptr<TensorImpl>> order_;
  std::vector<Node> nodes_;
  bool done_ = false;
};

void backward(const Tensor& loss);

}  // namespace glmotion
