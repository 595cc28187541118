#include "glmotion/tensor.hpp"

#include <numeric>
#include <sstream>
#include <unordered_set>

namespace glmotion {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void TensorImpl::accumulate(std::size_t i, double v) {
  if (!requires_grad) return;
  if (grad.empty()) grad.assign(data.size(), 0.0);
  grad[i] += v;
}

std::span<double> TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("Tensor::from: shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape()));
  }
  return impl_->shape[axis];
}

void Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (!on) impl_->grad.clear();
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

Tensor Tensor::detach() const {
  return from(shape(), impl_->data, false);
}

void Tensor::backward() const { glmotion::backward(*this); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor record_op(const char* op, Shape shape, std::vector<double> data,
                 std::vector<Tensor> inputs, BackwardFn backward) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->op = op;
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    impl->requires_grad = true;
    impl->inputs.reserve(inputs.size());
    for (const auto& in : inputs) impl->inputs.push_back(in.impl());
    impl->backward_fn = std::move(backward);
  }
  return Tensor(std::move(impl));
}

AutodiffTape AutodiffTape::record(const Tensor& root) {
  AutodiffTape tape;
  tape.root_ = root;
  // iterative post-order DFS
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<std::shared_ptr<TensorImpl>, std::size_t>> stack;
  stack.emplace_back(root.impl(), 0);
  visited.insert(root.impl().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      auto child = node->inputs[next++];
      if (child->requires_grad && visited.insert(child.get()).second) {
        stack.emplace_back(std::move(child), 0);
      }
      continue;
    }
    tape.order_.push_back(node);
    stack.pop_back();
  }
  tape.nodes_.reserve(tape.order_.size());
  for (const auto& impl : tape.order_) {
    Node n{impl->op, impl.get(), {}};
    for (const auto& in : impl->inputs) n.inputs.push_back(in.get());
    tape.nodes_.push_back(std::move(n));
  }
  return tape;
}

void AutodiffTape::run() {
  if (done_) throw StateError("backward: tape already consumed");
  auto& root = *root_.impl();
  if (root.consumed) throw StateError("backward: graph was released by an earlier backward");
  if (!root.requires_grad) throw StateError("backward: loss is not attached to any trainable input");
  if (root.data.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(root.shape));
  }
  root.grad_buffer()[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    TensorImpl& node = **it;
    if (node.backward_fn && !node.grad.empty()) node.backward_fn(node);
  }
  for (auto& impl : order_) {
    if (impl->inputs.empty()) continue;
    impl->inputs.clear();
    impl->backward_fn = nullptr;
    impl->consumed = true;
  }
  done_ = true;
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw StateError("backward: undefined tensor");
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  if (loss.impl()->consumed) throw StateError("backward: graph was released by an earlier backward");
  AutodiffTape::record(loss).run();
}

}  // namespace glmotion
