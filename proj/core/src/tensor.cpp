#include "tristream/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "tristream/rng.hpp"

namespace tristream {

namespace {
thread_local bool g_grad_enabled = true;
}

int64_t numel_of(const Shape& shape) {
  int64_t n = 1;
  for (int64_t e : shape) {
    if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<float>& TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0f);
  return grad;
}

void TensorImpl::accumulate_grad(std::span<const float> g) {
  auto& dst = ensure_grad();
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(static_cast<size_t>(numel_of(shape)), 0.0f);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return wrap(std::move(impl));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.impl()->data.begin(), t.impl()->data.end(), value);
  return t;
}

Tensor Tensor::from_vec(Shape shape, std::vector<float> values, bool requires_grad) {
  if (numel_of(shape) != static_cast<int64_t>(values.size()))
    throw ShapeError("from_vec: " + std::to_string(values.size()) +
                     " values do not fill shape " + shape_str(shape));
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return wrap(std::move(impl));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return from_vec({}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, float stddev, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (auto& v : t.impl()->data) v = static_cast<float>(rng.normal(0.0, stddev));
  return t;
}

Tensor Tensor::rand_uniform(Shape shape, Rng& rng, float lo, float hi, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (auto& v : t.impl()->data) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

int64_t Tensor::dim(size_t axis) const {
  if (axis >= impl_->shape.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(impl_->shape));
  return impl_->shape[axis];
}

void Tensor::set_requires_grad(bool value) {
  if (value && impl_->backward)
    throw ValueError("requires_grad can only be toggled on leaf tensors");
  impl_->requires_grad = value;
}

std::span<const float> Tensor::grad() const {
  if (impl_->grad.empty())
    throw ValueError("tensor has no gradient (backward not run or not reached)");
  return impl_->grad;
}

std::span<float> Tensor::mut_grad() { return impl_->ensure_grad(); }

void Tensor::zero_grad() {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

float Tensor::item() const {
  if (numel() != 1)
    throw ShapeError("item() on tensor of shape " + shape_str(impl_->shape));
  return impl_->data[0];
}

float Tensor::at(std::initializer_list<int64_t> index) const {
  if (index.size() != rank())
    throw ShapeError("at(): rank mismatch for " + shape_str(impl_->shape));
  int64_t flat = 0;
  size_t axis = 0;
  for (int64_t i : index) {
    if (i < 0 || i >= impl_->shape[axis])
      throw ShapeError("at(): index out of range on axis " + std::to_string(axis));
    flat = flat * impl_->shape[axis] + i;
    ++axis;
  }
  return impl_->data[static_cast<size_t>(flat)];
}

void Tensor::backward() const {
  if (numel() != 1)
    throw ShapeError("backward() requires a scalar loss, got " + shape_str(impl_->shape));

  // Iterative post-order DFS; reverse of the resulting order is a valid
  // topological order (graph is acyclic by construction).
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorImpl* parent = node->parents[next++].get();
      if (seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  impl_->ensure_grad();
  impl_->grad[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

bool all_finite(const Tensor& t) {
  for (float v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

void check_finite(const Tensor& t, const std::string& context) {
  if (!all_finite(t))
    throw NumericError(context + ": non-finite value in tensor " + shape_str(t.shape()));
}

namespace detail {

Tensor make_op_output(Shape shape, const char* op, std::vector<Tensor> inputs,
                      std::function<void(const TensorImpl&)> backward) {
  Tensor out = Tensor::zeros(std::move(shape));
  bool needs_grad = false;
  if (g_grad_enabled)
    for (const Tensor& in : inputs)
      if (in.requires_grad()) needs_grad = true;
  if (needs_grad) {
    auto& impl = *out.impl();
    impl.requires_grad = true;
    impl.op = op;
    impl.parents.reserve(inputs.size());
    for (Tensor& in : inputs) impl.parents.push_back(in.impl());
    impl.backward = std::move(backward);
  }
  return out;
}

}  // namespace detail

}  // namespace tristream
