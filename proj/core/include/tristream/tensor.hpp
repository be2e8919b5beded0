#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tristream {

using Shape = std::vector<int64_t>;

// Thrown when tensor extents do not line up; the message names the axis.
class ShapeError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user input (malformed file, invalid config value, empty clip, ...).
class ValueError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/Inf detected at an error surface, or training diverged.
class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;
using TensorImplPtr = std::shared_ptr<TensorImpl>;

// Node of the reverse-mode graph. `backward` reads this node's grad and
// accumulates into the parents' grads; it runs exactly once per backward
// pass, after all consumers have contributed.
struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<TensorImplPtr> parents;
  std::function<void(const TensorImpl&)> backward;

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  std::vector<float>& ensure_grad();
  void accumulate_grad(std::span<const float> g);
};

// Dense row-major float32 N-D array. Value-semantic handle onto a shared
// node; ops record the graph only while gradients are enabled and some
// input requires them.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_vec(Shape shape, std::vector<float> values,
                         bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);
  static Tensor randn(Shape shape, class Rng& rng, float stddev = 1.0f,
                      bool requires_grad = false);
  static Tensor rand_uniform(Shape shape, class Rng& rng, float lo, float hi,
                             bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  size_t rank() const { return impl_->shape.size(); }
  int64_t dim(size_t axis) const;
  int64_t numel() const { return impl_->numel(); }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value);

  std::span<const float> data() const { return impl_->data; }
  std::span<float> mut_data() { return impl_->data; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const float> grad() const;
  std::span<float> mut_grad();
  void zero_grad();

  float item() const;
  float at(std::initializer_list<int64_t> index) const;

  // Reverse-mode sweep from a scalar; populates grad of every
  // requires_grad node reachable through the graph.
  void backward() const;

  const TensorImplPtr& impl() const { return impl_; }
  static Tensor wrap(TensorImplPtr impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
  }

 private:
  TensorImplPtr impl_;
};

// Scope that disables graph recording (inference / data preparation).
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

bool all_finite(const Tensor& t);
// Throws NumericError naming `context` if any element is NaN or Inf.
void check_finite(const Tensor& t, const std::string& context);

namespace detail {
// Output node wiring shared by every op: allocates the result, records
// parents/backward only when grad mode is on and an input needs it.
Tensor make_op_output(Shape shape, const char* op,
                      std::vector<Tensor> inputs,
                      std::function<void(const TensorImpl&)> backward);
}  // namespace detail

}  // namespace tristream
