#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace robustlab {

#ifdef ROBUSTLAB_SINGLE_PRECISION
using real_t = float;
#else
using real_t = double;
#endif

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// One node of the reverse-mode tape. `backward_fn` pulls this node's grad into
// the parents' grads; the DAG is child -> parent only, so no ownership cycles.
struct TensorNode {
  Shape shape;
  std::vector<real_t> value;
  std::vector<real_t> grad;  // lazily allocated, same extent as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backward_fn;

  int64_t numel() const { return static_cast<int64_t>(value.size()); }
  bool taped() const { return static_cast<bool>(backward_fn); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), real_t(0));
  }
};

// Dense row-major tensor handle. Copying a Tensor aliases the same node;
// value semantics for the handle, shared storage for the data.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, real_t v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<real_t> data, bool requires_grad = false);
  static Tensor scalar(real_t v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t size(int dim) const { return node_->shape[static_cast<size_t>(dim)]; }
  int64_t ndim() const { return static_cast<int64_t>(node_->shape.size()); }
  int64_t numel() const { return node_->numel(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<real_t> data() { return node_->value; }
  std::span<const real_t> data() const { return node_->value; }
  real_t& at(int64_t i) { return node_->value[static_cast<size_t>(i)]; }
  real_t at(int64_t i) const { return node_->value[static_cast<size_t>(i)]; }

  // grad of a leaf after backward(); empty span when never touched
  std::span<const real_t> grad() const { return node_->grad; }
  std::span<real_t> grad_mut() { return node_->grad; }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.assign(node_->value.size(), real_t(0));
  }

  real_t item() const;

  Tensor detached_copy() const;  // same values, no tape, no grad flag

  std::shared_ptr<TensorNode>& node() { return node_; }
  const std::shared_ptr<TensorNode>& node() const { return node_; }

  static Tensor wrap(std::shared_ptr<TensorNode> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Runs reverse-mode accumulation from a 0-d (or single-element) taped tensor.
// Interior node grads are reset on entry; leaf grads accumulate. By default
// the tape is consumed and a second backward through the same graph throws;
// retain_tape keeps it alive for another pass (multi-objective updates).
void backward(const Tensor& scalar_loss, bool retain_tape = false);

// ---- graph-building primitives -------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);       // same shape
Tensor sub(const Tensor& a, const Tensor& b);       // same shape
Tensor mul(const Tensor& a, const Tensor& b);       // elementwise, same shape
Tensor add_scalar(const Tensor& a, real_t c);
Tensor mul_scalar(const Tensor& a, real_t c);
Tensor neg(const Tensor& a);
Tensor add_rowvec(const Tensor& a, const Tensor& v);  // a[B,K] + v[K]

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor abs_op(const Tensor& a);   // subgradient 0 at 0
Tensor square(const Tensor& a);
Tensor clamp_op(const Tensor& a, real_t lo, real_t hi);  // zero grad outside

Tensor sum(const Tensor& a);   // -> 0-d
Tensor mean(const Tensor& a);  // -> 0-d

Tensor reshape(const Tensor& a, Shape new_shape);

// per-row L2 norm of a [B,D] tensor -> [B]; guarded gradient at the origin
Tensor rowwise_l2(const Tensor& a);

// select one row of a [B,D] tensor -> [D] (shares no storage; copies)
Tensor take_row(const Tensor& a, int64_t row);

// columns [c0, c1) of a [B,D] tensor -> [B, c1-c0]
Tensor slice_cols(const Tensor& a, int64_t c0, int64_t c1);

}  // namespace robustlab
