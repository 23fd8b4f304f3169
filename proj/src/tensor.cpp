#include "robustlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace robustlab {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) {
    if (e <= 0) throw std::invalid_argument("tensor extent must be positive, got " + std::to_string(e));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->value.assign(static_cast<size_t>(shape_numel(shape)), real_t(0));
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::full(Shape shape, real_t v, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.data().begin(), t.data().end(), v);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<real_t> data, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

Tensor Tensor::scalar(real_t v, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = {};
  n->value = {v};
  n->requires_grad = requires_grad;
  return wrap(std::move(n));
}

real_t Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on tensor with " + std::to_string(numel()) + " elements");
  return node_->value[0];
}

Tensor Tensor::detached_copy() const {
  auto n = std::make_shared<TensorNode>();
  n->shape = node_->shape;
  n->value = node_->value;
  n->requires_grad = false;
  return wrap(std::move(n));
}

// ---- backward --------------------------------------------------------------

void backward(const Tensor& scalar_loss, bool retain_tape) {
  if (!scalar_loss.defined()) throw std::invalid_argument("backward on undefined tensor");
  auto root = scalar_loss.node();
  if (root->numel() != 1) throw std::invalid_argument("backward requires a 0-d loss, got shape " + shape_str(root->shape));
  if (!root->taped()) throw std::invalid_argument("backward on untaped tensor (no recorded graph, or tape already consumed)");

  // iterative DFS topological order, children before parents after reversal
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* p = node->parents[idx++].get();
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // interior grads are per-pass scratch; only leaves accumulate across passes
  for (TensorNode* n : order)
    if (n->taped() || !n->parents.empty()) n->grad.assign(n->value.size(), real_t(0));

  root->ensure_grad();
  root->grad[0] = real_t(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn) {
      n->backward_fn();
      if (!retain_tape) n->backward_fn = nullptr;  // consume the tape
    }
  }
}

// ---- op helpers -------------------------------------------------------------

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Tensor make_out(Shape shape, std::initializer_list<Tensor> parents) {
  Tensor out = Tensor::zeros(std::move(shape));
  bool rg = false;
  for (const Tensor& p : parents) rg = rg || p.requires_grad();
  out.node()->requires_grad = rg;
  if (rg)
    for (const Tensor& p : parents) out.node()->parents.push_back(p.node());
  return out;
}

}  // namespace

// ---- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = make_out(a.shape(), {a, b});
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a.at(i) + b.at(i);
  if (out.requires_grad()) {
    out.node()->backward_fn = [an = a.node(), bn = b.node(), on = out.node()]() {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
      }
    };
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = make_out(a.shape(), {a, b});
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a.at(i) - b.at(i);
  if (out.requires_grad()) {
    out.node()->backward_fn = [an = a.node(), bn = b.node(), on = out.node()]() {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
      }
    };
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = make_out(a.shape(), {a, b});
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a.at(i) * b.at(i);
  if (out.requires_grad()) {
    out.node()->backward_fn = [an = a.node(), bn = b.node(), on = out.node()]() {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i] * an->value[i];
      }
    };
  }
  return out;
}

Tensor add_scalar(const Tensor& a, real_t c) {
  Tensor out = make_out(a.shape(), {a});
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a.at(i) + c;
  if (out.requires_grad()) {
    out.node()->backward_fn = [an = a.node(), on = out.node()]() {
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
    };
  }
  return out;
}

Tensor mul_scalar(const Tensor& a, real_t c) {
  Tensor out = make_out(a.shape(), {a});
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a.at(i) * c;
  if (out.requires_grad()) {
    out.node()->backward_fn = [an = a.node(), on = out.node(), c]() {
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * c;
    };
  }
  return out;
}

Tensor neg(const Tensor& a) { return mul_scalar(a, real_t(-1)); }

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  if (a.ndim() != 2 || v.ndim() != 1 || a.size(1) != v.size(0))
    throw std::invalid_argument("add_rowvec: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(v.shape()));
  Tensor out = make_out(a.shape(), {a, v});
  const int64_t rows = a.size(0), cols = a.size(1);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out.at(r * cols + c) = a.at(r * cols + c) + v.at(c);
  if (out.requires_grad()) {
    out.node()->backward_fn = [an = a.node(), vn = v.node(), on = out.node(), rows, cols]() {
      if (an->requires_grad) {
        an->ensure_grad();
        for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      }
      if (vn->requires_grad) {
        vn->ensure_grad();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t c = 0; c < cols; ++c) vn->grad[static_cast<size_t>(c)] += on->grad[static_cast<size_t>(r * cols + c)];
      }
    };
  }
  return out;
}

// ---- matmul -------------------------------------------------------------------

namespace detail {

// C[m,n] += A[m,k] * B[k,n]; each C row is written by exactly one thread so the
// result is bit-identical for any thread count.
void gemm_acc(const real_t* A, const real_t* B, real_t* C, int64_t m, int64_t k, int64_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m * n * k > 1 << 16)
#endif
  for (int64_t i = 0; i < m; ++i) {
    real_t* crow = C + i * n;
    const real_t* arow = A + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const real_t a = arow[p];
      if (a == real_t(0)) continue;
      const real_t* brow = B + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

// C[m,n] += A^T[m,k] * B[k,n] with A stored as [k,m]
void gemm_at_acc(const real_t* A, const real_t* B, real_t* C, int64_t m, int64_t k, int64_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m * n * k > 1 << 16)
#endif
  for (int64_t i = 0; i < m; ++i) {
    real_t* crow = C + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const real_t a = A[p * m + i];
      if (a == real_t(0)) continue;
      const real_t* brow = B + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
  }
}

// C[m,n] += A[m,k] * B^T[k,n] with B stored as [n,k]
void gemm_bt_acc(const real_t* A, const real_t* B, real_t* C, int64_t m, int64_t k, int64_t n) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (m * n * k > 1 << 16)
#endif
  for (int64_t i = 0; i < m; ++i) {
    real_t* crow = C + i * n;
    const real_t* arow = A + i * k;
    for (int64_t j = 0; j < n; ++j) {
      const real_t* brow = B + j * k;
      real_t acc = real_t(0);
      for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

}  // namespace detail

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.size(1) != b.size(0))
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int64_t m = a.size(0), k = a.size(1), n = b.size(1);
  Tensor out = make_out({m, n}, {a, b});
  detail::gemm_acc(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  if (out.requires_grad()) {
    out.node()->backward_fn = [an = a.node(), bn = b.node(), on = out.node(), m, k, n]() {
      if (an->requires_grad) {
        an->ensure_grad();
        // dA = dC * B^T
        detail::gemm_bt_acc(on->grad.data(), bn->value.data(), an->grad.data(), m, n, k);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        // dB = A^T * dC
        detail::gemm_at_acc(an->value.data(), on->grad.data(), bn->grad.data(), k, m, n);
      }
    };
  }
  return out;
}

// ---- nonlinearities -------------------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd_factor) {
  Tensor out = Tensor::zeros(a.shape());
  out.node()->requires_grad = a.requires_grad();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = fwd(a.at(i));
  if (out.requires_grad()) {
    out.node()->parents.push_back(a.node());
    out.node()->backward_fn = [an = a.node(), on = out.node(), bwd_factor]() {
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i)
        an->grad[i] += on->grad[i] * bwd_factor(an->value[i], on->value[i]);
    };
  }
  return out;
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](real_t x) { return x > real_t(0) ? x : real_t(0); },
      [](real_t x, real_t) { return x > real_t(0) ? real_t(1) : real_t(0); });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a,
      [](real_t x) {
        // stable in both tails
        if (x >= real_t(0)) return real_t(1) / (real_t(1) + std::exp(-x));
        real_t e = std::exp(x);
        return e / (real_t(1) + e);
      },
      [](real_t, real_t y) { return y * (real_t(1) - y); });
}

Tensor tanh_op(const Tensor& a) {
  return unary_op(
      a, [](real_t x) { return std::tanh(x); },
      [](real_t, real_t y) { return real_t(1) - y * y; });
}

Tensor exp_op(const Tensor& a) {
  return unary_op(
      a, [](real_t x) { return std::exp(x); },
      [](real_t, real_t y) { return y; });
}

Tensor log_op(const Tensor& a) {
  return unary_op(
      a, [](real_t x) { return std::log(x); },
      [](real_t x, real_t) { return real_t(1) / x; });
}

Tensor abs_op(const Tensor& a) {
  return unary_op(
      a, [](real_t x) { return std::abs(x); },
      [](real_t x, real_t) { return x > real_t(0) ? real_t(1) : (x < real_t(0) ? real_t(-1) : real_t(0)); });
}

Tensor square(const Tensor& a) {
  return unary_op(
      a, [](real_t x) { return x * x; },
      [](real_t x, real_t) { return real_t(2) * x; });
}

Tensor clamp_op(const Tensor& a, real_t lo, real_t hi) {
  return unary_op(
      a, [lo, hi](real_t x) { return std::min(hi, std::max(lo, x)); },
      [lo, hi](real_t x, real_t) { return (x >= lo && x <= hi) ? real_t(1) : real_t(0); });
}

// ---- reductions / structure -----------------------------------------------------

Tensor sum(const Tensor& a) {
  Tensor out = make_out({}, {a});
  real_t acc = real_t(0);
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) acc += a.at(i);
  out.at(0) = acc;
  if (out.requires_grad()) {
    out.node()->backward_fn = [an = a.node(), on = out.node()]() {
      an->ensure_grad();
      const real_t g = on->grad[0];
      for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
    };
  }
  return out;
}

Tensor mean(const Tensor& a) { return mul_scalar(sum(a), real_t(1) / static_cast<real_t>(a.numel())); }

Tensor reshape(const Tensor& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.numel())
    throw std::invalid_argument("reshape: element count mismatch " + shape_str(a.shape()) + " -> " + shape_str(new_shape));
  Tensor out = make_out(std::move(new_shape), {a});
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  if (out.requires_grad()) {
    out.node()->backward_fn = [an = a.node(), on = out.node()]() {
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
    };
  }
  return out;
}

Tensor rowwise_l2(const Tensor& a) {
  if (a.ndim() != 2) throw std::invalid_argument("rowwise_l2 expects a 2-d tensor, got " + shape_str(a.shape()));
  const int64_t rows = a.size(0), cols = a.size(1);
  Tensor out = make_out({rows}, {a});
  for (int64_t r = 0; r < rows; ++r) {
    real_t acc = real_t(0);
    for (int64_t c = 0; c < cols; ++c) {
      real_t v = a.at(r * cols + c);
      acc += v * v;
    }
    out.at(r) = std::sqrt(acc);
  }
  if (out.requires_grad()) {
    out.node()->backward_fn = [an = a.node(), on = out.node(), rows, cols]() {
      an->ensure_grad();
      for (int64_t r = 0; r < rows; ++r) {
        const real_t norm = on->value[static_cast<size_t>(r)];
        if (norm <= real_t(1e-30)) continue;  // subgradient 0 at the origin
        const real_t g = on->grad[static_cast<size_t>(r)] / norm;
        for (int64_t c = 0; c < cols; ++c)
          an->grad[static_cast<size_t>(r * cols + c)] += g * an->value[static_cast<size_t>(r * cols + c)];
      }
    };
  }
  return out;
}

Tensor slice_cols(const Tensor& a, int64_t c0, int64_t c1) {
  if (a.ndim() != 2 || c0 < 0 || c1 > a.size(1) || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) +
                                ") for shape " + shape_str(a.shape()));
  const int64_t rows = a.size(0), cols = a.size(1), w = c1 - c0;
  Tensor out = make_out({rows, w}, {a});
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < w; ++c) out.at(r * w + c) = a.at(r * cols + c0 + c);
  if (out.requires_grad()) {
    out.node()->backward_fn = [an = a.node(), on = out.node(), rows, cols, c0, w]() {
      an->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < w; ++c)
          an->grad[static_cast<size_t>(r * cols + c0 + c)] += on->grad[static_cast<size_t>(r * w + c)];
    };
  }
  return out;
}

Tensor take_row(const Tensor& a, int64_t row) {
  if (a.ndim() != 2 || row < 0 || row >= a.size(0))
    throw std::invalid_argument("take_row: bad row " + std::to_string(row) + " for shape " + shape_str(a.shape()));
  const int64_t cols = a.size(1);
  Tensor out = make_out({cols}, {a});
  for (int64_t c = 0; c < cols; ++c) out.at(c) = a.at(row * cols + c);
  if (out.requires_grad()) {
    out.node()->backward_fn = [an = a.node(), on = out.node(), row, cols]() {
      an->ensure_grad();
      for (int64_t c = 0; c < cols; ++c) an->grad[static_cast<size_t>(row * cols + c)] += on->grad[static_cast<size_t>(c)];
    };
  }
  return out;
}

}  // namespace robustlab
