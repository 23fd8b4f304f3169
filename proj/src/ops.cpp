#include "robustlab/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace robustlab {

namespace detail {
void gemm_acc(const real_t* A, const real_t* B, real_t* C, int64_t m, int64_t k, int64_t n);
void gemm_at_acc(const real_t* A, const real_t* B, real_t* C, int64_t m, int64_t k, int64_t n);
void gemm_bt_acc(const real_t* A, const real_t* B, real_t* C, int64_t m, int64_t k, int64_t n);
}  // namespace detail

// ---- conv2d ---------------------------------------------------------------

namespace {

void im2col(const real_t* img, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t Ho, int64_t Wo, real_t* col) {
  // col layout: [C*kh*kw, Ho*Wo]
  for (int64_t c = 0; c < C; ++c)
    for (int64_t ki = 0; ki < kh; ++ki)
      for (int64_t kj = 0; kj < kw; ++kj) {
        real_t* dst = col + ((c * kh + ki) * kw + kj) * (Ho * Wo);
        for (int64_t oi = 0; oi < Ho; ++oi) {
          const int64_t i = oi * stride - pad + ki;
          for (int64_t oj = 0; oj < Wo; ++oj) {
            const int64_t j = oj * stride - pad + kj;
            dst[oi * Wo + oj] = (i >= 0 && i < H && j >= 0 && j < W) ? img[(c * H + i) * W + j] : real_t(0);
          }
        }
      }
}

void col2im_acc(const real_t* col, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                int64_t stride, int64_t pad, int64_t Ho, int64_t Wo, real_t* img) {
  for (int64_t c = 0; c < C; ++c)
    for (int64_t ki = 0; ki < kh; ++ki)
      for (int64_t kj = 0; kj < kw; ++kj) {
        const real_t* src = col + ((c * kh + ki) * kw + kj) * (Ho * Wo);
        for (int64_t oi = 0; oi < Ho; ++oi) {
          const int64_t i = oi * stride - pad + ki;
          if (i < 0 || i >= H) continue;
          for (int64_t oj = 0; oj < Wo; ++oj) {
            const int64_t j = oj * stride - pad + kj;
            if (j < 0 || j >= W) continue;
            img[(c * H + i) * W + j] += src[oi * Wo + oj];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride, int64_t pad) {
  if (x.ndim() != 4 || w.ndim() != 4)
    throw std::invalid_argument("conv2d: expected 4-d input and weights, got " + shape_str(x.shape()) + " and " + shape_str(w.shape()));
  const int64_t B = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  const int64_t F = w.size(0), kh = w.size(2), kw = w.size(3);
  if (w.size(1) != C)
    throw std::invalid_argument("conv2d: input has " + std::to_string(C) + " channels but weights expect " + std::to_string(w.size(1)));
  if (b.numel() != F) throw std::invalid_argument("conv2d: bias extent mismatch");
  const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
  const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: kernel larger than padded input");

  const int64_t ckk = C * kh * kw, hw = Ho * Wo;
  Tensor out = Tensor::zeros({B, F, Ho, Wo});
  out.node()->requires_grad = x.requires_grad() || w.requires_grad() || b.requires_grad();

  // column cache kept alive for backward via shared_ptr capture
  auto cols = std::make_shared<std::vector<real_t>>(static_cast<size_t>(B * ckk * hw));

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t bi = 0; bi < B; ++bi) {
    real_t* col = cols->data() + bi * ckk * hw;
    im2col(x.data().data() + bi * C * H * W, C, H, W, kh, kw, stride, pad, Ho, Wo, col);
    real_t* o = out.data().data() + bi * F * hw;
    detail::gemm_acc(w.data().data(), col, o, F, ckk, hw);
    for (int64_t f = 0; f < F; ++f) {
      const real_t bias = b.at(f);
      for (int64_t p = 0; p < hw; ++p) o[f * hw + p] += bias;
    }
  }

  if (out.requires_grad()) {
    out.node()->parents = {x.node(), w.node(), b.node()};
    out.node()->backward_fn = [xn = x.node(), wn = w.node(), bn = b.node(), on = out.node(), cols, B, C, H, W, F,
                               kh, kw, stride, pad, Ho, Wo, ckk, hw]() {
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int64_t f = 0; f < F; ++f) {
          real_t acc = real_t(0);
          for (int64_t bi = 0; bi < B; ++bi) {
            const real_t* g = on->grad.data() + (bi * F + f) * hw;
            for (int64_t p = 0; p < hw; ++p) acc += g[p];
          }
          bn->grad[static_cast<size_t>(f)] += acc;
        }
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        // dW[F,ckk] += sum_b dY_b[F,hw] * col_b^T
        for (int64_t bi = 0; bi < B; ++bi)
          detail::gemm_bt_acc(on->grad.data() + bi * F * hw, cols->data() + bi * ckk * hw,
                              wn->grad.data(), F, hw, ckk);
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (int64_t bi = 0; bi < B; ++bi) {
          std::vector<real_t> dcol(static_cast<size_t>(ckk * hw), real_t(0));
          // dcol[ckk,hw] = W^T[ckk,F] * dY_b[F,hw]
          detail::gemm_at_acc(wn->value.data(), on->grad.data() + bi * F * hw, dcol.data(), ckk, F, hw);
          col2im_acc(dcol.data(), C, H, W, kh, kw, stride, pad, Ho, Wo, xn->grad.data() + bi * C * H * W);
        }
      }
    };
  }
  return out;
}

// ---- batch norm -------------------------------------------------------------

namespace {

struct BnDims {
  int64_t channels;  // extent of the normalized axis
  int64_t outer;     // batch
  int64_t inner;     // spatial positions per channel (1 for 2-d input)
};

BnDims bn_dims(const Tensor& x) {
  if (x.ndim() == 2) return {x.size(1), x.size(0), 1};
  if (x.ndim() == 4) return {x.size(1), x.size(0), x.size(2) * x.size(3)};
  throw std::invalid_argument("batchnorm expects 2-d or 4-d input, got " + shape_str(x.shape()));
}

inline int64_t bn_index(const BnDims& d, int64_t o, int64_t c, int64_t i) {
  return (o * d.channels + c) * d.inner + i;
}

}  // namespace

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 std::vector<real_t>& running_mean, std::vector<real_t>& running_var,
                 bool training, real_t momentum, real_t eps) {
  const BnDims d = bn_dims(x);
  if (gamma.numel() != d.channels || beta.numel() != d.channels ||
      static_cast<int64_t>(running_mean.size()) != d.channels ||
      static_cast<int64_t>(running_var.size()) != d.channels)
    throw std::invalid_argument("batchnorm: parameter extents do not match channel count");

  std::vector<real_t> mu(static_cast<size_t>(d.channels)), var(static_cast<size_t>(d.channels));
  if (training) {
    const real_t count = static_cast<real_t>(d.outer * d.inner);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t c = 0; c < d.channels; ++c) {
      real_t s = real_t(0);
      for (int64_t o = 0; o < d.outer; ++o)
        for (int64_t i = 0; i < d.inner; ++i) s += x.at(bn_index(d, o, c, i));
      const real_t m = s / count;
      real_t v = real_t(0);
      for (int64_t o = 0; o < d.outer; ++o)
        for (int64_t i = 0; i < d.inner; ++i) {
          const real_t dv = x.at(bn_index(d, o, c, i)) - m;
          v += dv * dv;
        }
      mu[static_cast<size_t>(c)] = m;
      var[static_cast<size_t>(c)] = v / count;
    }
    for (int64_t c = 0; c < d.channels; ++c) {
      running_mean[static_cast<size_t>(c)] = (real_t(1) - momentum) * running_mean[static_cast<size_t>(c)] + momentum * mu[static_cast<size_t>(c)];
      running_var[static_cast<size_t>(c)] = (real_t(1) - momentum) * running_var[static_cast<size_t>(c)] + momentum * var[static_cast<size_t>(c)];
    }
  } else {
    mu.assign(running_mean.begin(), running_mean.end());
    var.assign(running_var.begin(), running_var.end());
  }

  Tensor out = Tensor::zeros(x.shape());
  out.node()->requires_grad = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
  std::vector<real_t> inv_sd(static_cast<size_t>(d.channels));
  for (int64_t c = 0; c < d.channels; ++c) inv_sd[static_cast<size_t>(c)] = real_t(1) / std::sqrt(var[static_cast<size_t>(c)] + eps);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t c = 0; c < d.channels; ++c) {
    const real_t g = gamma.at(c), bt = beta.at(c), m = mu[static_cast<size_t>(c)], is = inv_sd[static_cast<size_t>(c)];
    for (int64_t o = 0; o < d.outer; ++o)
      for (int64_t i = 0; i < d.inner; ++i) {
        const int64_t idx = bn_index(d, o, c, i);
        out.at(idx) = g * (x.at(idx) - m) * is + bt;
      }
  }

  if (out.requires_grad()) {
    out.node()->parents = {x.node(), gamma.node(), beta.node()};
    out.node()->backward_fn = [xn = x.node(), gn = gamma.node(), btn = beta.node(), on = out.node(), d, mu, inv_sd,
                               training]() {
      const real_t count = static_cast<real_t>(d.outer * d.inner);
      // grad buffers must exist before the parallel region
      if (gn->requires_grad) gn->ensure_grad();
      if (btn->requires_grad) btn->ensure_grad();
      if (xn->requires_grad) xn->ensure_grad();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (int64_t c = 0; c < d.channels; ++c) {
        const real_t m = mu[static_cast<size_t>(c)], is = inv_sd[static_cast<size_t>(c)], g = gn->value[static_cast<size_t>(c)];
        real_t sum_dy = real_t(0), sum_dy_xhat = real_t(0);
        for (int64_t o = 0; o < d.outer; ++o)
          for (int64_t i = 0; i < d.inner; ++i) {
            const int64_t idx = bn_index(d, o, c, i);
            const real_t dy = on->grad[static_cast<size_t>(idx)];
            sum_dy += dy;
            sum_dy_xhat += dy * (xn->value[static_cast<size_t>(idx)] - m) * is;
          }
        if (gn->requires_grad) gn->grad[static_cast<size_t>(c)] += sum_dy_xhat;
        if (btn->requires_grad) btn->grad[static_cast<size_t>(c)] += sum_dy;
        if (xn->requires_grad) {
          for (int64_t o = 0; o < d.outer; ++o)
            for (int64_t i = 0; i < d.inner; ++i) {
              const int64_t idx = bn_index(d, o, c, i);
              const real_t dy = on->grad[static_cast<size_t>(idx)];
              if (training) {
                const real_t xhat = (xn->value[static_cast<size_t>(idx)] - m) * is;
                xn->grad[static_cast<size_t>(idx)] += g * is * (dy - sum_dy / count - xhat * sum_dy_xhat / count);
              } else {
                xn->grad[static_cast<size_t>(idx)] += g * is * dy;
              }
            }
        }
      }
    };
  }
  return out;
}

// ---- losses ----------------------------------------------------------------

Tensor cross_entropy(const Tensor& logits, const std::vector<int64_t>& labels, Reduction reduction) {
  if (logits.ndim() != 2) throw std::invalid_argument("cross_entropy: logits must be 2-d, got " + shape_str(logits.shape()));
  const int64_t B = logits.size(0), K = logits.size(1);
  if (static_cast<int64_t>(labels.size()) != B)
    throw std::invalid_argument("cross_entropy: batch has " + std::to_string(B) + " rows but " + std::to_string(labels.size()) + " labels");
  for (int64_t b = 0; b < B; ++b)
    if (labels[static_cast<size_t>(b)] < 0 || labels[static_cast<size_t>(b)] >= K)
      throw std::invalid_argument("cross_entropy: label " + std::to_string(labels[static_cast<size_t>(b)]) + " out of range [0," + std::to_string(K) + ")");

  const real_t w = reduction == Reduction::Mean ? real_t(1) / static_cast<real_t>(B) : real_t(1);
  Tensor out = Tensor::zeros({});
  out.node()->requires_grad = logits.requires_grad();
  real_t total = real_t(0);
  for (int64_t b = 0; b < B; ++b) {
    const real_t* row = logits.data().data() + b * K;
    real_t mx = row[0];
    for (int64_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    real_t lse = real_t(0);
    for (int64_t k = 0; k < K; ++k) lse += std::exp(row[k] - mx);
    lse = mx + std::log(lse);
    total += lse - row[labels[static_cast<size_t>(b)]];
  }
  out.at(0) = total * w;

  if (out.requires_grad()) {
    out.node()->parents = {logits.node()};
    out.node()->backward_fn = [ln = logits.node(), on = out.node(), labels, B, K, w]() {
      ln->ensure_grad();
      const real_t g = on->grad[0] * w;
      for (int64_t b = 0; b < B; ++b) {
        const real_t* row = ln->value.data() + b * K;
        real_t mx = row[0];
        for (int64_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        real_t z = real_t(0);
        for (int64_t k = 0; k < K; ++k) z += std::exp(row[k] - mx);
        for (int64_t k = 0; k < K; ++k) {
          real_t p = std::exp(row[k] - mx) / z;
          if (k == labels[static_cast<size_t>(b)]) p -= real_t(1);
          ln->grad[static_cast<size_t>(b * K + k)] += g * p;
        }
      }
    };
  }
  return out;
}

Tensor nll_rows(const Tensor& logits, const std::vector<int64_t>& labels) {
  if (logits.ndim() != 2) throw std::invalid_argument("nll_rows: logits must be 2-d");
  const int64_t B = logits.size(0), K = logits.size(1);
  if (static_cast<int64_t>(labels.size()) != B) throw std::invalid_argument("nll_rows: label count mismatch");
  for (int64_t b = 0; b < B; ++b)
    if (labels[static_cast<size_t>(b)] < 0 || labels[static_cast<size_t>(b)] >= K)
      throw std::invalid_argument("nll_rows: label out of range");

  Tensor out = Tensor::zeros({B});
  out.node()->requires_grad = logits.requires_grad();
  for (int64_t b = 0; b < B; ++b) {
    const real_t* row = logits.data().data() + b * K;
    real_t mx = row[0];
    for (int64_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    real_t lse = real_t(0);
    for (int64_t k = 0; k < K; ++k) lse += std::exp(row[k] - mx);
    out.at(b) = mx + std::log(lse) - row[labels[static_cast<size_t>(b)]];
  }
  if (out.requires_grad()) {
    out.node()->parents = {logits.node()};
    out.node()->backward_fn = [ln = logits.node(), on = out.node(), labels, B, K]() {
      ln->ensure_grad();
      for (int64_t b = 0; b < B; ++b) {
        const real_t g = on->grad[static_cast<size_t>(b)];
        if (g == real_t(0)) continue;
        const real_t* row = ln->value.data() + b * K;
        real_t mx = row[0];
        for (int64_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        real_t z = real_t(0);
        for (int64_t k = 0; k < K; ++k) z += std::exp(row[k] - mx);
        for (int64_t k = 0; k < K; ++k) {
          real_t p = std::exp(row[k] - mx) / z;
          if (k == labels[static_cast<size_t>(b)]) p -= real_t(1);
          ln->grad[static_cast<size_t>(b * K + k)] += g * p;
        }
      }
    };
  }
  return out;
}

Tensor cw_margin(const Tensor& logits, const std::vector<int64_t>& labels, real_t kappa) {
  if (logits.ndim() != 2) throw std::invalid_argument("cw_margin: logits must be 2-d");
  const int64_t B = logits.size(0), K = logits.size(1);
  if (static_cast<int64_t>(labels.size()) != B) throw std::invalid_argument("cw_margin: label count mismatch");

  Tensor out = Tensor::zeros({B});
  out.node()->requires_grad = logits.requires_grad();
  std::vector<int64_t> best_other(static_cast<size_t>(B));
  std::vector<char> active(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) {
    const real_t* row = logits.data().data() + b * K;
    const int64_t y = labels[static_cast<size_t>(b)];
    int64_t bo = -1;
    for (int64_t k = 0; k < K; ++k) {
      if (k == y) continue;
      if (bo < 0 || row[k] > row[bo]) bo = k;
    }
    best_other[static_cast<size_t>(b)] = bo;
    const real_t margin = row[y] - row[bo];
    active[static_cast<size_t>(b)] = margin > -kappa;
    out.at(b) = std::max(-kappa, margin);
  }

  if (out.requires_grad()) {
    out.node()->parents = {logits.node()};
    out.node()->backward_fn = [ln = logits.node(), on = out.node(), labels, best_other, active, B, K]() {
      ln->ensure_grad();
      for (int64_t b = 0; b < B; ++b) {
        if (!active[static_cast<size_t>(b)]) continue;
        const real_t g = on->grad[static_cast<size_t>(b)];
        ln->grad[static_cast<size_t>(b * K + labels[static_cast<size_t>(b)])] += g;
        ln->grad[static_cast<size_t>(b * K + best_other[static_cast<size_t>(b)])] -= g;
      }
    };
  }
  return out;
}

// ---- affine warp ----------------------------------------------------------------

namespace {

struct WarpDims {
  int64_t B, C, H, W;
};

// pixel-space sample location; arranged so the identity matrix lands exactly
// on the source grid (half-integer arithmetic is exact in binary fp)
inline void warp_coords(const real_t* th, int64_t i, int64_t j, real_t cx, real_t cy, real_t rxy, real_t ryx,
                        real_t& u, real_t& v) {
  const real_t dx = static_cast<real_t>(j) - cx;
  const real_t dy = static_cast<real_t>(i) - cy;
  u = th[0] * dx + th[1] * dy * rxy + th[2] * cx + cx;
  v = th[3] * dx * ryx + th[4] * dy + th[5] * cy + cy;
}

}  // namespace

Tensor affine_warp(const Tensor& x, const Tensor& theta) {
  if (x.ndim() == 3 && theta.ndim() == 2) {
    Tensor xb = reshape(x, {1, x.size(0), x.size(1), x.size(2)});
    Tensor tb = reshape(theta, {1, 2, 3});
    Tensor out = affine_warp(xb, tb);
    return reshape(out, {x.size(0), x.size(1), x.size(2)});
  }
  if (x.ndim() != 4 || theta.ndim() != 3 || theta.size(0) != x.size(0) || theta.size(1) != 2 || theta.size(2) != 3)
    throw std::invalid_argument("affine_warp: expected x[B,C,H,W] and theta[B,2,3], got " + shape_str(x.shape()) + " and " + shape_str(theta.shape()));
  const WarpDims d{x.size(0), x.size(1), x.size(2), x.size(3)};
  if (d.H < 2 || d.W < 2) throw std::invalid_argument("affine_warp: image must be at least 2x2");

  const real_t cx = static_cast<real_t>(d.W - 1) / real_t(2);
  const real_t cy = static_cast<real_t>(d.H - 1) / real_t(2);
  const real_t rxy = static_cast<real_t>(d.W - 1) / static_cast<real_t>(d.H - 1);
  const real_t ryx = static_cast<real_t>(d.H - 1) / static_cast<real_t>(d.W - 1);

  Tensor out = Tensor::zeros(x.shape());
  out.node()->requires_grad = x.requires_grad() || theta.requires_grad();

  auto sample = [&](const real_t* img, real_t u, real_t v, real_t w00, real_t w01, real_t w10, real_t w11,
                    int64_t u0, int64_t v0) -> real_t {
    const int64_t u1 = u0 + 1, v1 = v0 + 1;
    real_t acc = real_t(0);
    if (v0 >= 0 && v0 < d.H) {
      if (u0 >= 0 && u0 < d.W) acc += w00 * img[v0 * d.W + u0];
      if (u1 >= 0 && u1 < d.W) acc += w01 * img[v0 * d.W + u1];
    }
    if (v1 >= 0 && v1 < d.H) {
      if (u0 >= 0 && u0 < d.W) acc += w10 * img[v1 * d.W + u0];
      if (u1 >= 0 && u1 < d.W) acc += w11 * img[v1 * d.W + u1];
    }
    (void)u;
    (void)v;
    return acc;
  };

#ifdef _OPENMP
#pragma omp parallel for schedule(static) collapse(2)
#endif
  for (int64_t b = 0; b < d.B; ++b)
    for (int64_t c = 0; c < d.C; ++c) {
      const real_t* th = theta.data().data() + b * 6;
      const real_t* img = x.data().data() + (b * d.C + c) * d.H * d.W;
      real_t* o = out.data().data() + (b * d.C + c) * d.H * d.W;
      for (int64_t i = 0; i < d.H; ++i)
        for (int64_t j = 0; j < d.W; ++j) {
          real_t u, v;
          warp_coords(th, i, j, cx, cy, rxy, ryx, u, v);
          const int64_t u0 = static_cast<int64_t>(std::floor(u)), v0 = static_cast<int64_t>(std::floor(v));
          const real_t wu = u - static_cast<real_t>(u0), wv = v - static_cast<real_t>(v0);
          o[i * d.W + j] = sample(img, u, v, (real_t(1) - wu) * (real_t(1) - wv), wu * (real_t(1) - wv),
                                  (real_t(1) - wu) * wv, wu * wv, u0, v0);
        }
    }

  if (out.requires_grad()) {
    out.node()->parents = {x.node(), theta.node()};
    out.node()->backward_fn = [xn = x.node(), tn = theta.node(), on = out.node(), d, cx, cy, rxy, ryx]() {
      const bool need_x = xn->requires_grad, need_t = tn->requires_grad;
      if (need_x) xn->ensure_grad();
      if (need_t) tn->ensure_grad();
      // one (b,c) pane per worker; scatter within a pane is sequential
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (int64_t b = 0; b < d.B; ++b) {
        const real_t* th = tn->value.data() + b * 6;
        real_t dth[6] = {0, 0, 0, 0, 0, 0};
        for (int64_t c = 0; c < d.C; ++c) {
          const real_t* img = xn->value.data() + (b * d.C + c) * d.H * d.W;
          const real_t* go = on->grad.data() + (b * d.C + c) * d.H * d.W;
          real_t* gx = need_x ? xn->grad.data() + (b * d.C + c) * d.H * d.W : nullptr;
          for (int64_t i = 0; i < d.H; ++i)
            for (int64_t j = 0; j < d.W; ++j) {
              const real_t g = go[i * d.W + j];
              if (g == real_t(0)) continue;
              real_t u, v;
              warp_coords(th, i, j, cx, cy, rxy, ryx, u, v);
              const int64_t u0 = static_cast<int64_t>(std::floor(u)), v0 = static_cast<int64_t>(std::floor(v));
              const int64_t u1 = u0 + 1, v1 = v0 + 1;
              const real_t wu = u - static_cast<real_t>(u0), wv = v - static_cast<real_t>(v0);
              const bool iu0 = u0 >= 0 && u0 < d.W, iu1 = u1 >= 0 && u1 < d.W;
              const bool iv0 = v0 >= 0 && v0 < d.H, iv1 = v1 >= 0 && v1 < d.H;
              const real_t p00 = (iv0 && iu0) ? img[v0 * d.W + u0] : real_t(0);
              const real_t p01 = (iv0 && iu1) ? img[v0 * d.W + u1] : real_t(0);
              const real_t p10 = (iv1 && iu0) ? img[v1 * d.W + u0] : real_t(0);
              const real_t p11 = (iv1 && iu1) ? img[v1 * d.W + u1] : real_t(0);
              if (need_x) {
                if (iv0 && iu0) gx[v0 * d.W + u0] += g * (real_t(1) - wu) * (real_t(1) - wv);
                if (iv0 && iu1) gx[v0 * d.W + u1] += g * wu * (real_t(1) - wv);
                if (iv1 && iu0) gx[v1 * d.W + u0] += g * (real_t(1) - wu) * wv;
                if (iv1 && iu1) gx[v1 * d.W + u1] += g * wu * wv;
              }
              if (need_t) {
                const real_t dval_du = (real_t(1) - wv) * (p01 - p00) + wv * (p11 - p10);
                const real_t dval_dv = (real_t(1) - wu) * (p10 - p00) + wu * (p11 - p01);
                const real_t dx = static_cast<real_t>(j) - cx;
                const real_t dy = static_cast<real_t>(i) - cy;
                dth[0] += g * dval_du * dx;
                dth[1] += g * dval_du * dy * rxy;
                dth[2] += g * dval_du * cx;
                dth[3] += g * dval_dv * dx * ryx;
                dth[4] += g * dval_dv * dy;
                dth[5] += g * dval_dv * cy;
              }
            }
        }
        if (need_t)
          for (int k = 0; k < 6; ++k) tn->grad[static_cast<size_t>(b * 6 + k)] += dth[k];
      }
    };
  }
  return out;
}

// ---- pose -> affine matrix ---------------------------------------------------

Tensor pose_matrix(const Tensor& pose) {
  if (pose.ndim() != 2 || pose.size(1) != 6)
    throw std::invalid_argument("pose_matrix: expected [B,6] pose, got " + shape_str(pose.shape()));
  const int64_t B = pose.size(0);
  Tensor out = Tensor::zeros({B, 2, 3});
  out.node()->requires_grad = pose.requires_grad();
  for (int64_t b = 0; b < B; ++b) {
    const real_t* p = pose.data().data() + b * 6;  // t1 t2 l1 l2 s r
    pose_matrix_entries(p[0], p[1], p[2], p[3], p[4], p[5], out.data().data() + b * 6);
  }
  if (out.requires_grad()) {
    out.node()->parents = {pose.node()};
    out.node()->backward_fn = [pn = pose.node(), on = out.node(), B]() {
      pn->ensure_grad();
      for (int64_t b = 0; b < B; ++b) {
        const real_t* p = pn->value.data() + b * 6;
        const real_t l1 = p[2], l2 = p[3], s = p[4], r = p[5];
        const real_t cr = std::cos(r), sr = std::sin(r);
        const real_t* g = on->grad.data() + b * 6;
        real_t* d = pn->grad.data() + b * 6;
        d[0] += g[2];
        d[1] += g[5];
        d[2] += g[0] * (-sr * s) + g[1] * (cr * s);
        d[3] += g[3] * (cr * s) + g[4] * (-sr * s);
        d[4] += g[0] * (cr - sr * l1) + g[1] * (-sr + cr * l1) + g[3] * (cr * l2 + sr) + g[4] * (-sr * l2 + cr);
        d[5] += g[0] * (-sr * s - cr * s * l1) + g[1] * (-cr * s - sr * s * l1) + g[3] * (-sr * s * l2 + cr * s) +
                g[4] * (-cr * s * l2 - sr * s);
      }
    };
  }
  return out;
}

// ---- diagnostics ------------------------------------------------------------

std::vector<real_t> softmax_values(const Tensor& logits) {
  const int64_t B = logits.size(0), K = logits.size(1);
  std::vector<real_t> probs(static_cast<size_t>(B * K));
  for (int64_t b = 0; b < B; ++b) {
    const real_t* row = logits.data().data() + b * K;
    real_t mx = row[0];
    for (int64_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    real_t z = real_t(0);
    for (int64_t k = 0; k < K; ++k) z += std::exp(row[k] - mx);
    for (int64_t k = 0; k < K; ++k) probs[static_cast<size_t>(b * K + k)] = std::exp(row[k] - mx) / z;
  }
  return probs;
}

std::vector<int64_t> argmax_rows(const Tensor& logits) {
  const int64_t B = logits.size(0), K = logits.size(1);
  std::vector<int64_t> out(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) {
    const real_t* row = logits.data().data() + b * K;
    int64_t best = 0;
    for (int64_t k = 1; k < K; ++k)
      if (row[k] > row[best]) best = k;  // ties keep the lowest index
    out[static_cast<size_t>(b)] = best;
  }
  return out;
}

}  // namespace robustlab
