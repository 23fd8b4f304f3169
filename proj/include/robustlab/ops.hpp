#pragma once

#include <cmath>
#include <vector>

#include "robustlab/tensor.hpp"

namespace robustlab {

// 2-d convolution, NCHW input, OIHW weights, zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride, int64_t pad);

// Batch norm over 2-d [B,K] (per feature) or 4-d [B,C,H,W] (per channel).
// In train mode batch statistics are used and running stats updated in place;
// in eval mode the op is a pure function of (params, running stats, input).
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 std::vector<real_t>& running_mean, std::vector<real_t>& running_var,
                 bool training, real_t momentum = real_t(0.1), real_t eps = real_t(1e-5));

enum class Reduction { Mean, Sum };

// Mean (or sum) over the batch of -log softmax(logits)[label], max-stabilized.
Tensor cross_entropy(const Tensor& logits, const std::vector<int64_t>& labels,
                     Reduction reduction = Reduction::Mean);

// per-row -log softmax(logits)[label] without reduction -> [B]
Tensor nll_rows(const Tensor& logits, const std::vector<int64_t>& labels);

// Carlini-Wagner logit margin per example: max(-kappa, l_y - max_{y' != y} l_{y'}).
Tensor cw_margin(const Tensor& logits, const std::vector<int64_t>& labels, real_t kappa);

// Bilinear affine warp on a normalized [-1,1]^2 grid (align-corners), zero
// padding outside the source image; differentiable wrt image and matrix.
// x: [B,C,H,W], theta: [B,2,3] (or x: [C,H,W], theta: [2,3]).
Tensor affine_warp(const Tensor& x, const Tensor& theta);

// Assembles [B,6] pose rows (t1,t2,lambda1,lambda2,s,r) into [B,2,3] affine
// matrices; differentiable wrt the pose.
Tensor pose_matrix(const Tensor& pose);

// Shared matrix-entry formulas so taped and plain paths agree bit-exactly.
template <typename T>
inline void pose_matrix_entries(T t1, T t2, T l1, T l2, T s, T r, T* m) {
  const T cr = std::cos(r), sr = std::sin(r);
  m[0] = cr * s - sr * s * l1;
  m[1] = -sr * s + cr * s * l1;
  m[2] = t1;
  m[3] = cr * s * l2 + sr * s;
  m[4] = -sr * s * l2 + cr * s;
  m[5] = t2;
}

// softmax probabilities of a [B,K] logits tensor (no tape; diagnostics)
std::vector<real_t> softmax_values(const Tensor& logits);

// argmax per row, lowest index wins on ties
std::vector<int64_t> argmax_rows(const Tensor& logits);

}  // namespace robustlab
