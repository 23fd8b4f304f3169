#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "robustlab/tensor.hpp"

namespace robustlab {

// Per-coordinate box constraint on latent codes (pose ranges for the true
// manifold, [-2,2]^L for learned latents).
struct LatentBox {
  std::vector<double> lo, hi;

  int64_t dim() const { return static_cast<int64_t>(lo.size()); }

  static LatentBox cube(int64_t dim, double bound) {
    LatentBox b;
    b.lo.assign(static_cast<size_t>(dim), -bound);
    b.hi.assign(static_cast<size_t>(dim), bound);
    return b;
  }

  void clamp_rows(Tensor& z) const {
    if (z.ndim() != 2 || z.size(1) != dim()) throw std::invalid_argument("latent box: shape mismatch");
    const int64_t B = z.size(0), L = dim();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t l = 0; l < L; ++l) {
        real_t& v = z.at(b * L + l);
        v = std::min(static_cast<real_t>(hi[static_cast<size_t>(l)]),
                     std::max(static_cast<real_t>(lo[static_cast<size_t>(l)]), v));
      }
  }

  bool contains(const Tensor& z, double tol = 0.0) const {
    const int64_t B = z.size(0), L = dim();
    for (int64_t b = 0; b < B; ++b)
      for (int64_t l = 0; l < L; ++l) {
        const double v = z.at(b * L + l);
        if (v < lo[static_cast<size_t>(l)] - tol || v > hi[static_cast<size_t>(l)] + tol) return false;
      }
    return true;
  }
};

// A differentiable map from latent rows [B,L] to images [B,C,H,W] in [0,1],
// together with the valid latent set. Both the exact synthetic decoder and
// learned decoders are used through this one handle.
struct DecoderRef {
  std::function<Tensor(const Tensor&)> decode;
  LatentBox box;
  int64_t latent_dim = 0;
  Shape image_shape;  // {C,H,W}
};

// Supplies, for a list of dataset example ids, the decoder covering those rows
// plus their latent codes z0 [n,L] (stored true poses, or encoder means for a
// learned manifold).
struct ManifoldResource {
  std::function<std::pair<DecoderRef, Tensor>(const std::vector<int64_t>&)> for_examples;
  int64_t latent_dim = 0;
  std::string description;
};

}  // namespace robustlab
