#pragma once

#include <array>
#include <numbers>
#include <string>
#include <vector>

#include "robustlab/decoder.hpp"
#include "robustlab/tensor.hpp"

namespace robustlab::fonts {

// 6-DoF latent pose: translation (normalized warp units), shear, scale, rotation.
struct LatentPose {
  double t1 = 0, t2 = 0, lambda1 = 0, lambda2 = 0, s = 1, r = 0;

  std::array<double, 6> as_array() const { return {t1, t2, lambda1, lambda2, s, r}; }
  static LatentPose from_array(const std::array<double, 6>& a) { return {a[0], a[1], a[2], a[3], a[4], a[5]}; }
};

struct PoseRanges {
  double t_lo = -0.2, t_hi = 0.2;
  double shear_lo = -0.5, shear_hi = 0.5;
  double s_lo = 0.75, s_hi = 1.15;
  double r_lo = -std::numbers::pi / 2, r_hi = std::numbers::pi / 2;

  std::array<std::pair<double, double>, 6> bounds() const {
    return {{{t_lo, t_hi}, {t_lo, t_hi}, {shear_lo, shear_hi}, {shear_lo, shear_hi}, {s_lo, s_hi}, {r_lo, r_hi}}};
  }
  bool contains(const LatentPose& p) const;
  LatentPose clamp(const LatentPose& p) const;
  LatentBox as_box() const;
};

struct GlyphPrototype {
  int64_t class_id = 0;  // 0..9, letters 'A'..'J'
  int64_t font_id = 0;
  Tensor bitmap;  // [1,H,W], values in [0,1]
};

// Embedded prototype library: >= 10 distinct stroke styles per class.
std::vector<GlyphPrototype> builtin_prototypes(int64_t size = 28);

// Imports per-class directories (dir/0 .. dir/9 or dir/A .. dir/J) of 8-bit
// grayscale PGM images, linearly mapped to [0,1].
std::vector<GlyphPrototype> import_prototypes(const std::string& dir);

// The printed affine matrix, row-major [a b tx; c d ty].
std::array<double, 6> compose_affine(const LatentPose& pose);

// image = clamp_[0,1](warp(prototype, compose_affine(pose)))
Tensor true_decoder(const GlyphPrototype& proto, const LatentPose& pose);

// Batched differentiable decode: poses [B,6] (may require grad), one prototype
// per row. Gradients flow into the pose tensor.
Tensor decode_pose_batch(const std::vector<const GlyphPrototype*>& protos, const Tensor& poses);

// DecoderRef view of the true manifold for a fixed per-row prototype choice.
DecoderRef true_decoder_ref(std::vector<const GlyphPrototype*> protos, const PoseRanges& ranges = {});

struct SyntheticDataset {
  Tensor images;  // [N,1,H,W]
  std::vector<int64_t> labels;
  std::vector<LatentPose> poses;
  std::vector<int64_t> prototype_indices;
  uint64_t seed = 0;
  int64_t image_size = 28;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  Tensor image(int64_t i) const;                    // [1,H,W] copy
  SyntheticDataset slice(int64_t offset, int64_t count) const;
};

// Balanced generation: classes interleave (example i has class i mod 10) so a
// prefix of any length stays balanced within one example per class. Each
// example derives its randomness from (seed, class, index-within-class).
SyntheticDataset generate(const std::vector<GlyphPrototype>& prototypes, int64_t n_per_class, uint64_t seed,
                          const PoseRanges& ranges = {});

void save_dataset(const std::string& path, const SyntheticDataset& ds);
SyntheticDataset load_dataset(const std::string& path);

// True-manifold resource over a dataset: latent codes are the stored poses,
// decoding fixes each example's prototype (font and class stay constant).
// The dataset and prototype storage must outlive the resource.
ManifoldResource true_manifold_resource(const SyntheticDataset& ds, const std::vector<GlyphPrototype>& protos,
                                        const PoseRanges& ranges = {});

}  // namespace robustlab::fonts
