#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "robustlab/decoder.hpp"
#include "robustlab/nn.hpp"
#include "robustlab/rng.hpp"
#include "robustlab/tensor.hpp"

namespace robustlab::attacks {

enum class NormKind { LInf, L2 };

std::string norm_name(NormKind n);

struct AttackConfig {
  NormKind norm = NormKind::LInf;
  double epsilon = 0.3;  // ball radius; eta for latent / transform attacks
  int64_t iterations = 40;
  double learning_rate = 0.005;
  int64_t restarts = 5;
  bool early_stop = true;
  uint64_t seed = 0;  // per-input streams derive from (seed, input index, restart)
  // Carlini-Wagner settings
  double cw_kappa = 1.5;
  double cw_lambda = 1.0;
  int64_t cw_iterations = 120;

  void validate() const;
};

struct AttackResult {
  bool success = false;
  Tensor adversarial;                  // [C,H,W]; for latent attacks exactly dec(z + zeta)
  std::vector<double> perturbation;    // delta (image), zeta (latent) or t (transform)
  int64_t iterations_used = 0;
  int64_t restart_index = -1;
  double final_loss = 0;
  double perturbation_norm = 0;        // measured in the attack's norm
  int64_t predicted_before = -1;
  int64_t predicted_after = -1;
  std::string norm_used;
};

// ---- ball primitives -------------------------------------------------------

// LInf: elementwise clamp to [-eps, eps]; L2: radial scaling by min(1, eps/|d|).
void project_ball(std::span<real_t> delta, NormKind norm, double eps);

// Uniform over distance and direction: d = u * eps * dir with u ~ U(0,1);
// L2 directions are normalized Gaussians, LInf directions are per-coordinate
// uniform on [-1,1]. Always inside the ball.
std::vector<real_t> init_perturbation(Rng& rng, NormKind norm, double eps, int64_t n);
// same, with the distance fraction u pinned (the direction still consumes rng)
std::vector<real_t> init_perturbation_fixed_distance(Rng& rng, NormKind norm, double eps, int64_t n, double u);

// ---- white-box attacks -------------------------------------------------------

// Projected Adam ascent on the training loss inside the norm ball and the
// [0,1] image box. Batched variant runs per-example streams keyed by
// `indices`, so results match one-at-a-time invocations bit-exactly.
std::vector<AttackResult> pgd_attack_batch(Classifier& model, const Tensor& images,
                                           const std::vector<int64_t>& labels, const AttackConfig& cfg,
                                           const std::vector<int64_t>& indices = {});
AttackResult pgd_attack(Classifier& model, const Tensor& image, int64_t label, const AttackConfig& cfg,
                        int64_t index = 0);

// Carlini-Wagner L2: tanh reparameterization, logit-margin objective plus
// lambda * |delta|_2, unconstrained Adam.
std::vector<AttackResult> cw_attack_batch(Classifier& model, const Tensor& images,
                                          const std::vector<int64_t>& labels, const AttackConfig& cfg,
                                          const std::vector<int64_t>& indices = {});
AttackResult cw_attack(Classifier& model, const Tensor& image, int64_t label, const AttackConfig& cfg,
                       int64_t index = 0);

// Latent-space ascent through a decoder: zeta in the eta-ball, z + zeta kept
// inside the decoder's latent box, adversarial image exactly dec(z + zeta).
std::vector<AttackResult> on_manifold_attack_batch(Classifier& model, const DecoderRef& dec, const Tensor& z0,
                                                   const std::vector<int64_t>& labels, const AttackConfig& cfg,
                                                   const std::vector<int64_t>& indices = {});
AttackResult on_manifold_attack(Classifier& model, const DecoderRef& dec, const Tensor& z0_row, int64_t label,
                                const AttackConfig& cfg, int64_t index = 0);

// Adversarial transformation: ascent over 6-DoF pose offsets t (|t|_inf <= eta)
// applied to the input image through the differentiable warp.
std::vector<AttackResult> transformation_attack_batch(Classifier& model, const Tensor& images,
                                                      const std::vector<int64_t>& labels, const AttackConfig& cfg,
                                                      const std::vector<int64_t>& indices = {});
AttackResult transformation_attack(Classifier& model, const Tensor& image, int64_t label, const AttackConfig& cfg,
                                   int64_t index = 0);

// ---- baselines and black-box -----------------------------------------------------

enum class PerturbSpace { Image, Latent, Transform };

// One uniform draw per restart in the corresponding ball, no optimization.
// For Latent, `dec` and `z0` must be provided.
std::vector<AttackResult> random_perturbation_baseline(Classifier& model, PerturbSpace space, const Tensor& inputs,
                                                       const std::vector<int64_t>& labels, const AttackConfig& cfg,
                                                       const DecoderRef* dec = nullptr, const Tensor* z0 = nullptr,
                                                       const std::vector<int64_t>& indices = {});

struct TransferStats {
  double white_box_rate = 0;   // on the jointly-correct set, against the source
  double transfer_rate = 0;    // on the jointly-correct set, against the target
  int64_t jointly_correct = 0;
  std::vector<AttackResult> results;      // per-example, evaluated on the target
  std::vector<char> eligible;             // jointly-correct mask
};

TransferStats transfer_attack(Classifier& source, Classifier& target, const Tensor& images,
                              const std::vector<int64_t>& labels, const AttackConfig& cfg);

// ---- metrics ---------------------------------------------------------------------

// (# successes among eligible) / (# eligible); empty optional when none eligible
std::optional<double> success_rate(const std::vector<AttackResult>& results, const std::vector<char>& eligible);

void write_attack_csv(const std::string& path, const std::vector<AttackResult>& results,
                      const std::vector<int64_t>& labels);

}  // namespace robustlab::attacks
