#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "robustlab/attacks.hpp"
#include "robustlab/decoder.hpp"
#include "robustlab/fonts.hpp"
#include "robustlab/nn.hpp"

namespace robustlab::defenses {

enum class TrainingKind {
  Normal,
  AdvHalf,          // 50% clean / 50% adversarial per batch
  AdvFull,          // 100% adversarial
  AdvWeak,          // 100% adversarial, inner attack early-stopped
  OnManifold,       // latent attacks through a decoder (true or learned)
  AdvTransform,     // 6-DoF adversarial transformations
  RandomImage,      // random draws in the image-space ball
  RandomLatent,     // random draws in the latent ball
  RandomTransform,  // random transformations (data augmentation)
};

std::string training_kind_name(TrainingKind k);
TrainingKind training_kind_from_name(const std::string& name);

struct TrainingMode {
  TrainingKind kind = TrainingKind::Normal;
  attacks::AttackConfig inner;              // ball radius, iterations, norm of the inner problem
  const ManifoldResource* manifold = nullptr;  // required for OnManifold / RandomLatent
  double mix_regular_ratio = 0.0;           // OnManifold only: fraction of batches attacked in image space
};

struct TrainingSchedule {
  int64_t epochs = 20;
  int64_t batch_size = 100;
  double learning_rate = 0.01;
  double lr_decay = 0.95;  // per epoch
  double weight_decay = 0.0001;
  uint64_t seed = 0;       // drives weight init and shuffling (separate streams)
  int64_t train_examples = 0;  // N; 0 = use the whole dataset
};

struct EpochMetrics {
  int64_t epoch = 0;
  double train_loss = 0;
  double train_error = 0;
  double lr = 0;
};

// per-batch audit record handed to the optional observer
struct BatchAudit {
  int64_t epoch = 0;
  int64_t batch_index = 0;
  int64_t batch_size = 0;
  int64_t perturbed_count = 0;
  std::vector<int64_t> example_ids;  // dataset rows in batch order
  Tensor inputs;                     // the constructed training inputs [B,C,H,W]
  Tensor latents_used;               // [B,L] z + zeta rows for on-manifold batches, else empty
};

struct TrainResult {
  Classifier model;
  std::vector<EpochMetrics> epochs;
};

using BatchObserver = std::function<void(const BatchAudit&)>;

// Runs the outer minimization over the mode's per-batch construction. The
// inner attack runs the full iteration budget without early stopping except
// for AdvWeak; training attacks use one restart.
TrainResult train(Classifier model, const fonts::SyntheticDataset& data, const TrainingMode& mode,
                  const TrainingSchedule& schedule, const BatchObserver& observer = nullptr);

// fraction of misclassified examples, eval mode, deterministic
double evaluate(Classifier& model, const fonts::SyntheticDataset& data);

// ---- robustness profiles ------------------------------------------------------

enum class AttackFamily { Pgd, Cw, OnManifold, Transform, RandomImage, RandomLatent, RandomTransform };

struct AttackSpec {
  std::string name;
  AttackFamily family = AttackFamily::Pgd;
  attacks::AttackConfig cfg;
  int64_t samples = 200;
};

struct ProfileEntry {
  std::string name;
  std::optional<double> rate;   // success rate on correctly classified inputs
  double mean_norm_success = 0; // mean perturbation norm among successes
  int64_t eligible = 0;
  int64_t samples = 0;
  std::vector<attacks::AttackResult> results;
  std::vector<char> eligible_mask;
  std::vector<int64_t> labels;
};

std::vector<ProfileEntry> robustness_profile(Classifier& model, const fonts::SyntheticDataset& test,
                                             const std::vector<AttackSpec>& suite,
                                             const ManifoldResource* manifold = nullptr,
                                             const std::string& csv_dir = "");

void write_epoch_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& metrics,
                             double test_error);

}  // namespace robustlab::defenses
