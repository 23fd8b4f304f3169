#pragma once

#include <optional>
#include <string>
#include <vector>

#include "robustlab/decoder.hpp"
#include "robustlab/fonts.hpp"
#include "robustlab/nn.hpp"
#include "robustlab/rng.hpp"

namespace robustlab::manifold {

enum class Scope { ClassSpecific, ClassAgnostic };

// VAE-GAN approximation of a (class-)manifold: encoder predicts (mu, logvar),
// the decoder squashes into [0,1] through a sigmoid, the discriminator is
// optional (gan_weight = 0 gives the pure-VAE fallback).
struct ManifoldModel {
  Classifier encoder;        // image -> [B, 2L]
  Classifier decoder;        // z [B,L] -> [B, D] pre-squash
  Classifier discriminator;  // image -> [B, 1] logit
  int64_t latent_dim = 10;
  Scope scope = Scope::ClassAgnostic;
  int64_t class_id = -1;
  double lambda_recon = 3.0;
  double gan_weight = 1.0;
  double latent_bound = 2.0;  // latent box [-2,2]^L
  Shape image_shape;          // {C,H,W}
};

ManifoldModel build_manifold_model(const Shape& image_shape, int64_t latent_dim, int64_t hidden, uint64_t seed);

// encoder outputs split into mean and log-variance
std::pair<Tensor, Tensor> encode(ManifoldModel& m, const Tensor& images);
Tensor encode_mean(ManifoldModel& m, const Tensor& images);
// sigmoid(decoder(z)) reshaped to [B,C,H,W]; taped when z is taped
Tensor decode(ManifoldModel& m, const Tensor& z);

DecoderRef decoder_ref(ManifoldModel& m);
ManifoldResource learned_manifold_resource(ManifoldModel& m, const fonts::SyntheticDataset& ds);

// ---- losses -----------------------------------------------------------------

struct VaeGanLosses {
  Tensor enc, dec, dis;     // taped scalars sharing one reparameterized sample
  double recon_l1 = 0;      // mean per-example L1 reconstruction
  double kl = 0;            // analytic KL(q(z|x) || N(0,I)), mean over batch
};

// One shared reparameterization sample; discriminator probabilities clamped to
// [1e-7, 1-1e-7] before the logs. Rejects non-finite activations.
VaeGanLosses vae_gan_losses(ManifoldModel& m, const Tensor& batch, Rng& sample_rng);

// analytic KL for diagonal Gaussians, summed over coordinates, mean over rows
double analytic_kl(const std::vector<double>& mu, const std::vector<double>& logvar);

// ---- training ----------------------------------------------------------------

struct ManifoldTrainConfig {
  int64_t latent_dim = 10;
  int64_t hidden = 128;
  double lambda_recon = 3.0;
  double gan_weight = 1.0;  // 0 switches to the pure-VAE objective
  int64_t epochs = 10;
  int64_t batch_size = 100;
  double learning_rate = 0.005;
  double lr_decay = 0.9;
  double weight_decay = 0.0001;
  double holdout_fraction = 0.1;
  uint64_t seed = 0;
  int64_t class_id = -1;  // >= 0: class-specific scope over a filtered dataset
};

struct ManifoldTrainResult {
  ManifoldModel model;
  double holdout_l1 = 0;               // mean per-example L1 on held-out rows
  std::vector<double> epoch_enc_loss;  // per-epoch mean encoder loss
  double final_kl = 0;                 // mean KL over the last epoch
};

// Alternating per-batch updates of encoder, decoder and (when gan_weight > 0)
// discriminator. Aborts with a diagnostic on divergence.
ManifoldTrainResult train_manifold(const fonts::SyntheticDataset& data, const ManifoldTrainConfig& cfg);

fonts::SyntheticDataset filter_class(const fonts::SyntheticDataset& data, int64_t class_id);

void save_manifold(const std::string& path, const ManifoldModel& m);
ManifoldModel load_manifold(const std::string& path);

// ---- projection -----------------------------------------------------------------

struct ProjectionResult {
  Tensor projected;            // pi(x~), [C,H,W]
  std::vector<double> latent;  // z~ (decoder) or beta* (knn)
  double distance = 0;         // |x~ - pi(x~)|_2
  std::string method;
  double final_objective = 0;  // decoder projection: best squared objective
};

struct DecoderProjectConfig {
  int64_t iterations = 100;
  double learning_rate = 0.09;
  double lr_decay = 0.95;
  int64_t decay_every = 10;
  int64_t restarts = 1;  // total; restart 0 uses init_z when provided
  uint64_t seed = 0;
};

// Iterative latent search: Adam on |x~ - dec(z)|_2^2 with z projected onto the
// decoder's box each step; best iterate over all restarts kept.
ProjectionResult project_decoder(const Tensor& x_tilde, const DecoderRef& dec,
                                 const std::vector<double>* init_z, const DecoderProjectConfig& cfg);
std::vector<ProjectionResult> project_decoder_batch(const Tensor& x_tilde_batch, const DecoderRef& dec,
                                                    const Tensor* init_z, const DecoderProjectConfig& cfg);

enum class KnnAnchor { TestImage, NeighborMean };

// Least-squares projection onto the subspace spanned by anchored neighbors.
// neighbors: [k, D] rows; rank-deficient systems take the minimum-norm solution.
ProjectionResult project_knn(const Tensor& x_tilde, KnnAnchor anchor, const Tensor& neighbors,
                             const Tensor* x_test);

// k nearest training images to x by L2 distance -> [k, D]
Tensor nearest_neighbors(const Tensor& x, const fonts::SyntheticDataset& train, int64_t k);

// ---- diagnostics -----------------------------------------------------------------

struct Histogram {
  std::vector<double> edges;  // bins + 1 entries
  std::vector<double> mass;   // sums to 1
};

Histogram distance_histogram(const std::vector<double>& distances, int64_t bins);
Histogram distance_histogram(const std::vector<ProjectionResult>& results, int64_t bins);
void write_histogram_csv(const std::string& path, const Histogram& h);

struct TangentDiagnostics {
  double cosine = 0;  // |proj_span(g)| / |g|
  bool defined = false;
  double grad_norm = 0;
};

TangentDiagnostics subspace_cosine(const std::vector<double>& g, const std::vector<std::vector<double>>& basis);
std::vector<double> input_gradient(Classifier& model, const Tensor& x, int64_t label);
std::vector<std::vector<double>> decoder_tangent_basis(const DecoderRef& dec, const std::vector<double>& z,
                                                       double h = 1e-5);
TangentDiagnostics tangent_alignment(Classifier& model, const DecoderRef& dec, const Tensor& x,
                                     const std::vector<double>& z, int64_t label);

}  // namespace robustlab::manifold
