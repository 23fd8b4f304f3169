#include "robustlab/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "robustlab/csvfmt.hpp"
#include "robustlab/ops.hpp"
#include "robustlab/optim.hpp"
#include "robustlab/rng.hpp"

namespace robustlab::defenses {

namespace {
constexpr uint64_t kShuffleStream = 0x5F0FF1E;
constexpr uint64_t kInnerStream = 0x1EE7A77;
constexpr uint64_t kMixStream = 0x313C;
}  // namespace

std::string training_kind_name(TrainingKind k) {
  switch (k) {
    case TrainingKind::Normal: return "normal";
    case TrainingKind::AdvHalf: return "adv_half";
    case TrainingKind::AdvFull: return "adv_full";
    case TrainingKind::AdvWeak: return "adv_weak";
    case TrainingKind::OnManifold: return "on_manifold";
    case TrainingKind::AdvTransform: return "adv_transform";
    case TrainingKind::RandomImage: return "random_image";
    case TrainingKind::RandomLatent: return "random_latent";
    case TrainingKind::RandomTransform: return "random_transform";
  }
  return "unknown";
}

TrainingKind training_kind_from_name(const std::string& name) {
  for (TrainingKind k : {TrainingKind::Normal, TrainingKind::AdvHalf, TrainingKind::AdvFull, TrainingKind::AdvWeak,
                         TrainingKind::OnManifold, TrainingKind::AdvTransform, TrainingKind::RandomImage,
                         TrainingKind::RandomLatent, TrainingKind::RandomTransform})
    if (training_kind_name(k) == name) return k;
  throw std::invalid_argument("unknown training mode '" + name + "'");
}

namespace {

bool mode_needs_manifold(TrainingKind k) {
  return k == TrainingKind::OnManifold || k == TrainingKind::RandomLatent;
}

bool mode_perturbs(TrainingKind k) { return k != TrainingKind::Normal; }

// rows of the batch replaced by the inner construction
int64_t perturbed_begin(TrainingKind k, int64_t batch) {
  if (k == TrainingKind::Normal) return batch;          // none
  if (k == TrainingKind::AdvHalf) return batch / 2;     // second half: ceil(B/2) rows
  return 0;                                             // all rows
}

Tensor gather_images(const fonts::SyntheticDataset& data, const std::vector<int64_t>& ids) {
  const int64_t C = data.images.size(1), H = data.images.size(2), W = data.images.size(3);
  const int64_t per = C * H * W;
  Tensor out = Tensor::zeros({static_cast<int64_t>(ids.size()), C, H, W});
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy(data.images.data().begin() + ids[i] * per, data.images.data().begin() + (ids[i] + 1) * per,
              out.data().begin() + static_cast<int64_t>(i) * per);
  return out;
}

}  // namespace

TrainResult train(Classifier model, const fonts::SyntheticDataset& data, const TrainingMode& mode,
                  const TrainingSchedule& schedule, const BatchObserver& observer) {
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (schedule.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  const int64_t N = schedule.train_examples > 0 ? schedule.train_examples : data.size();
  if (N > data.size())
    throw std::invalid_argument("train: requested " + std::to_string(N) + " examples but dataset has " +
                                std::to_string(data.size()));
  if (mode_needs_manifold(mode.kind) && mode.manifold == nullptr)
    throw std::invalid_argument("train: mode '" + training_kind_name(mode.kind) + "' requires a manifold resource");

  AdamConfig ocfg;
  ocfg.lr = static_cast<real_t>(schedule.learning_rate);
  ocfg.lr_decay = static_cast<real_t>(schedule.lr_decay);
  ocfg.weight_decay = static_cast<real_t>(schedule.weight_decay);
  Adam opt(model.params(), ocfg);

  attacks::AttackConfig inner = mode.inner;
  inner.restarts = 1;  // training budget; evaluation keeps the full restart count
  inner.early_stop = mode.kind == TrainingKind::AdvWeak;
  inner.seed = Rng::derive(schedule.seed, kInnerStream);

  TrainResult result;
  const int64_t C = data.images.size(1), H = data.images.size(2), W = data.images.size(3);

  for (int64_t epoch = 0; epoch < schedule.epochs; ++epoch) {
    Rng shuffle_rng(Rng::derive(schedule.seed, static_cast<uint64_t>(epoch), kShuffleStream));
    auto perm = shuffle_rng.permutation(N);
    Rng mix_rng(Rng::derive(schedule.seed, static_cast<uint64_t>(epoch), kMixStream));

    double loss_sum = 0;
    int64_t err_count = 0, seen = 0;
    int64_t batch_index = 0;

    for (int64_t start = 0; start < N; start += schedule.batch_size, ++batch_index) {
      const int64_t B = std::min(schedule.batch_size, N - start);
      std::vector<int64_t> ids(perm.begin() + start, perm.begin() + start + B);
      Tensor batch = gather_images(data, ids);
      std::vector<int64_t> labels(static_cast<size_t>(B));
      for (int64_t i = 0; i < B; ++i) labels[static_cast<size_t>(i)] = data.labels[static_cast<size_t>(ids[static_cast<size_t>(i)])];

      const int64_t pbegin = perturbed_begin(mode.kind, B);
      const int64_t pcount = B - pbegin;
      Tensor latents_used;

      // draw the per-batch mix decision whether or not it is used, so the
      // shuffle stream stays untouched by the mode
      const bool mix_regular = mix_rng.uniform() < mode.mix_regular_ratio;

      if (pcount > 0 && mode_perturbs(mode.kind)) {
        std::vector<int64_t> sub_ids(ids.begin() + pbegin, ids.end());
        std::vector<int64_t> sub_labels(labels.begin() + pbegin, labels.end());
        Tensor sub_images = gather_images(data, sub_ids);
        // fresh randomness per encounter: streams keyed by (epoch, dataset row)
        std::vector<int64_t> stream_ids(static_cast<size_t>(pcount));
        for (int64_t i = 0; i < pcount; ++i)
          stream_ids[static_cast<size_t>(i)] = epoch * data.size() + sub_ids[static_cast<size_t>(i)];

        model.set_mode(Mode::Eval);
        std::vector<attacks::AttackResult> crafted;
        TrainingKind effective = mode.kind;
        if (mode.kind == TrainingKind::OnManifold && mix_regular) effective = TrainingKind::AdvFull;
        switch (effective) {
          case TrainingKind::AdvHalf:
          case TrainingKind::AdvFull:
          case TrainingKind::AdvWeak:
            crafted = attacks::pgd_attack_batch(model, sub_images, sub_labels, inner, stream_ids);
            break;
          case TrainingKind::OnManifold: {
            auto [dec, z0] = mode.manifold->for_examples(sub_ids);
            crafted = attacks::on_manifold_attack_batch(model, dec, z0, sub_labels, inner, stream_ids);
            latents_used = Tensor::zeros({B, dec.latent_dim});
            for (int64_t i = 0; i < pcount; ++i)
              for (int64_t l = 0; l < dec.latent_dim; ++l)
                latents_used.at((pbegin + i) * dec.latent_dim + l) =
                    z0.at(i * dec.latent_dim + l) +
                    static_cast<real_t>(crafted[static_cast<size_t>(i)].perturbation[static_cast<size_t>(l)]);
            break;
          }
          case TrainingKind::AdvTransform:
            crafted = attacks::transformation_attack_batch(model, sub_images, sub_labels, inner, stream_ids);
            break;
          case TrainingKind::RandomImage:
            crafted = attacks::random_perturbation_baseline(model, attacks::PerturbSpace::Image, sub_images,
                                                            sub_labels, inner, nullptr, nullptr, stream_ids);
            break;
          case TrainingKind::RandomLatent: {
            auto [dec, z0] = mode.manifold->for_examples(sub_ids);
            crafted = attacks::random_perturbation_baseline(model, attacks::PerturbSpace::Latent, sub_images,
                                                            sub_labels, inner, &dec, &z0, stream_ids);
            break;
          }
          case TrainingKind::RandomTransform:
            crafted = attacks::random_perturbation_baseline(model, attacks::PerturbSpace::Transform, sub_images,
                                                            sub_labels, inner, nullptr, nullptr, stream_ids);
            break;
          case TrainingKind::Normal:
            break;
        }
        model.set_mode(Mode::Train);

        const int64_t per = C * H * W;
        for (int64_t i = 0; i < pcount; ++i) {
          const Tensor& adv = crafted[static_cast<size_t>(i)].adversarial;
          std::copy(adv.data().begin(), adv.data().end(), batch.data().begin() + (pbegin + i) * per);
        }
      }

      if (observer) {
        BatchAudit audit;
        audit.epoch = epoch;
        audit.batch_index = batch_index;
        audit.batch_size = B;
        audit.perturbed_count = mode_perturbs(mode.kind) ? pcount : 0;
        audit.example_ids = ids;
        audit.inputs = batch.detached_copy();
        audit.latents_used = latents_used;
        observer(audit);
      }

      model.set_mode(Mode::Train);
      Tensor logits = forward(model, batch);
      const auto preds = argmax_rows(logits);
      for (int64_t i = 0; i < B; ++i)
        if (preds[static_cast<size_t>(i)] != labels[static_cast<size_t>(i)]) ++err_count;
      seen += B;
      Tensor loss = cross_entropy(logits, labels);
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(B);
      opt.zero_grad();
      backward(loss);
      opt.step();
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / static_cast<double>(seen);
    em.train_error = static_cast<double>(err_count) / static_cast<double>(seen);
    em.lr = static_cast<double>(opt.current_lr());
    result.epochs.push_back(em);
    opt.advance_epoch();
  }

  result.model = std::move(model);
  return result;
}

double evaluate(Classifier& model, const fonts::SyntheticDataset& data) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  const Mode prev = model.mode;
  model.set_mode(Mode::Eval);
  const int64_t N = data.size();
  const int64_t chunk = 500;
  int64_t errors = 0;
  for (int64_t start = 0; start < N; start += chunk) {
    const int64_t B = std::min(chunk, N - start);
    std::vector<int64_t> ids(static_cast<size_t>(B));
    for (int64_t i = 0; i < B; ++i) ids[static_cast<size_t>(i)] = start + i;
    Tensor batch = gather_images(data, ids);
    const auto preds = predict(model, batch);
    for (int64_t i = 0; i < B; ++i)
      if (preds[static_cast<size_t>(i)] != data.labels[static_cast<size_t>(start + i)]) ++errors;
  }
  model.set_mode(prev);
  return static_cast<double>(errors) / static_cast<double>(N);
}

// ---- robustness profile -----------------------------------------------------------

std::vector<ProfileEntry> robustness_profile(Classifier& model, const fonts::SyntheticDataset& test,
                                             const std::vector<AttackSpec>& suite,
                                             const ManifoldResource* manifold, const std::string& csv_dir) {
  const Mode prev = model.mode;
  model.set_mode(Mode::Eval);
  std::vector<ProfileEntry> out;

  for (const AttackSpec& spec : suite) {
    const bool needs_manifold = spec.family == AttackFamily::OnManifold || spec.family == AttackFamily::RandomLatent;
    if (needs_manifold && manifold == nullptr)
      throw std::invalid_argument("robustness_profile: attack '" + spec.name + "' requires a manifold resource");

    const int64_t n = std::min<int64_t>(spec.samples, test.size());
    ProfileEntry entry;
    entry.name = spec.name;
    entry.samples = n;

    const int64_t chunk = 100;
    for (int64_t start = 0; start < n; start += chunk) {
      const int64_t B = std::min(chunk, n - start);
      std::vector<int64_t> ids(static_cast<size_t>(B));
      for (int64_t i = 0; i < B; ++i) ids[static_cast<size_t>(i)] = start + i;
      Tensor images = gather_images(test, ids);
      std::vector<int64_t> labels(static_cast<size_t>(B));
      for (int64_t i = 0; i < B; ++i) labels[static_cast<size_t>(i)] = test.labels[static_cast<size_t>(start + i)];

      // eligibility: the clean test input is classified correctly
      const auto clean_pred = predict(model, images);

      std::vector<attacks::AttackResult> results;
      switch (spec.family) {
        case AttackFamily::Pgd:
          results = attacks::pgd_attack_batch(model, images, labels, spec.cfg, ids);
          break;
        case AttackFamily::Cw:
          results = attacks::cw_attack_batch(model, images, labels, spec.cfg, ids);
          break;
        case AttackFamily::OnManifold: {
          auto [dec, z0] = manifold->for_examples(ids);
          results = attacks::on_manifold_attack_batch(model, dec, z0, labels, spec.cfg, ids);
          break;
        }
        case AttackFamily::Transform:
          results = attacks::transformation_attack_batch(model, images, labels, spec.cfg, ids);
          break;
        case AttackFamily::RandomImage:
          results = attacks::random_perturbation_baseline(model, attacks::PerturbSpace::Image, images, labels,
                                                          spec.cfg, nullptr, nullptr, ids);
          break;
        case AttackFamily::RandomLatent: {
          auto [dec, z0] = manifold->for_examples(ids);
          results = attacks::random_perturbation_baseline(model, attacks::PerturbSpace::Latent, images, labels,
                                                          spec.cfg, &dec, &z0, ids);
          break;
        }
        case AttackFamily::RandomTransform:
          results = attacks::random_perturbation_baseline(model, attacks::PerturbSpace::Transform, images, labels,
                                                          spec.cfg, nullptr, nullptr, ids);
          break;
      }

      for (int64_t i = 0; i < B; ++i) {
        entry.results.push_back(results[static_cast<size_t>(i)]);
        entry.eligible_mask.push_back(clean_pred[static_cast<size_t>(i)] == labels[static_cast<size_t>(i)]);
        entry.labels.push_back(labels[static_cast<size_t>(i)]);
      }
    }

    entry.eligible = std::count(entry.eligible_mask.begin(), entry.eligible_mask.end(), 1);
    entry.rate = attacks::success_rate(entry.results, entry.eligible_mask);
    double norm_sum = 0;
    int64_t norm_n = 0;
    for (size_t i = 0; i < entry.results.size(); ++i)
      if (entry.eligible_mask[i] && entry.results[i].success) {
        norm_sum += entry.results[i].perturbation_norm;
        ++norm_n;
      }
    entry.mean_norm_success = norm_n > 0 ? norm_sum / static_cast<double>(norm_n) : 0.0;

    if (!csv_dir.empty()) {
      std::filesystem::create_directories(csv_dir);
      attacks::write_attack_csv(csv_dir + "/attack_" + spec.name + ".csv", entry.results, entry.labels);
    }
    out.push_back(std::move(entry));
  }
  model.set_mode(prev);
  return out;
}

void write_epoch_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& metrics,
                             double test_error) {
  CsvWriter csv(path, {"epoch", "train_loss", "train_error", "test_error", "lr"});
  for (const EpochMetrics& m : metrics) {
    csv.field(m.epoch);
    csv.field(m.train_loss);
    csv.field(m.train_error);
    csv.field(test_error);
    csv.field(m.lr);
    csv.end_row();
  }
}

}  // namespace robustlab::defenses
