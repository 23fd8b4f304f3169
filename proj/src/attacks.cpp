#include "robustlab/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "robustlab/csvfmt.hpp"
#include "robustlab/ops.hpp"
#include "robustlab/optim.hpp"

namespace robustlab::attacks {

namespace {
constexpr uint64_t kAttackStream = 0xA77ACC;
}

std::string norm_name(NormKind n) { return n == NormKind::LInf ? "linf" : "l2"; }

void AttackConfig::validate() const {
  if (!(epsilon >= 0)) throw std::invalid_argument("attack: epsilon must be >= 0");
  if (iterations < 1) throw std::invalid_argument("attack: iterations must be >= 1");
  if (restarts < 1) throw std::invalid_argument("attack: restarts must be >= 1");
  if (!(learning_rate > 0)) throw std::invalid_argument("attack: learning rate must be positive");
}

// ---- ball primitives ----------------------------------------------------------

void project_ball(std::span<real_t> delta, NormKind norm, double eps) {
  if (norm == NormKind::LInf) {
    const real_t e = static_cast<real_t>(eps);
    for (real_t& v : delta) v = std::min(e, std::max(-e, v));
  } else {
    double sq = 0;
    for (real_t v : delta) sq += static_cast<double>(v) * static_cast<double>(v);
    const double n = std::sqrt(sq);
    if (n > eps && n > 0) {
      const real_t f = static_cast<real_t>(eps / n);
      for (real_t& v : delta) v *= f;
    }
  }
}

std::vector<real_t> init_perturbation_fixed_distance(Rng& rng, NormKind norm, double eps, int64_t n, double u) {
  std::vector<real_t> d(static_cast<size_t>(n));
  if (norm == NormKind::L2) {
    double sq = 0;
    for (auto& v : d) {
      v = static_cast<real_t>(rng.normal());
      sq += static_cast<double>(v) * static_cast<double>(v);
    }
    const double nn = std::sqrt(sq);
    const double f = nn > 0 ? u * eps / nn : 0.0;
    for (auto& v : d) v = static_cast<real_t>(static_cast<double>(v) * f);
  } else {
    for (auto& v : d) v = static_cast<real_t>(rng.uniform(-1.0, 1.0));
    for (auto& v : d) v = static_cast<real_t>(static_cast<double>(v) * u * eps);
  }
  return d;
}

std::vector<real_t> init_perturbation(Rng& rng, NormKind norm, double eps, int64_t n) {
  // direction draws first, then the distance fraction
  std::vector<real_t> dir(static_cast<size_t>(n));
  if (norm == NormKind::L2) {
    double sq = 0;
    for (auto& v : dir) {
      v = static_cast<real_t>(rng.normal());
      sq += static_cast<double>(v) * static_cast<double>(v);
    }
    const double nn = std::sqrt(sq);
    const double u = rng.uniform();
    const double f = nn > 0 ? u * eps / nn : 0.0;
    for (auto& v : dir) v = static_cast<real_t>(static_cast<double>(v) * f);
    return dir;
  }
  for (auto& v : dir) v = static_cast<real_t>(rng.uniform(-1.0, 1.0));
  const double u = rng.uniform();
  for (auto& v : dir) v = static_cast<real_t>(static_cast<double>(v) * u * eps);
  return dir;
}

// ---- shared projected-ascent driver ----------------------------------------------

namespace {

double measure_norm(std::span<const real_t> v, NormKind norm) {
  if (norm == NormKind::LInf) {
    double m = 0;
    for (real_t x : v) m = std::max(m, std::abs(static_cast<double>(x)));
    return m;
  }
  double sq = 0;
  for (real_t x : v) sq += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(sq);
}

struct AscentHooks {
  int64_t pert_dim = 0;  // per-example perturbation extent
  Shape image_shape;     // {C,H,W}
  // taped forward from the perturbation leaf [B,D]: (logits, adversarial images)
  std::function<std::pair<Tensor, Tensor>(const Tensor&)> build;
  // in-place feasibility projection of one perturbation row
  std::function<void(std::span<real_t>, int64_t row)> project_row;
  NormKind ball_norm = NormKind::LInf;
  std::string norm_label;
  std::vector<int64_t> base_pred;
};

void require_eval_mode(const Classifier& model) {
  if (model.mode != Mode::Eval)
    throw std::invalid_argument("attack: model must be in eval mode so the objective is deterministic");
}

std::vector<int64_t> default_indices(int64_t n, const std::vector<int64_t>& given) {
  if (!given.empty()) {
    if (static_cast<int64_t>(given.size()) != n) throw std::invalid_argument("attack: index count mismatch");
    return given;
  }
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  return idx;
}

// Projected Adam ascent with per-example restart streams, early stopping and
// best-iterate reporting. Rows are independent, so batched and one-at-a-time
// invocations agree bit-exactly. update_iters = 0 gives the random baseline:
// one evaluation of the initial draw per restart, no optimization.
std::vector<AttackResult> projected_ascent(const AscentHooks& hooks, const std::vector<int64_t>& labels,
                                           const AttackConfig& cfg, const std::vector<int64_t>& indices,
                                           int64_t update_iters) {
  const int64_t B = static_cast<int64_t>(labels.size());
  const int64_t D = hooks.pert_dim;
  const int64_t img_elems = shape_numel(hooks.image_shape);

  struct Candidate {
    bool valid = false;
    bool success = false;
    double loss = -1e300;
    int64_t iterations_used = 0;
    int64_t restart = -1;
    int64_t pred = -1;
    std::vector<real_t> pert, image;
  };
  std::vector<Candidate> chosen(static_cast<size_t>(B));
  std::vector<char> frozen(static_cast<size_t>(B), 0);

  for (int64_t restart = 0; restart < cfg.restarts; ++restart) {
    bool all_frozen = true;
    for (int64_t b = 0; b < B; ++b) all_frozen = all_frozen && frozen[static_cast<size_t>(b)];
    if (all_frozen) break;

    Tensor pert = Tensor::zeros({B, D}, /*requires_grad=*/true);
    for (int64_t b = 0; b < B; ++b) {
      if (frozen[static_cast<size_t>(b)]) continue;
      Rng stream(Rng::derive(cfg.seed, static_cast<uint64_t>(indices[static_cast<size_t>(b)]),
                             static_cast<uint64_t>(restart), kAttackStream));
      auto row = init_perturbation(stream, hooks.ball_norm, cfg.epsilon, D);
      std::copy(row.begin(), row.end(), pert.data().begin() + b * D);
      hooks.project_row(pert.data().subspan(static_cast<size_t>(b * D), static_cast<size_t>(D)), b);
    }

    std::optional<Adam> opt;
    if (update_iters > 0) {
      AdamConfig ocfg;
      ocfg.lr = static_cast<real_t>(cfg.learning_rate);
      opt.emplace(std::vector<Tensor>{pert}, ocfg);
    }

    struct RestartBest {
      double loss = -1e300;
      int64_t iter = 0, pred = -1;
      bool success = false;
      std::vector<real_t> pert, image;
    };
    std::vector<RestartBest> best(static_cast<size_t>(B));
    std::vector<char> live(static_cast<size_t>(B));
    for (int64_t b = 0; b < B; ++b) live[static_cast<size_t>(b)] = !frozen[static_cast<size_t>(b)];

    for (int64_t iter = 0; iter <= update_iters; ++iter) {
      bool any_live = false;
      for (int64_t b = 0; b < B; ++b) any_live = any_live || live[static_cast<size_t>(b)];
      if (!any_live) break;

      auto [logits, adv] = hooks.build(pert);
      const auto preds = argmax_rows(logits);
      Tensor nll = nll_rows(logits, labels);

      for (int64_t b = 0; b < B; ++b) {
        if (!live[static_cast<size_t>(b)]) continue;
        const double loss_b = nll.at(b);
        RestartBest& rb = best[static_cast<size_t>(b)];
        const bool flipped = preds[static_cast<size_t>(b)] != labels[static_cast<size_t>(b)];
        const bool record =
            rb.pred < 0 || (flipped && !rb.success) || (flipped == rb.success && loss_b > rb.loss);
        if (record) {
          rb.loss = loss_b;
          rb.iter = iter;
          rb.pred = preds[static_cast<size_t>(b)];
          rb.success = rb.success || flipped;
          rb.pert.assign(pert.data().begin() + b * D, pert.data().begin() + (b + 1) * D);
          rb.image.assign(adv.data().begin() + b * img_elems, adv.data().begin() + (b + 1) * img_elems);
        }
        if (cfg.early_stop && flipped) {
          live[static_cast<size_t>(b)] = 0;
          frozen[static_cast<size_t>(b)] = 1;
          Candidate& c = chosen[static_cast<size_t>(b)];
          c.valid = true;
          c.success = true;
          c.loss = rb.loss;
          c.iterations_used = rb.iter;
          c.restart = restart;
          c.pred = rb.pred;
          c.pert = rb.pert;
          c.image = rb.image;
        }
      }
      if (iter == update_iters) break;

      Tensor mask = Tensor::zeros({B});
      bool any_update = false;
      for (int64_t b = 0; b < B; ++b) {
        mask.at(b) = live[static_cast<size_t>(b)] ? real_t(1) : real_t(0);
        any_update = any_update || live[static_cast<size_t>(b)];
      }
      if (!any_update) break;

      // ascent: minimize the negated masked sum of per-example losses
      Tensor objective = mul_scalar(sum(mul(nll, mask)), real_t(-1));
      opt->zero_grad();
      backward(objective);
      std::vector<real_t> saved(pert.data().begin(), pert.data().end());
      opt->step();
      for (int64_t b = 0; b < B; ++b) {
        auto row = pert.data().subspan(static_cast<size_t>(b * D), static_cast<size_t>(D));
        if (!live[static_cast<size_t>(b)]) {
          std::copy(saved.begin() + b * D, saved.begin() + (b + 1) * D, row.begin());
          continue;
        }
        hooks.project_row(row, b);
      }
    }

    for (int64_t b = 0; b < B; ++b) {
      if (frozen[static_cast<size_t>(b)]) continue;
      const RestartBest& rb = best[static_cast<size_t>(b)];
      Candidate& c = chosen[static_cast<size_t>(b)];
      const bool better = !c.valid || (rb.success && !c.success) || (rb.success == c.success && rb.loss > c.loss);
      if (better) {
        c.valid = true;
        c.success = rb.success;
        c.loss = rb.loss;
        c.iterations_used = update_iters;
        c.restart = restart;
        c.pred = rb.pred;
        c.pert = rb.pert;
        c.image = rb.image;
      }
    }
  }

  std::vector<AttackResult> out(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) {
    const Candidate& c = chosen[static_cast<size_t>(b)];
    AttackResult& r = out[static_cast<size_t>(b)];
    r.success = c.success;
    r.final_loss = c.loss;
    r.iterations_used = c.iterations_used;
    r.restart_index = c.restart;
    r.predicted_before = hooks.base_pred[static_cast<size_t>(b)];
    r.predicted_after = c.pred;
    r.norm_used = hooks.norm_label;
    r.perturbation.assign(c.pert.begin(), c.pert.end());
    std::vector<real_t> img = c.image;
    for (real_t& v : img) v = std::min(real_t(1), std::max(real_t(0), v));
    r.adversarial = Tensor::from(hooks.image_shape, std::move(img));
    r.perturbation_norm = measure_norm(std::span<const real_t>(c.pert.data(), c.pert.size()), hooks.ball_norm);
  }
  return out;
}

Shape example_shape(const Tensor& images) {
  if (images.ndim() != 4) throw std::invalid_argument("attack: images must be [B,C,H,W]");
  return {images.size(1), images.size(2), images.size(3)};
}

// perturbation in image space, feasibility = norm ball + [0,1] pixel box
AscentHooks image_hooks(Classifier& model, const Tensor& images, const AttackConfig& cfg) {
  const int64_t B = images.size(0);
  const Shape ishape = example_shape(images);
  const int64_t D = shape_numel(ishape);
  for (int64_t i = 0; i < images.numel(); ++i)
    if (images.at(i) < real_t(0) || images.at(i) > real_t(1))
      throw std::invalid_argument("attack: input images must lie in [0,1]");
  Tensor x_const = images.detached_copy();

  AscentHooks hooks;
  hooks.pert_dim = D;
  hooks.image_shape = ishape;
  hooks.ball_norm = cfg.norm;
  hooks.norm_label = norm_name(cfg.norm);
  hooks.base_pred = predict(model, x_const);
  hooks.build = [&model, x_const, B, ishape, D](const Tensor& pert) {
    Tensor adv = reshape(add(reshape(x_const, {B, D}), pert), {B, ishape[0], ishape[1], ishape[2]});
    return std::make_pair(forward(model, adv), adv);
  };
  hooks.project_row = [x_const, cfg, D](std::span<real_t> row, int64_t b) {
    project_ball(row, cfg.norm, cfg.epsilon);
    const real_t* x = x_const.data().data() + b * D;
    for (int64_t i = 0; i < D; ++i) {
      const real_t adv = std::min(real_t(1), std::max(real_t(0), x[i] + row[static_cast<size_t>(i)]));
      row[static_cast<size_t>(i)] = adv - x[i];
    }
  };
  return hooks;
}

// perturbation in latent space, feasibility = eta ball + decoder latent box
AscentHooks latent_hooks(Classifier& model, const DecoderRef& dec, const Tensor& z0, const AttackConfig& cfg) {
  if (!dec.decode) throw std::invalid_argument("on_manifold_attack: decoder unavailable");
  if (z0.ndim() != 2 || z0.size(1) != dec.latent_dim)
    throw std::invalid_argument("on_manifold_attack: latent batch must be [B," + std::to_string(dec.latent_dim) + "]");
  const int64_t L = dec.latent_dim;
  Tensor z_const = z0.detached_copy();
  Tensor recon = dec.decode(z_const);

  AscentHooks hooks;
  hooks.pert_dim = L;
  hooks.image_shape = example_shape(recon);
  hooks.ball_norm = cfg.norm;
  hooks.norm_label = "latent-" + norm_name(cfg.norm);
  hooks.base_pred = predict(model, recon);
  hooks.build = [&model, dec, z_const](const Tensor& pert) {
    Tensor adv = dec.decode(add(z_const, pert));
    return std::make_pair(forward(model, adv), adv);
  };
  hooks.project_row = [z_const, box = dec.box, cfg, L](std::span<real_t> row, int64_t b) {
    project_ball(row, cfg.norm, cfg.epsilon);
    const real_t* z = z_const.data().data() + b * L;
    for (int64_t i = 0; i < L; ++i) {
      const real_t lo = static_cast<real_t>(box.lo[static_cast<size_t>(i)]);
      const real_t hi = static_cast<real_t>(box.hi[static_cast<size_t>(i)]);
      const real_t zi = std::min(hi, std::max(lo, z[i] + row[static_cast<size_t>(i)]));
      row[static_cast<size_t>(i)] = zi - z[i];
    }
  };
  return hooks;
}

// perturbation = 6-DoF pose offsets around the identity, |t|_inf <= eta
AscentHooks transform_hooks(Classifier& model, const Tensor& images, const AttackConfig& cfg) {
  Tensor x_const = images.detached_copy();
  Tensor id_pose = Tensor::from({6}, {0, 0, 0, 0, 1, 0});

  AscentHooks hooks;
  hooks.pert_dim = 6;
  hooks.image_shape = example_shape(images);
  hooks.ball_norm = NormKind::LInf;
  hooks.norm_label = "transform-linf";
  hooks.base_pred = predict(model, x_const);
  hooks.build = [&model, x_const, id_pose](const Tensor& pert) {
    Tensor pose = add_rowvec(pert, id_pose);
    Tensor adv = clamp_op(affine_warp(x_const, pose_matrix(pose)), real_t(0), real_t(1));
    return std::make_pair(forward(model, adv), adv);
  };
  hooks.project_row = [cfg](std::span<real_t> row, int64_t) { project_ball(row, NormKind::LInf, cfg.epsilon); };
  return hooks;
}

}  // namespace

// ---- attack entry points ------------------------------------------------------------

std::vector<AttackResult> pgd_attack_batch(Classifier& model, const Tensor& images,
                                           const std::vector<int64_t>& labels, const AttackConfig& cfg,
                                           const std::vector<int64_t>& indices_in) {
  require_eval_mode(model);
  cfg.validate();
  const int64_t B = images.size(0);
  if (static_cast<int64_t>(labels.size()) != B) throw std::invalid_argument("attack: label count mismatch");
  const auto indices = default_indices(B, indices_in);
  return projected_ascent(image_hooks(model, images, cfg), labels, cfg, indices, cfg.iterations);
}

AttackResult pgd_attack(Classifier& model, const Tensor& image, int64_t label, const AttackConfig& cfg,
                        int64_t index) {
  Tensor batch = reshape(image, {1, image.size(0), image.size(1), image.size(2)}).detached_copy();
  return pgd_attack_batch(model, batch, {label}, cfg, {index})[0];
}

std::vector<AttackResult> on_manifold_attack_batch(Classifier& model, const DecoderRef& dec, const Tensor& z0,
                                                   const std::vector<int64_t>& labels, const AttackConfig& cfg,
                                                   const std::vector<int64_t>& indices_in) {
  require_eval_mode(model);
  cfg.validate();
  const int64_t B = z0.size(0);
  if (static_cast<int64_t>(labels.size()) != B) throw std::invalid_argument("attack: label count mismatch");
  const auto indices = default_indices(B, indices_in);
  return projected_ascent(latent_hooks(model, dec, z0, cfg), labels, cfg, indices, cfg.iterations);
}

AttackResult on_manifold_attack(Classifier& model, const DecoderRef& dec, const Tensor& z0_row, int64_t label,
                                const AttackConfig& cfg, int64_t index) {
  Tensor z = reshape(z0_row, {1, z0_row.numel()}).detached_copy();
  return on_manifold_attack_batch(model, dec, z, {label}, cfg, {index})[0];
}

std::vector<AttackResult> transformation_attack_batch(Classifier& model, const Tensor& images,
                                                      const std::vector<int64_t>& labels, const AttackConfig& cfg,
                                                      const std::vector<int64_t>& indices_in) {
  require_eval_mode(model);
  cfg.validate();
  const int64_t B = images.size(0);
  if (static_cast<int64_t>(labels.size()) != B) throw std::invalid_argument("attack: label count mismatch");
  const auto indices = default_indices(B, indices_in);
  return projected_ascent(transform_hooks(model, images, cfg), labels, cfg, indices, cfg.iterations);
}

AttackResult transformation_attack(Classifier& model, const Tensor& image, int64_t label, const AttackConfig& cfg,
                                   int64_t index) {
  Tensor batch = reshape(image, {1, image.size(0), image.size(1), image.size(2)}).detached_copy();
  return transformation_attack_batch(model, batch, {label}, cfg, {index})[0];
}

// ---- Carlini-Wagner ---------------------------------------------------------------

std::vector<AttackResult> cw_attack_batch(Classifier& model, const Tensor& images,
                                          const std::vector<int64_t>& labels, const AttackConfig& cfg,
                                          const std::vector<int64_t>& indices_in) {
  require_eval_mode(model);
  const int64_t B = images.size(0);
  if (static_cast<int64_t>(labels.size()) != B) throw std::invalid_argument("attack: label count mismatch");
  default_indices(B, indices_in);  // shape check only; CW draws no randomness
  const Shape ishape = example_shape(images);
  const int64_t D = shape_numel(ishape);

  Tensor x_const = images.detached_copy();
  const auto base_pred = predict(model, x_const);

  // inset clamp keeps arctanh finite at exact 0/1 pixels
  constexpr double kInset = 1e-6;
  Tensor omega = Tensor::zeros({B, D}, /*requires_grad=*/true);
  for (int64_t i = 0; i < omega.numel(); ++i) {
    const double xi = std::min(1.0 - kInset, std::max(kInset, static_cast<double>(x_const.at(i))));
    omega.at(i) = static_cast<real_t>(std::atanh(2.0 * xi - 1.0));
  }

  AdamConfig ocfg;
  ocfg.lr = static_cast<real_t>(cfg.learning_rate);
  Adam opt({omega}, ocfg);

  Tensor x_flat = reshape(x_const, {B, D}).detached_copy();
  for (int64_t iter = 0; iter < cfg.cw_iterations; ++iter) {
    Tensor adv_flat = mul_scalar(add_scalar(tanh_op(omega), real_t(1)), real_t(0.5));
    Tensor delta = sub(adv_flat, x_flat);
    Tensor logits = forward(model, reshape(adv_flat, {B, ishape[0], ishape[1], ishape[2]}));
    Tensor obj = add(cw_margin(logits, labels, static_cast<real_t>(cfg.cw_kappa)),
                     mul_scalar(rowwise_l2(delta), static_cast<real_t>(cfg.cw_lambda)));
    opt.zero_grad();
    backward(sum(obj));
    opt.step();
  }

  Tensor adv_flat = mul_scalar(add_scalar(tanh_op(omega.detached_copy()), real_t(1)), real_t(0.5));
  Tensor adv = reshape(adv_flat, {B, ishape[0], ishape[1], ishape[2]});
  Tensor logits = forward(model, adv);
  const auto preds = argmax_rows(logits);
  Tensor final_nll = nll_rows(logits, labels);

  std::vector<AttackResult> out(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) {
    AttackResult& r = out[static_cast<size_t>(b)];
    r.success = preds[static_cast<size_t>(b)] != labels[static_cast<size_t>(b)];
    r.predicted_before = base_pred[static_cast<size_t>(b)];
    r.predicted_after = preds[static_cast<size_t>(b)];
    r.iterations_used = cfg.cw_iterations;
    r.restart_index = 0;
    r.final_loss = final_nll.at(b);
    r.norm_used = "cw-l2";
    std::vector<real_t> img(adv.data().begin() + b * D, adv.data().begin() + (b + 1) * D);
    r.perturbation.resize(static_cast<size_t>(D));
    double sq = 0;
    for (int64_t i = 0; i < D; ++i) {
      const double d = static_cast<double>(img[static_cast<size_t>(i)]) - static_cast<double>(x_flat.at(b * D + i));
      r.perturbation[static_cast<size_t>(i)] = d;
      sq += d * d;
    }
    r.perturbation_norm = std::sqrt(sq);
    for (real_t& v : img) v = std::min(real_t(1), std::max(real_t(0), v));
    r.adversarial = Tensor::from(ishape, std::move(img));
  }
  return out;
}

AttackResult cw_attack(Classifier& model, const Tensor& image, int64_t label, const AttackConfig& cfg,
                       int64_t index) {
  Tensor batch = reshape(image, {1, image.size(0), image.size(1), image.size(2)}).detached_copy();
  return cw_attack_batch(model, batch, {label}, cfg, {index})[0];
}

// ---- random baselines ----------------------------------------------------------------

std::vector<AttackResult> random_perturbation_baseline(Classifier& model, PerturbSpace space, const Tensor& inputs,
                                                       const std::vector<int64_t>& labels, const AttackConfig& cfg,
                                                       const DecoderRef* dec, const Tensor* z0,
                                                       const std::vector<int64_t>& indices_in) {
  require_eval_mode(model);
  cfg.validate();
  if (space == PerturbSpace::Latent && (dec == nullptr || z0 == nullptr))
    throw std::invalid_argument("random baseline: latent space requires a decoder and latent codes");
  const int64_t B = static_cast<int64_t>(labels.size());
  const auto indices = default_indices(B, indices_in);

  AttackConfig rcfg = cfg;
  rcfg.early_stop = true;  // first successful draw is kept, like the attacks

  AscentHooks hooks;
  switch (space) {
    case PerturbSpace::Image:
      hooks = image_hooks(model, inputs, rcfg);
      break;
    case PerturbSpace::Latent:
      hooks = latent_hooks(model, *dec, *z0, rcfg);
      break;
    case PerturbSpace::Transform:
      hooks = transform_hooks(model, inputs, rcfg);
      break;
  }
  auto results = projected_ascent(hooks, labels, rcfg, indices, /*update_iters=*/0);
  for (AttackResult& r : results) {
    r.iterations_used = 0;
    r.norm_used = "random-" + r.norm_used;
  }
  return results;
}

// ---- transfer ---------------------------------------------------------------------

TransferStats transfer_attack(Classifier& source, Classifier& target, const Tensor& images,
                              const std::vector<int64_t>& labels, const AttackConfig& cfg) {
  require_eval_mode(source);
  require_eval_mode(target);
  const int64_t B = images.size(0);
  if (static_cast<int64_t>(labels.size()) != B) throw std::invalid_argument("transfer: label count mismatch");

  Tensor x = images.detached_copy();
  const auto pred_src = predict(source, x);
  const auto pred_tgt = predict(target, x);
  TransferStats stats;
  stats.eligible.assign(static_cast<size_t>(B), 0);
  for (int64_t b = 0; b < B; ++b)
    stats.eligible[static_cast<size_t>(b)] = pred_src[static_cast<size_t>(b)] == labels[static_cast<size_t>(b)] &&
                                             pred_tgt[static_cast<size_t>(b)] == labels[static_cast<size_t>(b)];
  stats.jointly_correct = std::count(stats.eligible.begin(), stats.eligible.end(), 1);
  if (stats.jointly_correct == 0) throw std::runtime_error("transfer: jointly-correct set is empty");

  auto crafted = pgd_attack_batch(source, x, labels, cfg);

  int64_t wb = 0, tr = 0;
  stats.results = crafted;
  for (int64_t b = 0; b < B; ++b) {
    AttackResult& r = stats.results[static_cast<size_t>(b)];
    Tensor adv = reshape(r.adversarial, {1, r.adversarial.size(0), r.adversarial.size(1), r.adversarial.size(2)});
    const int64_t tgt_pred = predict(target, adv)[0];
    const bool tgt_success = tgt_pred != labels[static_cast<size_t>(b)];
    if (stats.eligible[static_cast<size_t>(b)]) {
      wb += r.success ? 1 : 0;
      tr += tgt_success ? 1 : 0;
    }
    r.predicted_after = tgt_pred;
    r.success = tgt_success;
  }
  stats.white_box_rate = static_cast<double>(wb) / static_cast<double>(stats.jointly_correct);
  stats.transfer_rate = static_cast<double>(tr) / static_cast<double>(stats.jointly_correct);
  return stats;
}

// ---- metrics ----------------------------------------------------------------------

std::optional<double> success_rate(const std::vector<AttackResult>& results, const std::vector<char>& eligible) {
  if (results.size() != eligible.size()) throw std::invalid_argument("success_rate: mask length mismatch");
  int64_t n = 0, s = 0;
  for (size_t i = 0; i < results.size(); ++i) {
    if (!eligible[i]) continue;
    ++n;
    s += results[i].success ? 1 : 0;
  }
  if (n == 0) return std::nullopt;
  return static_cast<double>(s) / static_cast<double>(n);
}

void write_attack_csv(const std::string& path, const std::vector<AttackResult>& results,
                      const std::vector<int64_t>& labels) {
  CsvWriter csv(path, {"index", "label", "predicted_before", "predicted_after", "success", "norm_used",
                       "perturbation_norm", "iterations_used", "restart_index", "final_loss"});
  for (size_t i = 0; i < results.size(); ++i) {
    const AttackResult& r = results[i];
    csv.field(static_cast<int64_t>(i));
    csv.field(labels[i]);
    csv.field(r.predicted_before);
    csv.field(r.predicted_after);
    csv.field(r.success);
    csv.field(r.norm_used);
    csv.field(r.perturbation_norm);
    csv.field(r.iterations_used);
    csv.field(r.restart_index);
    csv.field(r.final_loss);
    csv.end_row();
  }
}

}  // namespace robustlab::attacks
