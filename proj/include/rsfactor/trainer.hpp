#pragma once

/// \file trainer.hpp
/// Zero-reference training of the solver scalars. Phase 1 runs SGD on the
/// 3KT per-iteration thresholds against the full training loss, evaluated
/// through the running-average fusion and the quadratic curves; phase 2
/// freezes them, drops the factorization loss, and tunes the K curve
/// gammas against the enhancement priors alone. Gradients are central
/// finite differences, so each batch step costs two objective evaluations
/// per scalar; the heavy lifting lives in caches that resume the recursion
/// mid-solve instead of refactorizing from scratch, with arithmetic
/// guaranteed identical to the plain pipeline because both sides call the
/// same functions on the same values.

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "rsfactor/admm.hpp"
#include "rsfactor/errors.hpp"
#include "rsfactor/factorize.hpp"
#include "rsfactor/fd.hpp"
#include "rsfactor/fusion.hpp"
#include "rsfactor/image.hpp"
#include "rsfactor/log.hpp"
#include "rsfactor/losses.hpp"
#include "rsfactor/rng.hpp"

namespace rsfactor {

/// Step sizes are clamped here after every SGD update so the solver never
/// sees a vanishing or negative mu.
inline constexpr double kMuFloor = 1e-6;

struct TrainConfig {
  int k_factors = 5;
  int t_iters = 3;
  LossWeights weights;
  double learning_rate = 0.01;
  int batch_size = 10;
  int epochs = 50;
  int freeze_epoch = 25;  ///< first epoch of phase 2 (thresholds frozen)
  std::uint64_t seed = 2;
  double fd_step = 1e-3;
  double exposure_target = 0.6;
  int exposure_window = 16;
  double mu_init = 1.0;          ///< initial step size for every factor/iteration
  double threshold_blend = 0.9;  ///< learned share in the per-instance thresholds
  /// Optimize phase 1 against the factorization loss alone. The curriculum
  /// is ambiguous about whether the enhancement priors reach the threshold
  /// parameters; the default sends the full loss through.
  bool factor_loss_only = false;
  int jobs = 1;  ///< worker threads for finite-difference probes
  SolveOptions solve;

  void validate() const {
    if (k_factors < 1) throw std::invalid_argument("TrainConfig: k_factors must be >= 1");
    if (t_iters < 1) throw std::invalid_argument("TrainConfig: t_iters must be >= 1");
    if (weights.lambda_f < 0.0 || weights.lambda_c < 0.0 || weights.lambda_e < 0.0 ||
        weights.lambda_s < 0.0)
      throw std::invalid_argument("TrainConfig: loss weights must be >= 0");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw std::invalid_argument("TrainConfig: learning rate must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (freeze_epoch < 0 || freeze_epoch > epochs)
      throw std::invalid_argument("TrainConfig: freeze_epoch must lie in 0..epochs");
    if (!(fd_step > 0.0) || !std::isfinite(fd_step))
      throw std::invalid_argument("TrainConfig: fd_step must be positive");
    if (!std::isfinite(exposure_target))
      throw std::invalid_argument("TrainConfig: exposure_target must be finite");
    if (exposure_window < 1)
      throw std::invalid_argument("TrainConfig: exposure_window must be >= 1");
    if (!(mu_init > 0.0) || !std::isfinite(mu_init))
      throw std::invalid_argument("TrainConfig: mu_init must be positive");
    if (threshold_blend < 0.0 || threshold_blend > 1.0)
      throw std::invalid_argument("TrainConfig: threshold_blend must lie in [0,1]");
    if (jobs < 1) throw std::invalid_argument("TrainConfig: jobs must be >= 1");
  }
};

/// One row of the loss history: epoch means of the unperturbed losses, in
/// the order they appear in the history CSV. In phase 2 the factorization
/// loss is dropped from the objective and reported as zero.
struct EpochStats {
  int epoch = 0;
  int phase = 1;
  double l_f = 0.0;
  double l_c = 0.0;
  double l_e = 0.0;
  double l_s = 0.0;
  double total = 0.0;
  double seconds = 0.0;  ///< wall time of the epoch; not serialized
};

struct TrainResult {
  ParamVector params;
  FusionConfig fusion;
  std::vector<EpochStats> history;
};

namespace detail {

/// The gamma-independent half of the training output: the running-average
/// fusion of the weighted inputs plus the magnitude masks of the weighted
/// difference maps. Phase 2 caches this per image (the factorization is
/// frozen there), so a gamma probe only pays for curve passes and losses.
struct CurveInputs {
  Image fused;
  std::vector<Image> masks;
};

inline CurveInputs curve_inputs(const Image& img, const FactorStack& stack,
                                const FusionConfig& fcfg) {
  fcfg.validate(stack.k_factors());
  std::vector<Image> maps = stack.f;
  for (std::size_t k = 0; k < maps.size(); ++k) {
    const float w = static_cast<float>(fcfg.factor_weights[k]);
    for (auto& p : maps[k].planes) p *= w;
  }
  Image base = img;
  if (fcfg.image_weight != 1.0)
    for (auto& p : base.planes) p *= static_cast<float>(fcfg.image_weight);
  CurveInputs out;
  out.fused = running_average(base, maps);
  out.masks = magnitude_masks(maps);
  return out;
}

}  // namespace detail

/// The image the training losses score: running-average fusion followed by
/// the quadratic curves. The bilateral filter stays out of the objective —
/// it is a fixed post-process with no trainable parameters, and the loss
/// path stops at the stage the gammas act on.
inline Image training_output(const Image& img, const FactorStack& stack,
                             const FusionConfig& fcfg) {
  const detail::CurveInputs ci = detail::curve_inputs(img, stack, fcfg);
  return detail::apply_curves(ci.fused, ci.masks, fcfg.gammas, fcfg.curve_literal_sum);
}

namespace detail {

/// The three enhancement priors of an output image; the factorization part
/// is left zero. Single-channel images have no color balance to penalize.
inline LossParts prior_losses(const Image& out, const TrainConfig& cfg) {
  LossParts p;
  p.c = out.channels() == 3 ? loss_color(out) : 0.0;
  p.e = loss_exposure(out, cfg.exposure_target, cfg.exposure_window);
  p.s = loss_smooth(out);
  return p;
}

inline void add_parts(LossParts& acc, const LossParts& p) {
  acc.f += p.f;
  acc.c += p.c;
  acc.e += p.e;
  acc.s += p.s;
}

/// What phase 1 minimizes for one image.
inline double phase1_objective(const LossParts& parts, const TrainConfig& cfg) {
  if (cfg.factor_loss_only) return cfg.weights.lambda_f * parts.f;
  return loss_total(parts, cfg.weights);
}

/// Per-channel snapshots of the unperturbed factorization: everything a
/// single-coordinate probe needs to resume the recursion mid-solve.
struct ChannelCache {
  std::vector<MatrixX<float>> x;                      ///< recursion inputs X^1..X^K
  std::vector<std::vector<SolverStateT<float>>> pre;  ///< [k-1][t] state entering iteration t
  std::vector<MatrixX<float>> e_pre;                  ///< pre-absorption E^1..E^K
  std::vector<double> x_mean;                         ///< mean(X^k)
};

struct ImageCache {
  std::vector<ChannelCache> channels;
  FactorStack stack;  ///< the unperturbed stack (absorbed, with trace)
  LossParts parts;    ///< losses at the unperturbed parameters
  double objective = 0.0;
};

/// Factorize one image exactly as factorize() does — same functions, same
/// order, bit-identical planes — while snapshotting the states a probe
/// resumes from, then score it.
inline ImageCache build_image_cache(const Image& img, const ParamVector& params,
                                    const FusionConfig& fcfg, const TrainConfig& cfg) {
  const int k_count = params.k_factors;
  ImageCache cache;
  cache.channels.resize(static_cast<std::size_t>(img.channels()));
  FactorStack stack;
  stack.e.assign(static_cast<std::size_t>(k_count),
                 Image(img.height(), img.width(), img.channels()));
  stack.trace.assign(static_cast<std::size_t>(img.channels()), FactorTrace{});

  for (int c = 0; c < img.channels(); ++c) {
    ChannelCache& cc = cache.channels[static_cast<std::size_t>(c)];
    cc.pre.assign(static_cast<std::size_t>(k_count), {});
    MatrixX<float> x = img.planes[static_cast<std::size_t>(c)];
    for (int k = 1; k <= k_count; ++k) {
      const double x_mean = mean(x);
      const FactorParams inst = init_factor_thresholds(
          k, k_count, x_mean, params.factors[static_cast<std::size_t>(k - 1)],
          cfg.threshold_blend);
      cc.x.push_back(x);
      SolverStateT<float> state =
          run_steps(init_state(x, cfg.solve.dual_init_norm), x, inst, cfg.solve,
                    /*want_final_a=*/false, &cc.pre[static_cast<std::size_t>(k - 1)]);
      cc.x_mean.push_back(x_mean);
      stack.trace[static_cast<std::size_t>(c)].x_mean.push_back(x_mean);
      stack.trace[static_cast<std::size_t>(c)].e_pre_mean.push_back(mean(state.e));
      cc.e_pre.push_back(state.e);
      x -= state.e;
      stack.e[static_cast<std::size_t>(k - 1)].planes[static_cast<std::size_t>(c)] =
          std::move(state.e);
    }
    stack.e[static_cast<std::size_t>(k_count - 1)].planes[static_cast<std::size_t>(c)] += x;
  }
  stack.residual_absorbed = true;
  stack.f = factor_differences(stack.e);

  cache.parts.f = loss_factorization(stack, params);
  const Image out = training_output(img, stack, fcfg);
  const LossParts priors = prior_losses(out, cfg);
  cache.parts.c = priors.c;
  cache.parts.e = priors.e;
  cache.parts.s = priors.s;
  cache.objective = phase1_objective(cache.parts, cfg);
  cache.stack = std::move(stack);
  return cache;
}

/// Phase-1 objective at a single-coordinate perturbation of the solver
/// scalars, reusing the unperturbed pass: the perturbed factor resumes
/// from its recorded pre-iteration state, earlier factors are taken from
/// the cache, later ones are recomputed only for channels whose specular
/// component actually moved. An unmoved component everywhere means the
/// coordinate cannot reach the objective at all, so the cached value is
/// returned outright.
inline double probe_solver_coord(const Image& img, const ImageCache& cache,
                                 const ParamVector& probed, const ParamCoord& coord,
                                 const FusionConfig& fcfg, const TrainConfig& cfg) {
  const int k_count = probed.k_factors;
  const int kp = coord.k;
  const std::size_t kpi = static_cast<std::size_t>(kp - 1);
  const int channels = img.channels();

  std::vector<MatrixX<float>> new_e(static_cast<std::size_t>(channels));
  std::vector<char> changed(static_cast<std::size_t>(channels), 0);
  bool any_changed = false;
  for (int c = 0; c < channels; ++c) {
    const std::size_t ci = static_cast<std::size_t>(c);
    const ChannelCache& cc = cache.channels[ci];
    const FactorParams inst = init_factor_thresholds(kp, k_count, cc.x_mean[kpi],
                                                     probed.factors[kpi],
                                                     cfg.threshold_blend);
    SolverStateT<float> st = run_steps(cc.pre[kpi][static_cast<std::size_t>(coord.t)],
                                       cc.x[kpi], inst, cfg.solve,
                                       /*want_final_a=*/false);
    changed[ci] = (st.e.array() != cc.e_pre[kpi].array()).any() ? 1 : 0;
    if (changed[ci]) any_changed = true;
    new_e[ci] = std::move(st.e);
  }
  if (!any_changed) return cache.objective;

  FactorStack stack;
  stack.e.assign(static_cast<std::size_t>(k_count),
                 Image(img.height(), img.width(), channels));
  stack.trace.assign(static_cast<std::size_t>(channels), FactorTrace{});
  for (int c = 0; c < channels; ++c) {
    const std::size_t ci = static_cast<std::size_t>(c);
    if (!changed[ci]) {
      for (int k = 0; k < k_count; ++k)
        stack.e[static_cast<std::size_t>(k)].planes[ci] =
            cache.stack.e[static_cast<std::size_t>(k)].planes[ci];
      stack.trace[ci] = cache.stack.trace[ci];
      continue;
    }
    const ChannelCache& cc = cache.channels[ci];
    FactorTrace& tr = stack.trace[ci];
    for (int k = 1; k < kp; ++k) {
      stack.e[static_cast<std::size_t>(k - 1)].planes[ci] =
          cc.e_pre[static_cast<std::size_t>(k - 1)];
      tr.x_mean.push_back(cc.x_mean[static_cast<std::size_t>(k - 1)]);
      tr.e_pre_mean.push_back(cache.stack.trace[ci].e_pre_mean[static_cast<std::size_t>(k - 1)]);
    }
    tr.x_mean.push_back(cc.x_mean[kpi]);
    tr.e_pre_mean.push_back(mean(new_e[ci]));
    MatrixX<float> x = cc.x[kpi] - new_e[ci];
    stack.e[kpi].planes[ci] = std::move(new_e[ci]);
    for (int k = kp + 1; k <= k_count; ++k) {
      const double x_mean = mean(x);
      const FactorParams inst = init_factor_thresholds(
          k, k_count, x_mean, probed.factors[static_cast<std::size_t>(k - 1)],
          cfg.threshold_blend);
      SolverStateT<float> st = run_steps(init_state(x, cfg.solve.dual_init_norm), x, inst,
                                         cfg.solve, /*want_final_a=*/false);
      tr.x_mean.push_back(x_mean);
      tr.e_pre_mean.push_back(mean(st.e));
      x -= st.e;
      stack.e[static_cast<std::size_t>(k - 1)].planes[ci] = std::move(st.e);
    }
    stack.e[static_cast<std::size_t>(k_count - 1)].planes[ci] += x;
  }
  stack.residual_absorbed = true;
  stack.f = factor_differences(stack.e);

  LossParts parts;
  parts.f = loss_factorization(stack, probed);
  if (cfg.factor_loss_only) return cfg.weights.lambda_f * parts.f;
  const Image out = training_output(img, stack, fcfg);
  const LossParts priors = prior_losses(out, cfg);
  parts.c = priors.c;
  parts.e = priors.e;
  parts.s = priors.s;
  return loss_total(parts, cfg.weights);
}

/// One batch evaluation: the gradient plus the unperturbed per-image
/// losses (in batch order) that feed the epoch history.
struct BatchEval {
  Eigen::VectorXd grad;            ///< zero when no gradient was requested
  std::vector<LossParts> parts;    ///< per batch member, unperturbed
  std::vector<double> objectives;  ///< per batch member, unperturbed
};

/// Run fn(i) for every index in [0, count) across up to `jobs` threads.
/// Each index runs exactly once, so anything written at slot i is
/// identical regardless of worker count; if several indices throw, the
/// lowest-indexed exception is rethrown so error reporting is
/// deterministic too.
inline void for_each_index(Eigen::Index count, int jobs,
                           const std::function<void(Eigen::Index)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (Eigen::Index i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<Eigen::Index> next{0};
  std::mutex guard;
  Eigen::Index err_index = -1;
  std::exception_ptr err;
  auto worker = [&] {
    while (true) {
      const Eigen::Index i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(guard);
        if (err_index < 0 || i < err_index) {
          err_index = i;
          err = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  const int n_threads = static_cast<int>(
      std::min<Eigen::Index>(static_cast<Eigen::Index>(jobs), count));
  pool.reserve(static_cast<std::size_t>(n_threads));
  for (int j = 0; j < n_threads; ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

/// Gradient of the phase-1 objective (batch mean) over the flattened
/// solver scalars, by central differences with the cached fast path.
/// Matches fd_gradient over a from-scratch objective bit for bit: both
/// evaluate the same arithmetic, sum images in batch order, divide by the
/// batch size once, and share the probe-step rule.
inline BatchEval phase1_eval(const std::vector<Image>& batch, const Eigen::VectorXd& theta,
                             const FusionConfig& fcfg, const TrainConfig& cfg,
                             bool want_grad) {
  if (batch.empty()) throw std::invalid_argument("phase1_eval: empty batch");
  const ParamVector params = unflatten_params(theta, cfg.k_factors, cfg.t_iters);
  std::vector<ImageCache> caches;
  caches.reserve(batch.size());
  for (const Image& img : batch) caches.push_back(build_image_cache(img, params, fcfg, cfg));

  BatchEval out;
  out.grad = Eigen::VectorXd::Zero(theta.size());
  for (const ImageCache& c : caches) {
    out.parts.push_back(c.parts);
    out.objectives.push_back(c.objective);
  }
  if (!want_grad) return out;

  const ParamLayout layout = ParamLayout::solver(cfg.k_factors, cfg.t_iters);
  const double n = static_cast<double>(batch.size());
  for_each_index(theta.size(), cfg.jobs, [&](Eigen::Index i) {
    const std::size_t ii = static_cast<std::size_t>(i);
    const double hi = probe_step(cfg.fd_step, &layout, ii, theta(i));
    Eigen::VectorXd p = theta;
    double probes[2];
    for (int side = 0; side < 2; ++side) {
      p(i) = side == 0 ? theta(i) + hi : theta(i) - hi;
      const ParamVector probed = unflatten_params(p, cfg.k_factors, cfg.t_iters);
      double sum = 0.0;
      for (std::size_t j = 0; j < batch.size(); ++j)
        sum += probe_solver_coord(batch[j], caches[j], probed, layout.coords[ii], fcfg, cfg);
      probes[side] = sum / n;
    }
    if (!std::isfinite(probes[0]) || !std::isfinite(probes[1]))
      throw NumericError("training objective non-finite while probing " + layout.name(ii));
    out.grad(i) = (probes[0] - probes[1]) / (2.0 * hi);
  });
  return out;
}

/// Phase-2 objective for one cached image at the given gammas (the
/// factorization loss is dropped there, so only the priors score).
inline double phase2_value(const CurveInputs& cache, const std::vector<double>& gammas,
                           const FusionConfig& fcfg, const TrainConfig& cfg,
                           LossParts* parts = nullptr) {
  const Image out = apply_curves(cache.fused, cache.masks, gammas, fcfg.curve_literal_sum);
  const LossParts p = prior_losses(out, cfg);
  if (parts != nullptr) *parts = p;
  return loss_total(p, cfg.weights);
}

/// Gradient of the phase-2 objective (batch mean) over the K gammas.
inline BatchEval phase2_eval(const std::vector<const CurveInputs*>& batch,
                             const std::vector<double>& gammas, const FusionConfig& fcfg,
                             const TrainConfig& cfg, bool want_grad) {
  if (batch.empty()) throw std::invalid_argument("phase2_eval: empty batch");
  const Eigen::Index coords = static_cast<Eigen::Index>(gammas.size());
  BatchEval out;
  out.grad = Eigen::VectorXd::Zero(coords);
  for (const CurveInputs* cache : batch) {
    LossParts p;
    out.objectives.push_back(phase2_value(*cache, gammas, fcfg, cfg, &p));
    out.parts.push_back(p);
  }
  if (!want_grad) return out;

  const ParamLayout layout = ParamLayout::gammas(static_cast<int>(gammas.size()));
  const double n = static_cast<double>(batch.size());
  for_each_index(coords, cfg.jobs, [&](Eigen::Index i) {
    const std::size_t ii = static_cast<std::size_t>(i);
    const double hi = probe_step(cfg.fd_step, &layout, ii, gammas[ii]);
    std::vector<double> g = gammas;
    double probes[2];
    for (int side = 0; side < 2; ++side) {
      g[ii] = side == 0 ? gammas[ii] + hi : gammas[ii] - hi;
      double sum = 0.0;
      for (const CurveInputs* cache : batch) sum += phase2_value(*cache, g, fcfg, cfg);
      probes[side] = sum / n;
    }
    if (!std::isfinite(probes[0]) || !std::isfinite(probes[1]))
      throw NumericError("training objective non-finite while probing " + layout.name(ii));
    out.grad(i) = (probes[0] - probes[1]) / (2.0 * hi);
  });
  return out;
}

/// Projection back to the parameter domain after an SGD step: thresholds
/// stay non-negative, step sizes stay above the floor.
inline void clamp_solver_params(Eigen::VectorXd& theta, const ParamLayout& layout) {
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    if (layout.coords[static_cast<std::size_t>(i)].kind == ParamKind::mu)
      theta(i) = std::max(kMuFloor, theta(i));
    else
      theta(i) = std::max(0.0, theta(i));
  }
}

/// Starting point for training: the analytic schedule evaluated at the
/// dataset's mean intensity — alpha = (1-nu^k) m, beta = nu^k m — with a
/// uniform initial step size.
inline ParamVector initial_params(const std::vector<Image>& images, const TrainConfig& cfg) {
  double dataset_mean = 0.0;
  for (const Image& img : images) dataset_mean += mean(img);
  dataset_mean /= static_cast<double>(images.size());

  ParamVector params;
  params.k_factors = cfg.k_factors;
  params.t_iters = cfg.t_iters;
  for (int k = 1; k <= cfg.k_factors; ++k) {
    const double nu = static_cast<double>(k) / cfg.k_factors;
    FactorParams f;
    f.alpha.assign(static_cast<std::size_t>(cfg.t_iters),
                   std::max(0.0, (1.0 - nu) * dataset_mean));
    f.beta.assign(static_cast<std::size_t>(cfg.t_iters), nu * dataset_mean);
    f.mu.assign(static_cast<std::size_t>(cfg.t_iters), cfg.mu_init);
    params.factors.push_back(std::move(f));
  }
  return params;
}

}  // namespace detail

/// Two-phase SGD over the scalar parameters. Every epoch reshuffles the
/// image order with the run's own generator (so a longer run's early
/// epochs replay a shorter run exactly), walks the set in batches, and
/// records the epoch means of the unperturbed losses. Epochs before
/// freeze_epoch step the 3KT solver thresholds; from freeze_epoch on they
/// are frozen, the factorization loss leaves the objective, and only the K
/// curve gammas move. Deterministic for a fixed seed, regardless of the
/// worker count.
inline TrainResult train(const std::vector<Image>& images, const TrainConfig& cfg) {
  cfg.validate();
  if (images.empty()) throw std::invalid_argument("train: empty training set");
  for (std::size_t i = 0; i < images.size(); ++i)
    if (images[i].channels() == 0 || images[i].height() < 2 || images[i].width() < 2)
      throw std::invalid_argument("train: image " + std::to_string(i) +
                                  " must be at least 2x2 with at least one channel");

  const int k_count = cfg.k_factors;
  const std::size_t n = images.size();

  TrainResult result;
  result.params = detail::initial_params(images, cfg);
  result.fusion = FusionConfig::defaults_for(k_count);
  if (cfg.epochs == 0) return result;

  Eigen::VectorXd theta = flatten_params(result.params);
  std::vector<double> gammas = result.fusion.gammas;
  const ParamLayout layout = ParamLayout::solver(cfg.k_factors, cfg.t_iters);
  const bool stepping = cfg.learning_rate > 0.0;

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<detail::CurveInputs> frozen;  // phase-2 caches, built at the freeze

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const bool phase1 = epoch < cfg.freeze_epoch;
    rng.shuffle(order);

    // Epoch means are accumulated per image id and summed in id order, so
    // the history is independent of the shuffle whenever the losses are
    // (notably under lr = 0).
    std::vector<LossParts> epoch_parts(n);
    std::vector<double> epoch_objective(n, 0.0);

    if (phase1) {
      for (std::size_t start = 0; start < n;
           start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t end =
            std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
        std::vector<Image> batch;
        batch.reserve(end - start);
        for (std::size_t j = start; j < end; ++j) batch.push_back(images[order[j]]);
        const detail::BatchEval ev =
            detail::phase1_eval(batch, theta, result.fusion, cfg, stepping);
        for (std::size_t j = start; j < end; ++j) {
          epoch_parts[order[j]] = ev.parts[j - start];
          epoch_objective[order[j]] = ev.objectives[j - start];
        }
        if (stepping) {
          theta -= cfg.learning_rate * ev.grad;
          detail::clamp_solver_params(theta, layout);
        }
      }
    } else {
      if (frozen.empty()) {
        result.params = unflatten_params(theta, cfg.k_factors, cfg.t_iters);
        frozen.reserve(n);
        for (const Image& img : images)
          frozen.push_back(detail::curve_inputs(
              img, factorize(img, result.params, cfg.solve, cfg.threshold_blend),
              result.fusion));
      }
      for (std::size_t start = 0; start < n;
           start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t end =
            std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
        std::vector<const detail::CurveInputs*> batch;
        batch.reserve(end - start);
        for (std::size_t j = start; j < end; ++j) batch.push_back(&frozen[order[j]]);
        const detail::BatchEval ev =
            detail::phase2_eval(batch, gammas, result.fusion, cfg, stepping);
        for (std::size_t j = start; j < end; ++j) {
          epoch_parts[order[j]] = ev.parts[j - start];
          epoch_objective[order[j]] = ev.objectives[j - start];
        }
        if (stepping)
          for (std::size_t k = 0; k < gammas.size(); ++k)
            gammas[k] -= cfg.learning_rate * ev.grad(static_cast<Eigen::Index>(k));
      }
    }

    LossParts sums;
    double objective_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      detail::add_parts(sums, epoch_parts[j]);
      objective_sum += epoch_objective[j];
    }
    const double dn = static_cast<double>(n);
    EpochStats row;
    row.epoch = epoch;
    row.phase = phase1 ? 1 : 2;
    row.l_f = sums.f / dn;
    row.l_c = sums.c / dn;
    row.l_e = sums.e / dn;
    row.l_s = sums.s / dn;
    row.total = objective_sum / dn;
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(row);
    log::info("epoch " + std::to_string(epoch) + " phase " + std::to_string(row.phase) +
              ": total " + std::to_string(row.total) + " (L_f " + std::to_string(row.l_f) +
              ", L_c " + std::to_string(row.l_c) + ", L_e " + std::to_string(row.l_e) +
              ", L_s " + std::to_string(row.l_s) + ") in " + std::to_string(row.seconds) +
              "s");
  }

  result.params = unflatten_params(theta, cfg.k_factors, cfg.t_iters);
  result.fusion.gammas = gammas;
  return result;
}

/// Loss-weight selection: the paper fixed its lambdas by grid search but
/// never published them, so choosing weights against a caller-supplied
/// criterion (higher is better; typically a held-out enhancement metric)
/// is part of the workflow. Returns the index of the winning candidate;
/// optionally keeps every trained result.
inline std::size_t grid_search_weights(
    const std::vector<Image>& images, const std::vector<LossWeights>& candidates,
    const TrainConfig& base, const std::function<double(const TrainResult&)>& score,
    std::vector<TrainResult>* results = nullptr) {
  if (candidates.empty())
    throw std::invalid_argument("grid_search_weights: no weight candidates");
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    TrainConfig cfg = base;
    cfg.weights = candidates[i];
    TrainResult trained = train(images, cfg);
    const double s = score(trained);
    log::info("grid_search_weights: candidate " + std::to_string(i) + " scored " +
              std::to_string(s));
    if (s > best_score) {
      best_score = s;
      best = i;
    }
    if (results != nullptr) results->push_back(std::move(trained));
  }
  return best;
}

}  // namespace rsfactor
