#pragma once

/// \file factorize.hpp
/// The recursion over K factors: each round extracts a sparse specular
/// component E^k from the running residual X^k with per-factor
/// re-initialization, so the image decomposes additively as
/// I = E^1 + ... + E^K. Difference maps F^k = E^k - E^{k-1} expose the
/// pixels newly admitted at relaxation level k.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsfactor/admm.hpp"
#include "rsfactor/image.hpp"
#include "rsfactor/log.hpp"

namespace rsfactor {

/// All learned solver scalars: K factors x T iterations x (alpha, beta, mu).
struct ParamVector {
  int k_factors = 0;
  int t_iters = 0;
  std::vector<FactorParams> factors;

  /// Sparsity-relaxation schedule nu^k = k/K for 1-based k; strictly
  /// increasing with nu^K == 1.
  double nu(int k) const { return static_cast<double>(k) / k_factors; }

  void validate() const {
    if (k_factors < 1) throw std::invalid_argument("ParamVector: k_factors must be >= 1");
    if (t_iters < 1) throw std::invalid_argument("ParamVector: t_iters must be >= 1");
    if (static_cast<int>(factors.size()) != k_factors)
      throw std::invalid_argument("ParamVector: expected " + std::to_string(k_factors) +
                                  " factor parameter sets, got " +
                                  std::to_string(factors.size()));
    for (const auto& f : factors) {
      f.validate();
      if (f.t_iters() != t_iters)
        throw std::invalid_argument("ParamVector: factor parameter length != t_iters");
    }
  }
};

/// Per-channel record of the recursion: the mean of each recursion input
/// X^k and of each specular output E^k before residual absorption. The
/// energy-ratio loss is defined on these pre-absorption quantities.
struct FactorTrace {
  std::vector<double> x_mean;
  std::vector<double> e_pre_mean;
};

/// Ordered factor decomposition of one image.
template <typename Scalar>
struct FactorStackT {
  std::vector<ImageT<Scalar>> e;  ///< specular components E^1..E^K
  std::vector<ImageT<Scalar>> f;  ///< difference maps F^1..F^K (signed)
  bool residual_absorbed = false;
  std::vector<FactorTrace> trace;  ///< one per channel

  int k_factors() const { return static_cast<int>(e.size()); }
  int channels() const { return e.empty() ? 0 : e[0].channels(); }
  Eigen::Index height() const { return e.empty() ? 0 : e[0].height(); }
  Eigen::Index width() const { return e.empty() ? 0 : e[0].width(); }
};

using FactorStack = FactorStackT<float>;
using FactorStackD = FactorStackT<double>;

/// Per-instance solver thresholds for factor k: a blend of the learned
/// values with the analytic schedule alpha = (1-nu^k) * x_mean,
/// beta = nu^k * x_mean evaluated at the recursion input's mean. Blended
/// thresholds are clamped at zero so they stay valid even when a training
/// probe or a dark residual drives the combination negative; mu is taken
/// from the learned values unchanged.
inline FactorParams init_factor_thresholds(int k, int k_count, double x_mean,
                                           const FactorParams& learned,
                                           double blend = 0.9) {
  if (k < 1 || k > k_count)
    throw std::invalid_argument("init_factor_thresholds: factor index " +
                                std::to_string(k) + " outside 1.." +
                                std::to_string(k_count));
  const double nu = static_cast<double>(k) / k_count;
  const double analytic_alpha = (1.0 - nu) * x_mean;
  const double analytic_beta = nu * x_mean;

  FactorParams out = learned;
  for (std::size_t t = 0; t < out.alpha.size(); ++t) {
    out.alpha[t] = std::max(0.0, blend * learned.alpha[t] + (1.0 - blend) * analytic_alpha);
    out.beta[t] = std::max(0.0, blend * learned.beta[t] + (1.0 - blend) * analytic_beta);
  }
  return out;
}

/// F^1 = E^1; F^k = E^k - E^{k-1}. Values are signed soft masks; consumers
/// that need magnitudes clamp or take absolute values at use-site.
template <typename Scalar>
std::vector<ImageT<Scalar>> factor_differences(const std::vector<ImageT<Scalar>>& e) {
  if (e.empty()) throw std::invalid_argument("factor_differences: empty factor list");
  for (std::size_t k = 1; k < e.size(); ++k)
    if (!same_shape(e[k], e[0]))
      throw std::invalid_argument("factor_differences: factor shape mismatch at index " +
                                  std::to_string(k));
  std::vector<ImageT<Scalar>> f;
  f.reserve(e.size());
  f.push_back(e[0]);
  for (std::size_t k = 1; k < e.size(); ++k) {
    ImageT<Scalar> d = e[k];
    for (int c = 0; c < d.channels(); ++c) d.planes[c] -= e[k - 1].planes[c];
    f.push_back(std::move(d));
  }
  return f;
}

/// Decompose one image into K specular factors. Per channel:
/// X^1 = channel; for k = 1..K run the unrolled solve on X^k with blended
/// per-instance thresholds, take E^k, and recurse on X^{k+1} = X^k - E^k.
/// The final residual X^{K+1} is folded into E^K so the factors sum to the
/// input exactly; difference maps are computed afterwards. Deterministic.
template <typename Scalar>
FactorStackT<Scalar> factorize(const ImageT<Scalar>& img, const ParamVector& params,
                               const SolveOptions& opts = {}, double blend = 0.9) {
  params.validate();
  if (img.channels() == 0 || img.samples() == 0)
    throw std::invalid_argument("factorize: empty image");

  const int k_count = params.k_factors;
  FactorStackT<Scalar> stack;
  stack.e.assign(k_count, ImageT<Scalar>(img.height(), img.width(), img.channels()));
  stack.trace.assign(img.channels(), FactorTrace{});

  for (int c = 0; c < img.channels(); ++c) {
    MatrixX<Scalar> x = img.planes[c];
    for (int k = 1; k <= k_count; ++k) {
      const double x_mean = mean(x);
      const FactorParams inst =
          init_factor_thresholds(k, k_count, x_mean, params.factors[k - 1], blend);
      SolverStateT<Scalar> state = detail::run_steps(
          init_state(x, opts.dual_init_norm), x, inst, opts, /*want_final_a=*/false);
      stack.trace[c].x_mean.push_back(x_mean);
      stack.trace[c].e_pre_mean.push_back(mean(state.e));
      x -= state.e;
      stack.e[k - 1].planes[c] = std::move(state.e);
    }
    // Fold the leftover diffuse remainder into the last (least sparse)
    // factor so the additive decomposition is exact.
    stack.e[k_count - 1].planes[c] += x;
  }
  stack.residual_absorbed = true;
  stack.f = factor_differences(stack.e);
  return stack;
}

}  // namespace rsfactor
