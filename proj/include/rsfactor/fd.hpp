#pragma once

/// \file fd.hpp
/// Central finite-difference gradients over the flattened scalar
/// parameters. The parameter count is tiny (3KT solver scalars plus K
/// fusion gammas), so numerical differentiation replaces autodiff
/// entirely; a coordinate layout tells the differencer which entries are
/// step sizes (mu), whose probes must stay strictly positive.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsfactor/errors.hpp"
#include "rsfactor/factorize.hpp"

namespace rsfactor {

enum class ParamKind { alpha, beta, mu, gamma };

struct ParamCoord {
  ParamKind kind;
  int k = 0;  ///< factor index, 1-based (0 for plain coordinates)
  int t = 0;  ///< iteration index, 0-based
};

/// Describes the flattened coordinate order of a parameter vector.
struct ParamLayout {
  std::vector<ParamCoord> coords;

  /// Layout of the solver scalars: for each factor k, alpha[0..T),
  /// beta[0..T), mu[0..T).
  static ParamLayout solver(int k_factors, int t_iters) {
    ParamLayout out;
    out.coords.reserve(static_cast<std::size_t>(3 * k_factors * t_iters));
    for (int k = 1; k <= k_factors; ++k) {
      for (int t = 0; t < t_iters; ++t) out.coords.push_back({ParamKind::alpha, k, t});
      for (int t = 0; t < t_iters; ++t) out.coords.push_back({ParamKind::beta, k, t});
      for (int t = 0; t < t_iters; ++t) out.coords.push_back({ParamKind::mu, k, t});
    }
    return out;
  }

  static ParamLayout gammas(int k_factors) {
    ParamLayout out;
    for (int k = 1; k <= k_factors; ++k) out.coords.push_back({ParamKind::gamma, k, 0});
    return out;
  }

  std::string name(std::size_t i) const {
    if (i >= coords.size()) return "coordinate " + std::to_string(i);
    const ParamCoord& c = coords[i];
    switch (c.kind) {
      case ParamKind::alpha:
        return "alpha[k=" + std::to_string(c.k) + ",t=" + std::to_string(c.t) + "]";
      case ParamKind::beta:
        return "beta[k=" + std::to_string(c.k) + ",t=" + std::to_string(c.t) + "]";
      case ParamKind::mu:
        return "mu[k=" + std::to_string(c.k) + ",t=" + std::to_string(c.t) + "]";
      default:
        return "gamma[k=" + std::to_string(c.k) + "]";
    }
  }
};

/// Flatten the solver scalars in ParamLayout::solver order.
inline Eigen::VectorXd flatten_params(const ParamVector& params) {
  Eigen::VectorXd out(3 * params.k_factors * params.t_iters);
  Eigen::Index i = 0;
  for (const auto& f : params.factors) {
    for (double v : f.alpha) out(i++) = v;
    for (double v : f.beta) out(i++) = v;
    for (double v : f.mu) out(i++) = v;
  }
  return out;
}

/// Inverse of flatten_params.
inline ParamVector unflatten_params(const Eigen::VectorXd& flat, int k_factors,
                                    int t_iters) {
  if (flat.size() != 3 * k_factors * t_iters)
    throw std::invalid_argument("unflatten_params: size mismatch");
  ParamVector out;
  out.k_factors = k_factors;
  out.t_iters = t_iters;
  Eigen::Index i = 0;
  for (int k = 0; k < k_factors; ++k) {
    FactorParams f;
    f.alpha.resize(t_iters);
    f.beta.resize(t_iters);
    f.mu.resize(t_iters);
    for (int t = 0; t < t_iters; ++t) f.alpha[t] = flat(i++);
    for (int t = 0; t < t_iters; ++t) f.beta[t] = flat(i++);
    for (int t = 0; t < t_iters; ++t) f.mu[t] = flat(i++);
    out.factors.push_back(std::move(f));
  }
  return out;
}

/// The per-coordinate probe step: h everywhere except mu coordinates,
/// which probe with min(h, mu/2) so the minus probe keeps mu positive.
inline double probe_step(double h, const ParamLayout* layout, std::size_t i, double value) {
  if (layout != nullptr && i < layout->coords.size() &&
      layout->coords[i].kind == ParamKind::mu)
    return std::min(h, value / 2.0);
  return h;
}

/// Central differences per coordinate:
/// g_i = (f(p + h_i e_i) - f(p - h_i e_i)) / (2 h_i).
inline Eigen::VectorXd fd_gradient(
    const std::function<double(const Eigen::VectorXd&)>& objective,
    const Eigen::VectorXd& params, double h, const ParamLayout* layout = nullptr) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_gradient: h must be positive");
  Eigen::VectorXd grad(params.size());
  Eigen::VectorXd p = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double hi = probe_step(h, layout, static_cast<std::size_t>(i), params(i));
    p(i) = params(i) + hi;
    const double fp = objective(p);
    p(i) = params(i) - hi;
    const double fm = objective(p);
    p(i) = params(i);
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      const std::string name = layout != nullptr
                                   ? layout->name(static_cast<std::size_t>(i))
                                   : "coordinate " + std::to_string(i);
      throw NumericError("fd_gradient: objective non-finite while probing " + name);
    }
    grad(i) = (fp - fm) / (2.0 * hi);
  }
  return grad;
}

}  // namespace rsfactor
