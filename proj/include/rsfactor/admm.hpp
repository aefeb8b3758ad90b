#pragma once

/// \file admm.hpp
/// One unrolled specular-extraction solve: T alternating proximal updates
/// for the split X = A + E (A low-rank "diffuse", E sparse "specular"),
/// parameterized by per-iteration scalars. There is deliberately no
/// stopping criterion — the unrolled program always runs exactly T steps,
/// and those T triples (alpha_t, beta_t, mu_t) are what training tunes.

#include <Eigen/Dense>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rsfactor/errors.hpp"
#include "rsfactor/image.hpp"
#include "rsfactor/prox.hpp"

namespace rsfactor {

/// Norm used to scale the initial dual iterate Y0 = x / ||x||.
enum class DualInitNorm { spectral, frobenius };

/// Proximal operator applied in the diffuse (A) update.
enum class DiffuseProx { nuclear, frobenius };

struct SolveOptions {
  SvtBackend backend = SvtBackend::gram_eig;
  DualInitNorm dual_init_norm = DualInitNorm::spectral;
  DiffuseProx diffuse_prox = DiffuseProx::nuclear;
};

/// Per-iteration solver scalars for one factor: E-update thresholds
/// (alpha), A-update thresholds (beta), dual step sizes (mu). All three
/// vectors have length T.
struct FactorParams {
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> mu;

  int t_iters() const { return static_cast<int>(alpha.size()); }

  void validate() const {
    if (alpha.size() != beta.size() || alpha.size() != mu.size())
      throw std::invalid_argument("FactorParams: alpha/beta/mu length mismatch");
    if (alpha.empty())
      throw std::invalid_argument("FactorParams: empty parameter vectors");
    for (std::size_t t = 0; t < alpha.size(); ++t) {
      if (!std::isfinite(alpha[t]) || !std::isfinite(beta[t]) || !std::isfinite(mu[t]))
        throw std::invalid_argument("FactorParams: non-finite entry");
      if (alpha[t] < 0.0 || beta[t] < 0.0)
        throw std::invalid_argument("FactorParams: negative threshold");
      if (mu[t] <= 0.0)
        throw std::invalid_argument("FactorParams: non-positive step size");
    }
  }
};

/// Solver iterate for one factor of one channel.
template <typename Scalar>
struct SolverStateT {
  MatrixX<Scalar> e;  ///< sparse specular iterate E_t
  MatrixX<Scalar> a;  ///< low-rank diffuse iterate A_t
  MatrixX<Scalar> y;  ///< scaled dual iterate Y_t
  int t = 0;
};

using SolverState = SolverStateT<double>;

/// E0 = 0, A0 = x, Y0 = x / ||x|| (zero when x is all-zero), t = 0.
template <typename Scalar>
SolverStateT<Scalar> init_state(const MatrixX<Scalar>& x,
                                DualInitNorm norm = DualInitNorm::spectral) {
  if (x.size() == 0) throw std::invalid_argument("init_state: empty matrix");
  SolverStateT<Scalar> s;
  s.e = MatrixX<Scalar>::Zero(x.rows(), x.cols());
  s.a = x;
  const double scale = norm == DualInitNorm::spectral
                           ? spectral_norm(x)
                           : static_cast<double>(x.template cast<double>().norm());
  if (scale > 0.0)
    s.y = x / Scalar(scale);
  else
    s.y = MatrixX<Scalar>::Zero(x.rows(), x.cols());
  s.t = 0;
  return s;
}

/// One alternating update, in order:
///   E_{t+1} = soft_threshold(x - A_t - Y_t/mu_t, alpha_t)
///   A_{t+1} = singular_value_threshold(x - E_{t+1} - Y_t/mu_t, beta_t)
///   Y_{t+1} = Y_t + mu_t * (A_{t+1} + E_{t+1} - x)
/// Pure: returns the next state.
template <typename Scalar>
SolverStateT<Scalar> admm_step(const SolverStateT<Scalar>& state,
                               const MatrixX<Scalar>& x, double alpha_t,
                               double beta_t, double mu_t,
                               const SolveOptions& opts = {}) {
  if (!(mu_t > 0.0)) throw std::invalid_argument("admm_step: mu must be positive");

  SolverStateT<Scalar> next;
  const MatrixX<Scalar> dual_scaled = state.y / Scalar(mu_t);

  next.e = soft_threshold(MatrixX<Scalar>(x - state.a - dual_scaled), Scalar(alpha_t));
  if (!next.e.allFinite())
    throw NumericError("admm_step: specular (E) update produced non-finite values at t=" +
                       std::to_string(state.t));

  const MatrixX<Scalar> a_arg = x - next.e - dual_scaled;
  next.a = opts.diffuse_prox == DiffuseProx::nuclear
               ? singular_value_threshold(a_arg, Scalar(beta_t), opts.backend)
               : frobenius_shrink(a_arg, Scalar(beta_t));
  if (!next.a.allFinite())
    throw NumericError("admm_step: diffuse (A) update produced non-finite values at t=" +
                       std::to_string(state.t));

  next.y = state.y + Scalar(mu_t) * (next.a + next.e - x);
  if (!next.y.allFinite())
    throw NumericError("admm_step: dual (Y) update produced non-finite values at t=" +
                       std::to_string(state.t));

  next.t = state.t + 1;
  return next;
}

namespace detail {

/// Shared solve loop, running from state.t up to T (so a recorded
/// intermediate state resumes exactly where it left off). When
/// want_final_a is false the very last diffuse update is skipped: A_T is
/// computed after E_T and feeds nothing that the returned E depends on, so
/// callers that only consume E (the recursive factorizer, the trainer)
/// save one decomposition per factor. The returned E is bit-identical
/// either way. When record is given, the state entering each executed
/// iteration is appended to it.
template <typename Scalar>
SolverStateT<Scalar> run_steps(SolverStateT<Scalar> state, const MatrixX<Scalar>& x,
                               const FactorParams& params, const SolveOptions& opts,
                               bool want_final_a,
                               std::vector<SolverStateT<Scalar>>* record = nullptr) {
  const int t_iters = params.t_iters();
  for (int t = state.t; t < t_iters; ++t) {
    if (record != nullptr) record->push_back(state);
    if (!want_final_a && t == t_iters - 1) {
      // Final step, E only.
      const MatrixX<Scalar> dual_scaled = state.y / Scalar(params.mu[t]);
      state.e = soft_threshold(MatrixX<Scalar>(x - state.a - dual_scaled),
                               Scalar(params.alpha[t]));
      if (!state.e.allFinite())
        throw NumericError(
            "solve_factor: specular (E) update produced non-finite values at t=" +
            std::to_string(t));
      state.t = t + 1;
      break;
    }
    state = admm_step(state, x, params.alpha[t], params.beta[t], params.mu[t], opts);
  }
  return state;
}

}  // namespace detail

/// Run init_state then exactly T alternating updates; return the final
/// (E, A). Deterministic for fixed inputs.
template <typename Scalar>
std::pair<MatrixX<Scalar>, MatrixX<Scalar>> solve_factor(
    const MatrixX<Scalar>& x, const FactorParams& params,
    const SolveOptions& opts = {}) {
  params.validate();
  SolverStateT<Scalar> state =
      detail::run_steps(init_state(x, opts.dual_init_norm), x, params, opts, true);
  return {std::move(state.e), std::move(state.a)};
}

}  // namespace rsfactor
