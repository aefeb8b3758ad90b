#pragma once

/// \file prox.hpp
/// Proximal operators used by the factor solver: elementwise
/// soft-thresholding (the l1 prox), singular value thresholding (the
/// nuclear-norm prox), and the SVD they require.
///
/// Two singular-value-thresholding backends are provided:
///   - svd_exact: thin BDC SVD with a deterministic sign convention; the
///     reference implementation of the operator.
///   - gram_eig:  eigendecomposition of the smaller Gram matrix. Same
///     operator, computed without singular vectors of the larger side;
///     3-5x faster on square image-sized inputs and the backend the image
///     pipeline and trainer select. Agreement with svd_exact is at the
///     level of the eigensolver tolerance (~1e-10 relative in double).

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "rsfactor/image.hpp"

namespace rsfactor {

/// Scalar soft-threshold: sign(x) * max(|x| - alpha, 0).
template <typename Scalar>
Scalar soft_threshold(Scalar x, Scalar alpha) {
  if (!(alpha >= Scalar(0)))
    throw std::invalid_argument("soft_threshold: negative threshold");
  const Scalar mag = std::abs(x) - alpha;
  if (mag <= Scalar(0)) return Scalar(0);
  return x < Scalar(0) ? -mag : mag;
}

/// Elementwise soft-threshold of a matrix.
template <typename Derived>
MatrixX<typename Derived::Scalar> soft_threshold(
    const Eigen::MatrixBase<Derived>& m, typename Derived::Scalar alpha) {
  using Scalar = typename Derived::Scalar;
  if (!(alpha >= Scalar(0)))
    throw std::invalid_argument("soft_threshold: negative threshold");
  return m.array().sign() * (m.array().abs() - alpha).max(Scalar(0));
}

/// Thin SVD m = u * diag(s) * vt.
template <typename Scalar>
struct SvdResultT {
  MatrixX<Scalar> u;
  Eigen::Vector<Scalar, Eigen::Dynamic> s;
  MatrixX<Scalar> vt;
};

using SvdResult = SvdResultT<double>;

/// Thin SVD with a deterministic sign convention (first nonzero entry of
/// each u column is >= 0) and small singular values (< 1e-12 * s_max)
/// clamped to zero so rank counts are stable.
template <typename Derived>
SvdResultT<typename Derived::Scalar> svd(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (!m.allFinite()) throw std::invalid_argument("svd: non-finite entries");

  Eigen::BDCSVD<MatrixX<Scalar>> dec(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdResultT<Scalar> out;
  out.u = dec.matrixU();
  out.s = dec.singularValues();
  out.vt = dec.matrixV().transpose();

  // Fix the sign of each singular pair: flip so the first entry of the u
  // column with magnitude above a relative floor is positive.
  for (Eigen::Index j = 0; j < out.u.cols(); ++j) {
    Scalar lead = Scalar(0);
    for (Eigen::Index i = 0; i < out.u.rows(); ++i) {
      if (std::abs(out.u(i, j)) > Scalar(1e-12)) {
        lead = out.u(i, j);
        break;
      }
    }
    if (lead < Scalar(0)) {
      out.u.col(j) = -out.u.col(j);
      out.vt.row(j) = -out.vt.row(j);
    }
  }

  if (out.s.size() > 0) {
    const Scalar floor = Scalar(1e-12) * out.s(0);
    for (Eigen::Index i = 0; i < out.s.size(); ++i)
      if (out.s(i) < floor) out.s(i) = Scalar(0);
  }
  return out;
}

enum class SvtBackend { svd_exact, gram_eig };

namespace detail {

/// Gram-route singular value thresholding. With m = U S V^T and
/// G = m^T m = V S^2 V^T, the thresholded matrix is
/// m * V * diag(max(s-beta,0)/s) * V^T — no U needed. The smaller Gram side
/// is used, so the eigenproblem is min(rows, cols)^2.
template <typename Scalar>
MatrixX<Scalar> svt_gram(const MatrixX<Scalar>& m, Scalar beta) {
  const bool tall = m.rows() >= m.cols();
  const MatrixX<Scalar> gram = tall ? MatrixX<Scalar>(m.transpose() * m)
                                    : MatrixX<Scalar>(m * m.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(gram);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("singular_value_threshold: eigendecomposition failed");

  // Eigenvalues ascend; singular values above beta occupy the tail.
  const auto& lam = eig.eigenvalues();
  const Eigen::Index n = lam.size();
  const Scalar smax = lam(n - 1) > Scalar(0) ? std::sqrt(lam(n - 1)) : Scalar(0);
  const Scalar floor = Scalar(1e-12) * smax;
  Eigen::Index keep = 0;
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    const Scalar s = lam(i) > Scalar(0) ? std::sqrt(lam(i)) : Scalar(0);
    if (s > beta && s > floor)
      ++keep;
    else
      break;  // ascending order: everything below is thresholded too
  }
  if (keep == 0) return MatrixX<Scalar>::Zero(m.rows(), m.cols());

  Eigen::Vector<Scalar, Eigen::Dynamic> scale(keep);
  for (Eigen::Index i = 0; i < keep; ++i) {
    const Scalar s = std::sqrt(lam(n - keep + i));
    scale(i) = (s - beta) / s;
  }
  const auto basis = eig.eigenvectors().rightCols(keep);
  if (tall)
    return (m * basis) * scale.asDiagonal() * basis.transpose();
  return basis * scale.asDiagonal() * (basis.transpose() * m);
}

}  // namespace detail

/// Proximal operator of the nuclear norm: soft-threshold the singular
/// values, keep the singular vectors.
template <typename Derived>
MatrixX<typename Derived::Scalar> singular_value_threshold(
    const Eigen::MatrixBase<Derived>& m, typename Derived::Scalar beta,
    SvtBackend backend = SvtBackend::svd_exact) {
  using Scalar = typename Derived::Scalar;
  if (!(beta >= Scalar(0)))
    throw std::invalid_argument("singular_value_threshold: negative threshold");
  if (beta == Scalar(0)) return m;
  // Cheap exactness shortcut: beta >= ||m||_F >= s_max zeroes every value.
  if (m.norm() <= beta) return MatrixX<Scalar>::Zero(m.rows(), m.cols());

  if (backend == SvtBackend::gram_eig) {
    if (!m.allFinite())
      throw std::invalid_argument("singular_value_threshold: non-finite entries");
    return detail::svt_gram<Scalar>(m, beta);
  }
  const auto dec = svd(m);
  Eigen::Vector<Scalar, Eigen::Dynamic> s = dec.s;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    s(i) = soft_threshold(s(i), beta);
  return dec.u * s.asDiagonal() * dec.vt;
}

/// Proximal operator of the Frobenius norm (as a norm, not squared): pure
/// radial shrinkage max(1 - beta/||m||_F, 0) * m. Offered as the
/// comparison variant for the diffuse update.
template <typename Derived>
MatrixX<typename Derived::Scalar> frobenius_shrink(
    const Eigen::MatrixBase<Derived>& m, typename Derived::Scalar beta) {
  using Scalar = typename Derived::Scalar;
  if (!(beta >= Scalar(0)))
    throw std::invalid_argument("frobenius_shrink: negative threshold");
  const Scalar norm = m.norm();
  if (norm <= beta) return MatrixX<Scalar>::Zero(m.rows(), m.cols());
  return (Scalar(1) - beta / norm) * m;
}

}  // namespace rsfactor
