#pragma once

/// \file losses.hpp
/// Zero-reference training losses: the factor energy-ratio loss plus the
/// three enhancement priors (gray-world color balance, mid-tone exposure,
/// local smoothness). No ground-truth image is ever consulted.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

#include "rsfactor/factorize.hpp"
#include "rsfactor/image.hpp"
#include "rsfactor/log.hpp"

namespace rsfactor {

struct LossWeights {
  double lambda_f = 1.0;
  double lambda_c = 1.0;
  double lambda_e = 10.0;
  double lambda_s = 1.0;
};

struct LossParts {
  double f = 0.0;
  double c = 0.0;
  double e = 0.0;
  double s = 0.0;
};

/// Energy-ratio loss: sum over factors of |mean(E^k)/mean(X^k) - nu^k|,
/// averaged over channels, using the pre-absorption factor means recorded
/// in the stack trace. A zero recursion-input mean makes the ratio
/// undefined; that term contributes |0 - nu^k| and a warning is logged.
template <typename Scalar>
double loss_factorization(const FactorStackT<Scalar>& stack, const ParamVector& params) {
  if (stack.trace.empty() || stack.k_factors() != params.k_factors)
    throw std::invalid_argument("loss_factorization: stack/params mismatch");
  double total = 0.0;
  for (std::size_t c = 0; c < stack.trace.size(); ++c) {
    const FactorTrace& tr = stack.trace[c];
    for (int k = 1; k <= params.k_factors; ++k) {
      const double nu = params.nu(k);
      const double xm = tr.x_mean[k - 1];
      if (xm == 0.0) {
        log::warn("loss_factorization: zero recursion-input mean at factor " +
                  std::to_string(k) + ", channel " + std::to_string(c) +
                  "; counting the full schedule deviation");
        total += nu;
      } else {
        total += std::abs(tr.e_pre_mean[k - 1] / xm - nu);
      }
    }
  }
  return total / static_cast<double>(stack.trace.size());
}

/// Gray-world color loss: squared pairwise differences of the channel
/// means over the pairs (R,G), (G,B), (B,R).
template <typename Scalar>
double loss_color(const ImageT<Scalar>& img) {
  if (img.channels() != 3)
    throw std::invalid_argument("loss_color: expected a 3-channel image");
  const double r = mean(img.planes[0]);
  const double g = mean(img.planes[1]);
  const double b = mean(img.planes[2]);
  return (r - g) * (r - g) + (g - b) * (g - b) + (b - r) * (b - r);
}

/// Exposure loss: mean over non-overlapping window x window tiles of the
/// squared deviation of the tile's mean luma from the target mid-tone.
/// Ragged edge tiles average over their actual pixels. Gray images use
/// their single channel directly.
template <typename Scalar>
double loss_exposure(const ImageT<Scalar>& img, double target = 0.6, int window = 16) {
  if (window < 1) throw std::invalid_argument("loss_exposure: window must be >= 1");
  const MatrixX<Scalar> luma = img.channels() == 3
                                   ? rgb_to_luma(img, LumaConvention::analog).planes[0]
                                   : img.planes[0];
  const Eigen::Index h = luma.rows();
  const Eigen::Index w = luma.cols();
  double total = 0.0;
  Eigen::Index tiles = 0;
  for (Eigen::Index r = 0; r < h; r += window) {
    const Eigen::Index rh = std::min<Eigen::Index>(window, h - r);
    for (Eigen::Index c = 0; c < w; c += window) {
      const Eigen::Index cw = std::min<Eigen::Index>(window, w - c);
      const double tile_mean =
          luma.block(r, c, rh, cw).template cast<double>().sum() /
          static_cast<double>(rh * cw);
      const double d = tile_mean - target;
      total += d * d;
      ++tiles;
    }
  }
  return total / static_cast<double>(tiles);
}

/// Smoothness loss: mean over every channel and pixel of the squared
/// forward differences (horizontal and vertical), taking the gradient as
/// zero at the last column / last row.
template <typename Scalar>
double loss_smooth(const ImageT<Scalar>& img) {
  if (img.height() < 2 || img.width() < 2)
    throw std::invalid_argument("loss_smooth: image must be at least 2x2");
  double total = 0.0;
  for (const auto& p : img.planes) {
    const Eigen::Index h = p.rows();
    const Eigen::Index w = p.cols();
    const Eigen::MatrixXd pd = p.template cast<double>();
    total += (pd.rightCols(w - 1) - pd.leftCols(w - 1)).squaredNorm();
    total += (pd.bottomRows(h - 1) - pd.topRows(h - 1)).squaredNorm();
  }
  return total / static_cast<double>(img.samples());
}

/// Weighted total loss.
inline double loss_total(const LossParts& parts, const LossWeights& weights) {
  return weights.lambda_f * parts.f + weights.lambda_c * parts.c +
         weights.lambda_e * parts.e + weights.lambda_s * parts.s;
}

}  // namespace rsfactor
