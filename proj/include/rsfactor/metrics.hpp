#pragma once

/// \file metrics.hpp
/// Full-reference quality metrics: PSNR pooled over channels, PSNR on
/// luma (either channel convention), and single-scale SSIM on luma with
/// the standard 11x11 Gaussian window.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rsfactor/image.hpp"

namespace rsfactor {

/// Mean squared error pooled over all channels and pixels jointly.
template <typename Scalar>
double mse(const ImageT<Scalar>& pred, const ImageT<Scalar>& gt) {
  if (!same_shape(pred, gt)) throw std::invalid_argument("mse: shape mismatch");
  if (pred.samples() == 0) throw std::invalid_argument("mse: empty image");
  double acc = 0.0;
  for (int c = 0; c < pred.channels(); ++c)
    acc += (pred.planes[c].template cast<double>() -
            gt.planes[c].template cast<double>())
               .squaredNorm();
  return acc / static_cast<double>(pred.samples());
}

/// 10 log10(peak^2 / MSE); +infinity for identical images (serialized as
/// "inf" by the CSV writer).
template <typename Scalar>
double psnr(const ImageT<Scalar>& pred, const ImageT<Scalar>& gt, double peak = 1.0) {
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
  const double err = mse(pred, gt);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / err);
}

/// PSNR on the luma channel under the chosen convention.
template <typename Scalar>
double psnr_y(const ImageT<Scalar>& pred, const ImageT<Scalar>& gt,
              LumaConvention convention, double peak = 1.0) {
  return psnr(rgb_to_luma(pred, convention), rgb_to_luma(gt, convention), peak);
}

namespace detail {

/// 11x11 Gaussian (sigma 1.5) filtering of the valid region: the output is
/// (rows-10) x (cols-10), matching the windowed SSIM definition.
inline Eigen::MatrixXd gauss11_valid(const Eigen::MatrixXd& m) {
  constexpr int kHalf = 5;
  static const Eigen::Matrix<double, 11, 11> kernel = [] {
    Eigen::Matrix<double, 11, 11> k;
    double sum = 0.0;
    for (int i = 0; i < 11; ++i)
      for (int j = 0; j < 11; ++j) {
        const double dy = i - kHalf;
        const double dx = j - kHalf;
        k(i, j) = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
        sum += k(i, j);
      }
    k /= sum;
    return k;
  }();

  const Eigen::Index rows = m.rows() - 2 * kHalf;
  const Eigen::Index cols = m.cols() - 2 * kHalf;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, cols);
  for (int dy = 0; dy < 11; ++dy)
    for (int dx = 0; dx < 11; ++dx)
      out += kernel(dy, dx) * m.block(dy, dx, rows, cols);
  return out;
}

}  // namespace detail

/// Single-scale SSIM on luma (3-channel inputs) or on the bare channel
/// (grayscale inputs): 11x11 Gaussian window sigma 1.5,
/// C1 = (0.01 peak)^2, C2 = (0.03 peak)^2, mean over the valid map.
template <typename Scalar>
double ssim(const ImageT<Scalar>& pred, const ImageT<Scalar>& gt, double peak = 1.0,
            LumaConvention convention = LumaConvention::analog) {
  if (!same_shape(pred, gt)) throw std::invalid_argument("ssim: shape mismatch");
  if (pred.height() < 11 || pred.width() < 11)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");

  const Eigen::MatrixXd x =
      (pred.channels() == 3 ? rgb_to_luma(pred, convention).planes[0] : pred.planes[0])
          .template cast<double>();
  const Eigen::MatrixXd y =
      (gt.channels() == 3 ? rgb_to_luma(gt, convention).planes[0] : gt.planes[0])
          .template cast<double>();

  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);

  const Eigen::MatrixXd mu_x = detail::gauss11_valid(x);
  const Eigen::MatrixXd mu_y = detail::gauss11_valid(y);
  const Eigen::MatrixXd var_x =
      detail::gauss11_valid(x.cwiseProduct(x)) - mu_x.cwiseProduct(mu_x);
  const Eigen::MatrixXd var_y =
      detail::gauss11_valid(y.cwiseProduct(y)) - mu_y.cwiseProduct(mu_y);
  const Eigen::MatrixXd cov =
      detail::gauss11_valid(x.cwiseProduct(y)) - mu_x.cwiseProduct(mu_y);

  const Eigen::ArrayXXd numer = (2.0 * mu_x.cwiseProduct(mu_y).array() + c1) *
                                (2.0 * cov.array() + c2);
  const Eigen::ArrayXXd denom =
      (mu_x.array().square() + mu_y.array().square() + c1) *
      (var_x.array() + var_y.array() + c2);
  return (numer / denom).mean();
}

struct MetricReport {
  double psnr_y = 0.0;
  double psnr_c = 0.0;
  double ssim_y = 0.0;
  double mse = 0.0;
  LumaConvention luma = LumaConvention::digital;
};

/// All metrics for one prediction/ground-truth pair. Grayscale pairs use
/// the single channel as luma, so psnr_y == psnr_c for them.
template <typename Scalar>
MetricReport evaluate_pair(const ImageT<Scalar>& pred, const ImageT<Scalar>& gt,
                           LumaConvention convention) {
  MetricReport r;
  r.luma = convention;
  r.mse = mse(pred, gt);
  r.psnr_c = psnr(pred, gt);
  r.psnr_y = pred.channels() == 3 ? psnr_y(pred, gt, convention) : r.psnr_c;
  r.ssim_y = ssim(pred, gt, 1.0, convention);
  return r;
}

}  // namespace rsfactor
