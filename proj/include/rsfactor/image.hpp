#pragma once

/// \file image.hpp
/// Image container and elementary statistics.
///
/// Layout: planar. An image is a vector of per-channel Eigen matrices
/// (column-major inside each plane, indexed as plane(row, col)); channel
/// order is R, G, B for color images. Samples are stored at the scalar
/// precision of the instantiation — `Image` (float) is the canonical
/// storage type, `ImageD` (double) the high-precision pipeline type — and
/// every reduction (means, norms, losses) accumulates in 64-bit regardless
/// of the sample type.

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsfactor {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Planar raster; 1 (gray) or 3 (RGB) channels of equal shape.
template <typename Scalar>
struct ImageT {
  std::vector<MatrixX<Scalar>> planes;

  ImageT() = default;
  ImageT(Eigen::Index height, Eigen::Index width, int channels) {
    planes.assign(static_cast<std::size_t>(channels),
                  MatrixX<Scalar>::Zero(height, width));
  }

  Eigen::Index height() const { return planes.empty() ? 0 : planes[0].rows(); }
  Eigen::Index width() const { return planes.empty() ? 0 : planes[0].cols(); }
  int channels() const { return static_cast<int>(planes.size()); }
  Eigen::Index samples() const {
    return height() * width() * static_cast<Eigen::Index>(planes.size());
  }

  template <typename Other>
  ImageT<Other> cast() const {
    ImageT<Other> out;
    out.planes.reserve(planes.size());
    for (const auto& p : planes) out.planes.push_back(p.template cast<Other>());
    return out;
  }
};

using Image = ImageT<float>;
using ImageD = ImageT<double>;

enum class LumaConvention { analog, digital };

/// Arithmetic mean of all entries, accumulated in double with Eigen's fixed
/// reduction order (deterministic for a given shape).
template <typename Derived>
double mean(const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) throw std::invalid_argument("mean: empty matrix");
  return m.template cast<double>().sum() / static_cast<double>(m.size());
}

/// Mean over every sample of every channel.
template <typename Scalar>
double mean(const ImageT<Scalar>& img) {
  if (img.channels() == 0 || img.samples() == 0)
    throw std::invalid_argument("mean: empty image");
  double acc = 0.0;
  for (const auto& p : img.planes) acc += p.template cast<double>().sum();
  return acc / static_cast<double>(img.samples());
}

/// Per-channel weights for luma extraction. The analog coefficients sum to
/// 1; the digital ones (no offset term) sum to 0.8588.
inline const double* luma_weights(LumaConvention convention) {
  static const double analog[3] = {0.299, 0.587, 0.114};
  static const double digital[3] = {0.2568, 0.5041, 0.0979};
  return convention == LumaConvention::analog ? analog : digital;
}

/// Weighted channel combination Y = wr*R + wg*G + wb*B as a 1-channel image.
template <typename Scalar>
ImageT<Scalar> rgb_to_luma(const ImageT<Scalar>& img, LumaConvention convention) {
  if (img.channels() != 3)
    throw std::invalid_argument("rgb_to_luma: expected a 3-channel image, got " +
                                std::to_string(img.channels()));
  const double* w = luma_weights(convention);
  ImageT<Scalar> out;
  out.planes.push_back((w[0] * img.planes[0].template cast<double>() +
                        w[1] * img.planes[1].template cast<double>() +
                        w[2] * img.planes[2].template cast<double>())
                           .template cast<Scalar>());
  return out;
}

/// Largest singular value by power iteration on m^T m, to relative
/// tolerance 1e-6 on the value. Returns 0 for the all-zero matrix.
template <typename Derived>
double spectral_norm(const Eigen::MatrixBase<Derived>& m) {
  if (m.size() == 0) throw std::invalid_argument("spectral_norm: empty matrix");
  const Eigen::MatrixXd md = m.template cast<double>();
  if (md.isZero(0.0)) return 0.0;

  Eigen::VectorXd v = Eigen::VectorXd::Ones(md.cols());
  v.normalize();
  double sigma = 0.0;
  constexpr int kMaxIters = 10000;
  for (int it = 0; it < kMaxIters; ++it) {
    Eigen::VectorXd mv = md * v;
    const double next = mv.norm();
    if (next == 0.0) return 0.0;  // v landed in the null space; matrix is degenerate
    v = md.transpose() * mv;
    const double vn = v.norm();
    if (vn == 0.0) return next;
    v /= vn;
    if (std::abs(next - sigma) <= 1e-6 * next && it > 0) return next;
    sigma = next;
  }
  return sigma;
}

/// Clamp every sample into [lo, hi] in place.
template <typename Scalar>
void clamp(ImageT<Scalar>& img, Scalar lo, Scalar hi) {
  for (auto& p : img.planes) p = p.cwiseMax(lo).cwiseMin(hi);
}

template <typename Scalar>
bool all_finite(const ImageT<Scalar>& img) {
  for (const auto& p : img.planes)
    if (!p.allFinite()) return false;
  return true;
}

template <typename Scalar>
bool same_shape(const ImageT<Scalar>& a, const ImageT<Scalar>& b) {
  return a.channels() == b.channels() && a.height() == b.height() &&
         a.width() == b.width();
}

}  // namespace rsfactor
