#pragma once

/// \file fusion.hpp
/// Network-free fusion of a factor stack into an enhanced image:
/// mean-weighted running-average fusion, per-factor quadratic curve
/// adjustment masked by factor magnitudes, and an edge-preserving
/// bilateral post-filter.
///
/// The "curve" enhancement mode refines the running-average fusion with
/// the quadratic curves (whose per-factor gammas are what phase-2 training
/// tunes); "running_average" stops after the weighted average. Both end
/// with the bilateral filter and a clamp to [0,1].

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsfactor/errors.hpp"
#include "rsfactor/factorize.hpp"
#include "rsfactor/image.hpp"

namespace rsfactor {

enum class FusionMode { running_average, curve };

struct BilateralParams {
  int window = 5;
  double sigma_color = 0.5;
  double sigma_space = 1.0;
};

struct FusionConfig {
  /// Weight applied to the input image entering the running average (the
  /// leading entry of the published K+1 weight vector).
  double image_weight = 1.0;
  std::vector<double> factor_weights;  ///< pre-fusion scaling of F^k, length K
  std::vector<double> gammas;          ///< per-factor curve coefficients, length K
  BilateralParams bilateral;
  FusionMode mode = FusionMode::curve;
  /// Comparison variant: sum the K+1 singly-curved images instead of
  /// iterating the curve (scales brightness by roughly K+1; off by default).
  bool curve_literal_sum = false;

  /// The published defaults: unit image weight, factor weights 4, zero
  /// gammas, 5x5 bilateral with sigma_color 0.5 / sigma_space 1.
  static FusionConfig defaults_for(int k_factors) {
    FusionConfig cfg;
    cfg.factor_weights.assign(static_cast<std::size_t>(k_factors), 4.0);
    cfg.gammas.assign(static_cast<std::size_t>(k_factors), 0.0);
    return cfg;
  }

  void validate(int k_factors) const {
    if (static_cast<int>(factor_weights.size()) != k_factors ||
        static_cast<int>(gammas.size()) != k_factors)
      throw std::invalid_argument("FusionConfig: weight/gamma length must equal K");
    if (image_weight < 0.0)
      throw std::invalid_argument("FusionConfig: negative image weight");
    for (double w : factor_weights)
      if (w < 0.0) throw std::invalid_argument("FusionConfig: negative factor weight");
    if (bilateral.window < 1 || bilateral.window % 2 == 0)
      throw std::invalid_argument("FusionConfig: bilateral window must be odd and >= 1");
    if (bilateral.sigma_color <= 0.0 || bilateral.sigma_space <= 0.0)
      throw std::invalid_argument("FusionConfig: bilateral sigmas must be positive");
  }
};

/// Running-average fusion. Weights are the normalized factor means
/// w^k = mean(F^k) / sum_j mean(F^j); when any factor mean is non-positive
/// the means of |F^k| are used instead so the combination stays convex, and
/// the weights are renormalized to sum to exactly 1. Starting from the
/// input image, each factor is blended in:
/// O^{k} = (1 - w^k) O^{k-1} + w^k F^k. Output clamped to [0,1].
template <typename Scalar>
ImageT<Scalar> fuse_running_average(const ImageT<Scalar>& img,
                                    const FactorStackT<Scalar>& stack);

namespace detail {

/// Running-average fusion over bare difference maps (the trainer feeds
/// weighted copies without carrying a whole stack).
template <typename Scalar>
ImageT<Scalar> running_average(const ImageT<Scalar>& img,
                               const std::vector<ImageT<Scalar>>& f) {
  const int k_count = static_cast<int>(f.size());
  if (k_count == 0 || !same_shape(img, f[0]))
    throw std::invalid_argument("fuse_running_average: stack does not match image");

  std::vector<double> means(static_cast<std::size_t>(k_count));
  bool fallback = false;
  for (int k = 0; k < k_count; ++k) {
    means[k] = mean(f[k]);
    if (means[k] <= 0.0) fallback = true;
  }
  if (fallback) {
    for (int k = 0; k < k_count; ++k) {
      double acc = 0.0;
      for (const auto& p : f[k].planes) acc += p.template cast<double>().cwiseAbs().sum();
      means[k] = acc / static_cast<double>(f[k].samples());
    }
  }
  double sum = 0.0;
  for (double m : means) sum += m;
  if (sum == 0.0) throw NumericError("fuse_running_average: degenerate factor stack");
  std::vector<double> weights(means.size());
  for (std::size_t k = 0; k < means.size(); ++k) weights[k] = means[k] / sum;
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  for (double& w : weights) w /= wsum;  // renormalize away division residue

  ImageT<Scalar> out = img;
  for (int k = 0; k < k_count; ++k) {
    const Scalar w = static_cast<Scalar>(weights[static_cast<std::size_t>(k)]);
    for (int c = 0; c < out.channels(); ++c)
      out.planes[c] = (Scalar(1) - w) * out.planes[c] + w * f[k].planes[c];
  }
  clamp(out, Scalar(0), Scalar(1));
  return out;
}

}  // namespace detail

template <typename Scalar>
ImageT<Scalar> fuse_running_average(const ImageT<Scalar>& img,
                                    const FactorStackT<Scalar>& stack) {
  if (stack.k_factors() == 0 || !same_shape(img, stack.e[0]))
    throw std::invalid_argument("fuse_running_average: stack does not match image");
  return detail::running_average(img, stack.f);
}

namespace detail {

/// Max-normalized magnitude masks M^k = |F^k| / max|F^k| of the given
/// difference maps (an all-zero factor yields an all-zero mask).
template <typename Scalar>
std::vector<ImageT<Scalar>> magnitude_masks(const std::vector<ImageT<Scalar>>& maps) {
  std::vector<ImageT<Scalar>> masks;
  masks.reserve(maps.size());
  for (const auto& f : maps) {
    ImageT<Scalar> m = f;
    Scalar peak = Scalar(0);
    for (auto& p : m.planes) {
      p = p.cwiseAbs();
      peak = std::max(peak, p.maxCoeff());
    }
    if (peak > Scalar(0))
      for (auto& p : m.planes) p /= peak;
    masks.push_back(std::move(m));
  }
  return masks;
}

/// The curve passes of curve_adjust, taking precomputed masks (the trainer
/// caches masks across gamma probes).
template <typename Scalar>
ImageT<Scalar> apply_curves(const ImageT<Scalar>& img,
                            const std::vector<ImageT<Scalar>>& masks,
                            const std::vector<double>& gammas, bool literal_sum) {
  const int k_count = static_cast<int>(masks.size());
  ImageT<Scalar> out;
  if (literal_sum) {
    // Sum of the base image and the K singly-curved images.
    out = img;
    for (int c = 0; c < img.channels(); ++c) {
      const auto& base = img.planes[c];
      const MatrixX<Scalar> droop = base.cwiseProduct(base) - base;
      for (int k = 0; k < k_count; ++k)
        out.planes[c] +=
            base + static_cast<Scalar>(gammas[static_cast<std::size_t>(k)]) *
                       masks[static_cast<std::size_t>(k)].planes[c].cwiseProduct(droop);
    }
  } else {
    out = img;
    for (int k = 0; k < k_count; ++k) {
      const Scalar r = static_cast<Scalar>(gammas[static_cast<std::size_t>(k)]);
      for (int c = 0; c < out.channels(); ++c) {
        auto& o = out.planes[c];
        o += r * masks[static_cast<std::size_t>(k)].planes[c].cwiseProduct(
                     o.cwiseProduct(o) - o);
      }
    }
  }
  clamp(out, Scalar(0), Scalar(1));
  return out;
}

}  // namespace detail

/// Iterated quadratic curve adjustment. Each factor contributes one curve
/// pass O <- O + r^k M^k (O^2 - O), localized by the max-normalized
/// magnitude mask M^k = |F^k| / max|F^k| (an all-zero factor yields a zero
/// mask and no adjustment). Negative gammas brighten, positive darken.
/// With literal_sum the K+1 singly-curved images are summed instead.
/// Result clamped to [0,1].
template <typename Scalar>
ImageT<Scalar> curve_adjust(const ImageT<Scalar>& img, const FactorStackT<Scalar>& stack,
                            const std::vector<double>& gammas,
                            bool literal_sum = false) {
  const int k_count = stack.k_factors();
  if (k_count == 0 || !same_shape(img, stack.e[0]))
    throw std::invalid_argument("curve_adjust: stack does not match image");
  if (static_cast<int>(gammas.size()) != k_count)
    throw std::invalid_argument("curve_adjust: expected " + std::to_string(k_count) +
                                " gammas, got " + std::to_string(gammas.size()));
  return detail::apply_curves(img, detail::magnitude_masks(stack.f), gammas, literal_sum);
}

namespace detail {

/// Replicate-pad a matrix by h on every side.
template <typename Scalar>
MatrixX<Scalar> replicate_pad(const MatrixX<Scalar>& m, int h) {
  const Eigen::Index rows = m.rows();
  const Eigen::Index cols = m.cols();
  MatrixX<Scalar> out(rows + 2 * h, cols + 2 * h);
  out.block(h, h, rows, cols) = m;
  for (int i = 0; i < h; ++i) {
    out.block(i, h, 1, cols) = m.row(0);
    out.block(rows + h + i, h, 1, cols) = m.row(rows - 1);
  }
  for (int j = 0; j < h; ++j) {
    out.col(j) = out.col(h);
    out.col(cols + h + j) = out.col(cols + h - 1);
  }
  return out;
}

}  // namespace detail

/// Classical bilateral filter: Gaussian spatial kernel times a Gaussian
/// range kernel on the per-channel intensity difference, normalized
/// weights, replicate padding at the borders.
template <typename Scalar>
ImageT<Scalar> bilateral_filter(const ImageT<Scalar>& img, int window,
                                double sigma_color, double sigma_space) {
  if (window < 1 || window % 2 == 0)
    throw std::invalid_argument("bilateral_filter: window must be odd and >= 1");
  if (sigma_color <= 0.0 || sigma_space <= 0.0)
    throw std::invalid_argument("bilateral_filter: sigmas must be positive");

  const int h = window / 2;
  const Scalar inv2sc = Scalar(1.0 / (2.0 * sigma_color * sigma_color));
  const double inv2ss = 1.0 / (2.0 * sigma_space * sigma_space);

  ImageT<Scalar> out = img;
  if (h == 0) return out;  // single-tap window is the identity

  using ArrayXX = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  for (int c = 0; c < img.channels(); ++c) {
    const MatrixX<Scalar> padded = detail::replicate_pad(img.planes[c], h);
    const ArrayXX center = img.planes[c].array();
    ArrayXX num = ArrayXX::Zero(center.rows(), center.cols());
    ArrayXX den = ArrayXX::Zero(center.rows(), center.cols());
    for (int dy = -h; dy <= h; ++dy) {
      for (int dx = -h; dx <= h; ++dx) {
        const Scalar ws =
            static_cast<Scalar>(std::exp(-(dy * dy + dx * dx) * inv2ss));
        const ArrayXX shifted =
            padded.block(h + dy, h + dx, center.rows(), center.cols()).array();
        const ArrayXX w = ws * (-(shifted - center).square() * inv2sc).exp();
        num += w * shifted;
        den += w;
      }
    }
    out.planes[c] = (num / den).matrix();
  }
  return out;
}

template <typename Scalar>
ImageT<Scalar> bilateral_filter(const ImageT<Scalar>& img, const BilateralParams& p) {
  return bilateral_filter(img, p.window, p.sigma_color, p.sigma_space);
}

/// Enhancement from a precomputed stack (the trainer reuses stacks across
/// objective evaluations). The stack's difference maps are scaled in a
/// local copy; masks are unaffected by uniform scaling but the
/// running-average weights are, which is the point of the weight vector.
template <typename Scalar>
ImageT<Scalar> enhance_stack(const ImageT<Scalar>& img, const FactorStackT<Scalar>& stack,
                             const FusionConfig& fcfg) {
  fcfg.validate(stack.k_factors());
  FactorStackT<Scalar> scaled = stack;
  for (int k = 0; k < scaled.k_factors(); ++k) {
    const Scalar w = static_cast<Scalar>(fcfg.factor_weights[static_cast<std::size_t>(k)]);
    for (auto& p : scaled.f[static_cast<std::size_t>(k)].planes) p *= w;
  }
  ImageT<Scalar> base = img;
  if (fcfg.image_weight != 1.0)
    for (auto& p : base.planes) p *= static_cast<Scalar>(fcfg.image_weight);

  ImageT<Scalar> fused = fuse_running_average(base, scaled);
  if (fcfg.mode == FusionMode::curve)
    fused = curve_adjust(fused, scaled, fcfg.gammas, fcfg.curve_literal_sum);
  fused = bilateral_filter(fused, fcfg.bilateral);
  clamp(fused, Scalar(0), Scalar(1));
  return fused;
}

/// Full enhancement pipeline: factorize, scale the difference maps by the
/// factor weights, fuse (running average, then quadratic curves when the
/// mode asks for them), bilateral-filter, clamp.
template <typename Scalar>
ImageT<Scalar> enhance(const ImageT<Scalar>& img, const ParamVector& params,
                       const FusionConfig& fcfg, const SolveOptions& opts = {},
                       double blend = 0.9) {
  fcfg.validate(params.k_factors);
  const FactorStackT<Scalar> stack = factorize(img, params, opts, blend);
  return enhance_stack(img, stack, fcfg);
}

}  // namespace rsfactor
