#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rsfactor/errors.hpp"
#include "rsfactor/fusion.hpp"
#include "rsfactor/rng.hpp"

using namespace rsfactor;

namespace {

Image constant_image(Eigen::Index h, Eigen::Index w, int channels, float value) {
  Image img(h, w, channels);
  for (auto& p : img.planes) p.setConstant(value);
  return img;
}

Image random_image(Eigen::Index h, Eigen::Index w, int channels, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w, channels);
  for (auto& plane : img.planes)
    for (Eigen::Index j = 0; j < w; ++j)
      for (Eigen::Index i = 0; i < h; ++i)
        plane(i, j) = static_cast<float>(rng.uniform());
  return img;
}

/// Stack with hand-picked difference maps (e mirrors f; only shapes and f
/// matter to the fusion stages).
FactorStack manual_stack(std::vector<Image> f) {
  FactorStack s;
  s.e = f;
  s.f = std::move(f);
  s.residual_absorbed = true;
  return s;
}

ParamVector small_params(int k_factors, int t_iters) {
  ParamVector p;
  p.k_factors = k_factors;
  p.t_iters = t_iters;
  for (int k = 0; k < k_factors; ++k) {
    FactorParams f;
    f.alpha.assign(t_iters, 0.05);
    f.beta.assign(t_iters, 0.1);
    f.mu.assign(t_iters, 1.0);
    p.factors.push_back(std::move(f));
  }
  return p;
}

}  // namespace

TEST_CASE("fusion configuration") {
  FusionConfig cfg = FusionConfig::defaults_for(5);
  CHECK(cfg.image_weight == 1.0);
  REQUIRE(cfg.factor_weights.size() == 5);
  for (double w : cfg.factor_weights) CHECK(w == 4.0);
  for (double g : cfg.gammas) CHECK(g == 0.0);
  CHECK(cfg.mode == FusionMode::curve);
  CHECK(cfg.bilateral.window == 5);
  CHECK_NOTHROW(cfg.validate(5));

  SUBCASE("length mismatches are rejected") {
    CHECK_THROWS_AS(cfg.validate(4), std::invalid_argument);
  }
  SUBCASE("negative weights are rejected") {
    FusionConfig bad = cfg;
    bad.factor_weights[2] = -1.0;
    CHECK_THROWS_AS(bad.validate(5), std::invalid_argument);
    bad = cfg;
    bad.image_weight = -0.5;
    CHECK_THROWS_AS(bad.validate(5), std::invalid_argument);
  }
  SUBCASE("bilateral parameters are checked") {
    FusionConfig bad = cfg;
    bad.bilateral.window = 4;
    CHECK_THROWS_AS(bad.validate(5), std::invalid_argument);
    bad = cfg;
    bad.bilateral.sigma_color = 0.0;
    CHECK_THROWS_AS(bad.validate(5), std::invalid_argument);
  }
}

TEST_CASE("running-average fusion") {
  const Image img = constant_image(4, 4, 1, 0.5f);

  SUBCASE("a single factor takes over completely") {
    const FactorStack stack = manual_stack({constant_image(4, 4, 1, 0.3f)});
    const Image out = fuse_running_average(img, stack);
    CHECK(out.planes[0](2, 2) == doctest::Approx(0.3).epsilon(1e-6));
  }
  SUBCASE("hand-computed two-factor blend") {
    const FactorStack stack = manual_stack(
        {constant_image(4, 4, 1, 0.2f), constant_image(4, 4, 1, 0.6f)});
    // means 0.2/0.6 -> weights 0.25/0.75;
    // O1 = 0.75*0.5 + 0.25*0.2 = 0.425; O2 = 0.25*0.425 + 0.75*0.6 = 0.55625.
    const Image out = fuse_running_average(img, stack);
    CHECK(out.planes[0](0, 0) == doctest::Approx(0.55625).epsilon(1e-6));
  }
  SUBCASE("non-positive factor means fall back to magnitude weighting") {
    const FactorStack stack = manual_stack(
        {constant_image(4, 4, 1, -0.1f), constant_image(4, 4, 1, 0.3f)});
    // |means| 0.1/0.3 -> weights 0.25/0.75; the signed values still blend:
    // O1 = 0.75*0.5 + 0.25*(-0.1) = 0.35; O2 = 0.25*0.35 + 0.75*0.3 = 0.3125.
    const Image out = fuse_running_average(img, stack);
    CHECK(out.planes[0](1, 3) == doctest::Approx(0.3125).epsilon(1e-6));
  }
  SUBCASE("an all-zero stack is degenerate") {
    const FactorStack stack = manual_stack(
        {constant_image(4, 4, 1, 0.0f), constant_image(4, 4, 1, 0.0f)});
    CHECK_THROWS_AS(fuse_running_average(img, stack), NumericError);
  }
  SUBCASE("output lands in [0,1]") {
    const FactorStack stack = manual_stack({constant_image(4, 4, 1, 3.0f)});
    const Image out = fuse_running_average(img, stack);
    CHECK(out.planes[0].maxCoeff() <= 1.0f);
    CHECK(out.planes[0].minCoeff() >= 0.0f);
  }
  SUBCASE("shape mismatches are rejected") {
    const FactorStack stack = manual_stack({constant_image(3, 4, 1, 0.2f)});
    CHECK_THROWS_AS(fuse_running_average(img, stack), std::invalid_argument);
    CHECK_THROWS_AS(fuse_running_average(img, FactorStack{}), std::invalid_argument);
  }
}

TEST_CASE("quadratic curve adjustment") {
  const Image img = constant_image(4, 4, 1, 0.5f);

  SUBCASE("zero gammas change nothing") {
    const FactorStack stack = manual_stack({random_image(4, 4, 1, 81)});
    const Image out = curve_adjust(img, stack, {0.0});
    CHECK((out.planes[0] - img.planes[0]).cwiseAbs().maxCoeff() == 0.0f);
  }
  SUBCASE("a negative gamma brightens under a full mask") {
    // Constant factor -> mask of ones; O = 0.5 - r*(0.5^2 - 0.5) = 0.5 - 0.25 r.
    const FactorStack stack = manual_stack({constant_image(4, 4, 1, 0.7f)});
    const Image out = curve_adjust(img, stack, {-1.0});
    CHECK(out.planes[0](0, 0) == doctest::Approx(0.75).epsilon(1e-6));
  }
  SUBCASE("curves iterate across factors") {
    const FactorStack stack = manual_stack(
        {constant_image(4, 4, 1, 0.3f), constant_image(4, 4, 1, 0.9f)});
    // First pass: 0.5 -> 0.75; second: 0.75 + (0.75^2 - 0.75)*(-1) = 0.9375.
    const Image out = curve_adjust(img, stack, {-1.0, -1.0});
    CHECK(out.planes[0](3, 3) == doctest::Approx(0.9375).epsilon(1e-6));
  }
  SUBCASE("masks are max-normalized magnitudes") {
    Image f(2, 2, 1);
    f.planes[0] << -2.0f, 1.0f, 0.0f, 0.0f;  // peak magnitude 2
    const Image base = constant_image(2, 2, 1, 0.5f);
    const Image out = curve_adjust(base, manual_stack({f}), {-1.0});
    // O = 0.5 + 0.25 * M with M = |F|/2.
    CHECK(out.planes[0](0, 0) == doctest::Approx(0.75).epsilon(1e-6));
    CHECK(out.planes[0](0, 1) == doctest::Approx(0.625).epsilon(1e-6));
    CHECK(out.planes[0](1, 0) == doctest::Approx(0.5).epsilon(1e-6));
  }
  SUBCASE("an all-zero factor contributes nothing") {
    const FactorStack stack = manual_stack({constant_image(4, 4, 1, 0.0f)});
    const Image out = curve_adjust(img, stack, {-3.0});
    CHECK((out.planes[0] - img.planes[0]).cwiseAbs().maxCoeff() == 0.0f);
  }
  SUBCASE("literal sum adds the singly-curved copies") {
    const FactorStack stack = manual_stack({constant_image(4, 4, 1, 0.2f)});
    // out = base + (base + r*(base^2 - base)) with full mask;
    // r = 0 -> 1.0 after clamping at exactly 2*0.5.
    const Image doubled = curve_adjust(img, stack, {0.0}, true);
    CHECK(doubled.planes[0](1, 1) == doctest::Approx(1.0).epsilon(1e-6));
    const Image darker = constant_image(4, 4, 1, 0.25f);
    // 0.25 + (0.25 - 1*(0.0625-0.25)) = 0.25 + 0.4375 = 0.6875.
    const Image out = curve_adjust(darker, stack, {-1.0}, true);
    CHECK(out.planes[0](1, 1) == doctest::Approx(0.6875).epsilon(1e-6));
  }
  SUBCASE("gamma count must match the stack") {
    const FactorStack stack = manual_stack({constant_image(4, 4, 1, 0.1f)});
    CHECK_THROWS_AS(curve_adjust(img, stack, {0.1, 0.2}), std::invalid_argument);
  }
}

TEST_CASE("replicate padding") {
  Eigen::MatrixXf m(2, 2);
  m << 1.0f, 2.0f, 3.0f, 4.0f;
  const Eigen::MatrixXf p = detail::replicate_pad(m, 1);
  REQUIRE(p.rows() == 4);
  REQUIRE(p.cols() == 4);
  Eigen::MatrixXf expected(4, 4);
  expected << 1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4;
  CHECK((p - expected).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("bilateral filter") {
  SUBCASE("constant images are fixed points") {
    const Image img = constant_image(8, 8, 3, 0.42f);
    const Image out = bilateral_filter(img, 5, 0.5, 1.0);
    for (int c = 0; c < 3; ++c)
      CHECK((out.planes[c] - img.planes[c]).cwiseAbs().maxCoeff() <= 1e-6f);
  }
  SUBCASE("a single-tap window is the identity") {
    const Image img = random_image(6, 6, 1, 91);
    const Image out = bilateral_filter(img, 1, 0.5, 1.0);
    CHECK((out.planes[0] - img.planes[0]).cwiseAbs().maxCoeff() == 0.0f);
  }
  SUBCASE("smooths noise") {
    Image img = constant_image(16, 16, 1, 0.5f);
    Rng rng(92);
    for (Eigen::Index j = 0; j < 16; ++j)
      for (Eigen::Index i = 0; i < 16; ++i)
        img.planes[0](i, j) += static_cast<float>(rng.uniform(-0.05, 0.05));
    const Image out = bilateral_filter(img, 5, 0.5, 1.0);
    const auto dev_in = (img.planes[0].array() - 0.5f).abs().mean();
    const auto dev_out = (out.planes[0].array() - 0.5f).abs().mean();
    CHECK(dev_out < 0.5f * dev_in);
  }
  SUBCASE("preserves a hard step under a narrow range kernel") {
    Image img(10, 10, 1);
    img.planes[0].leftCols(5).setConstant(0.0f);
    img.planes[0].rightCols(5).setConstant(1.0f);
    const Image out = bilateral_filter(img, 5, 0.1, 2.0);
    CHECK((out.planes[0] - img.planes[0]).cwiseAbs().maxCoeff() <= 1e-4f);
  }
  SUBCASE("matches a scalar reference implementation") {
    const Image img = random_image(7, 6, 1, 93);
    const int window = 3, half = 1;
    const double sc = 0.4, ss = 1.2;
    const Image out = bilateral_filter(img, window, sc, ss);

    const auto& p = img.planes[0];
    auto at = [&](Eigen::Index i, Eigen::Index j) {
      i = std::min<Eigen::Index>(std::max<Eigen::Index>(i, 0), p.rows() - 1);
      j = std::min<Eigen::Index>(std::max<Eigen::Index>(j, 0), p.cols() - 1);
      return static_cast<double>(p(i, j));
    };
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        double num = 0.0, den = 0.0;
        for (int dy = -half; dy <= half; ++dy)
          for (int dx = -half; dx <= half; ++dx) {
            const double v = at(i + dy, j + dx);
            const double w =
                std::exp(-(dy * dy + dx * dx) / (2.0 * ss * ss)) *
                std::exp(-(v - at(i, j)) * (v - at(i, j)) / (2.0 * sc * sc));
            num += w * v;
            den += w;
          }
        CHECK(static_cast<double>(out.planes[0](i, j)) ==
              doctest::Approx(num / den).epsilon(1e-5));
      }
  }
  SUBCASE("parameters are checked") {
    const Image img = random_image(5, 5, 1, 94);
    CHECK_THROWS_AS(bilateral_filter(img, 4, 0.5, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(bilateral_filter(img, 5, 0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(bilateral_filter(img, 5, 0.5, -1.0), std::invalid_argument);
  }
}

TEST_CASE("full enhancement pipeline") {
  const ParamVector params = small_params(3, 3);
  const Image img = random_image(14, 12, 3, 95);

  SUBCASE("composes factorization with stack enhancement") {
    FusionConfig cfg = FusionConfig::defaults_for(3);
    const Image direct = enhance(img, params, cfg);
    const FactorStack stack = factorize(img, params);
    const Image staged = enhance_stack(img, stack, cfg);
    for (int c = 0; c < 3; ++c)
      CHECK((direct.planes[c] - staged.planes[c]).cwiseAbs().maxCoeff() == 0.0f);
  }
  SUBCASE("zero gammas make both modes coincide") {
    FusionConfig curve_cfg = FusionConfig::defaults_for(3);
    FusionConfig ra_cfg = curve_cfg;
    ra_cfg.mode = FusionMode::running_average;
    const Image a = enhance(img, params, curve_cfg);
    const Image b = enhance(img, params, ra_cfg);
    for (int c = 0; c < 3; ++c)
      CHECK((a.planes[c] - b.planes[c]).cwiseAbs().maxCoeff() == 0.0f);
  }
  SUBCASE("nonzero gammas separate the modes") {
    FusionConfig curve_cfg = FusionConfig::defaults_for(3);
    curve_cfg.gammas = {-1.0, -1.0, -1.0};
    FusionConfig ra_cfg = curve_cfg;
    ra_cfg.mode = FusionMode::running_average;
    const Image a = enhance(img, params, curve_cfg);
    const Image b = enhance(img, params, ra_cfg);
    float diff = 0.0f;
    for (int c = 0; c < 3; ++c)
      diff = std::max(diff, (a.planes[c] - b.planes[c]).cwiseAbs().maxCoeff());
    CHECK(diff > 1e-4f);
  }
  SUBCASE("output is clamped and finite") {
    FusionConfig cfg = FusionConfig::defaults_for(3);
    cfg.gammas = {-5.0, 3.0, -2.0};
    const Image out = enhance(img, params, cfg);
    CHECK(all_finite(out));
    for (int c = 0; c < 3; ++c) {
      CHECK(out.planes[c].maxCoeff() <= 1.0f);
      CHECK(out.planes[c].minCoeff() >= 0.0f);
    }
  }
  SUBCASE("factor weights steer the blend") {
    FusionConfig a = FusionConfig::defaults_for(3);
    FusionConfig b = a;
    b.factor_weights = {8.0, 1.0, 1.0};
    const Image out_a = enhance(img, params, a);
    const Image out_b = enhance(img, params, b);
    float diff = 0.0f;
    for (int c = 0; c < 3; ++c)
      diff = std::max(diff, (out_a.planes[c] - out_b.planes[c]).cwiseAbs().maxCoeff());
    CHECK(diff > 1e-5f);
  }
  SUBCASE("config errors surface before any work") {
    FusionConfig bad = FusionConfig::defaults_for(2);
    CHECK_THROWS_AS(enhance(img, params, bad), std::invalid_argument);
  }
}
