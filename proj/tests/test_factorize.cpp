#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rsfactor/factorize.hpp"
#include "rsfactor/rng.hpp"

using namespace rsfactor;

namespace {

ParamVector make_params(int k_factors, int t_iters, double alpha, double beta,
                        double mu) {
  ParamVector p;
  p.k_factors = k_factors;
  p.t_iters = t_iters;
  for (int k = 0; k < k_factors; ++k) {
    FactorParams f;
    f.alpha.assign(t_iters, alpha);
    f.beta.assign(t_iters, beta);
    f.mu.assign(t_iters, mu);
    p.factors.push_back(std::move(f));
  }
  return p;
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

}  // namespace

TEST_CASE("parameter vector validation and relaxation schedule") {
  ParamVector p = make_params(4, 3, 0.1, 0.2, 1.0);
  CHECK_NOTHROW(p.validate());

  SUBCASE("relaxation levels climb linearly to one") {
    for (int k = 1; k <= 4; ++k)
      CHECK(p.nu(k) == doctest::Approx(k / 4.0).epsilon(1e-15));
    CHECK(p.nu(4) == 1.0);
    for (int k = 2; k <= 4; ++k) CHECK(p.nu(k) > p.nu(k - 1));
  }
  SUBCASE("factor count must match") {
    p.factors.pop_back();
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  }
  SUBCASE("iteration count must match") {
    p.factors[2].mu.push_back(1.0);
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  }
  SUBCASE("degenerate shapes are rejected") {
    CHECK_THROWS_AS(make_params(0, 3, 0.1, 0.2, 1.0).validate(), std::invalid_argument);
    ParamVector q = make_params(2, 3, 0.1, 0.2, 1.0);
    q.t_iters = 0;
    CHECK_THROWS_AS(q.validate(), std::invalid_argument);
  }
}

TEST_CASE("per-instance threshold blending") {
  FactorParams learned;
  learned.alpha = {0.5, 0.3};
  learned.beta = {0.2, 0.6};
  learned.mu = {0.7, 1.3};

  SUBCASE("blends learned and analytic values at the documented ratio") {
    // k=1 of 2: nu = 0.5, analytic alpha = 0.5 * x_mean, analytic beta = 0.5 * x_mean.
    const double x_mean = 0.4;
    const FactorParams inst = init_factor_thresholds(1, 2, x_mean, learned);
    CHECK(inst.alpha[0] == doctest::Approx(0.9 * 0.5 + 0.1 * 0.2).epsilon(1e-12));
    CHECK(inst.alpha[1] == doctest::Approx(0.9 * 0.3 + 0.1 * 0.2).epsilon(1e-12));
    CHECK(inst.beta[0] == doctest::Approx(0.9 * 0.2 + 0.1 * 0.2).epsilon(1e-12));
    CHECK(inst.beta[1] == doctest::Approx(0.9 * 0.6 + 0.1 * 0.2).epsilon(1e-12));
    CHECK(inst.mu[0] == 0.7);  // step sizes pass through untouched
    CHECK(inst.mu[1] == 1.3);
  }
  SUBCASE("last factor has a fully relaxed sparsity term") {
    // k=K: nu = 1, so the analytic alpha contribution vanishes.
    const FactorParams inst = init_factor_thresholds(3, 3, 0.4, learned);
    CHECK(inst.alpha[0] == doctest::Approx(0.9 * 0.5).epsilon(1e-12));
    CHECK(inst.beta[0] == doctest::Approx(0.9 * 0.2 + 0.1 * 0.4).epsilon(1e-12));
  }
  SUBCASE("blend extremes select one side") {
    const FactorParams pure_learned = init_factor_thresholds(1, 2, 0.4, learned, 1.0);
    CHECK(pure_learned.alpha[0] == doctest::Approx(0.5).epsilon(1e-12));
    const FactorParams pure_analytic = init_factor_thresholds(1, 2, 0.4, learned, 0.0);
    CHECK(pure_analytic.alpha[0] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(pure_analytic.beta[1] == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("negative blends clamp to zero so the solve stays valid") {
    FactorParams probed = learned;
    probed.alpha[0] = -2.0;  // a gradient probe can push a scalar negative
    const FactorParams inst = init_factor_thresholds(1, 2, 0.1, probed);
    CHECK(inst.alpha[0] == 0.0);
    CHECK_NOTHROW(inst.validate());
  }
  SUBCASE("negative residual means clamp the same way") {
    const FactorParams inst = init_factor_thresholds(1, 2, -10.0, learned, 0.0);
    CHECK(inst.alpha[0] == 0.0);
    CHECK(inst.beta[0] == 0.0);
  }
  SUBCASE("factor index must be in range") {
    CHECK_THROWS_AS(init_factor_thresholds(0, 2, 0.4, learned), std::invalid_argument);
    CHECK_THROWS_AS(init_factor_thresholds(3, 2, 0.4, learned), std::invalid_argument);
  }
}

TEST_CASE("difference maps") {
  SUBCASE("first map is the first factor, later maps are consecutive deltas") {
    std::vector<Image> e;
    for (int k = 0; k < 3; ++k) {
      Image img(2, 2, 1);
      img.planes[0].setConstant(static_cast<float>(k * k + 1));  // 1, 2, 5
      e.push_back(std::move(img));
    }
    const auto f = factor_differences(e);
    REQUIRE(f.size() == 3);
    CHECK(f[0].planes[0](0, 0) == 1.0f);
    CHECK(f[1].planes[0](0, 0) == 1.0f);  // 2 - 1
    CHECK(f[2].planes[0](0, 0) == 3.0f);  // 5 - 2
  }
  SUBCASE("partial sums of the maps rebuild each factor") {
    std::vector<Image> e;
    for (std::uint64_t k = 0; k < 4; ++k) e.push_back(random_image(5, 6, 3, 400 + k));
    const auto f = factor_differences(e);
    Image running(5, 6, 3);
    for (std::size_t k = 0; k < e.size(); ++k) {
      for (int c = 0; c < 3; ++c) running.planes[c] += f[k].planes[c];
      for (int c = 0; c < 3; ++c)
        CHECK((running.planes[c] - e[k].planes[c]).cwiseAbs().maxCoeff() <= 1e-6f);
    }
  }
  SUBCASE("bad inputs are rejected") {
    CHECK_THROWS_AS(factor_differences(std::vector<Image>{}), std::invalid_argument);
    std::vector<Image> mismatched{Image(2, 2, 1), Image(3, 2, 1)};
    CHECK_THROWS_AS(factor_differences(mismatched), std::invalid_argument);
  }
}

TEST_CASE("recursive factorization") {
  const ParamVector params = make_params(3, 4, 0.05, 0.1, 1.0);

  SUBCASE("factors sum back to the input") {
    for (std::uint64_t seed : {501, 502, 503}) {
      CAPTURE(seed);
      const Image img = random_image(16, 12, 3, seed);
      const FactorStack stack = factorize(img, params);
      REQUIRE(stack.k_factors() == 3);
      CHECK(stack.residual_absorbed);
      for (int c = 0; c < 3; ++c) {
        Eigen::MatrixXf sum = Eigen::MatrixXf::Zero(16, 12);
        for (const auto& e : stack.e) sum += e.planes[c];
        CHECK((sum - img.planes[c]).cwiseAbs().maxCoeff() <= 1e-5f);
      }
    }
  }
  SUBCASE("double-precision path sums back much tighter") {
    const ImageD img = random_image(12, 10, 1, 510).cast<double>();
    const FactorStackD stack = factorize(img, params);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(12, 10);
    for (const auto& e : stack.e) sum += e.planes[0];
    CHECK((sum - img.planes[0]).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("matches a hand-rolled recursion exactly") {
    const Image img = random_image(10, 8, 2, 520);
    const FactorStack stack = factorize(img, params);

    for (int c = 0; c < 2; ++c) {
      Eigen::MatrixXf x = img.planes[c];
      std::vector<Eigen::MatrixXf> e_factors;
      for (int k = 1; k <= params.k_factors; ++k) {
        const double x_mean = mean(x);
        CHECK(stack.trace[c].x_mean[k - 1] == x_mean);
        const FactorParams inst =
            init_factor_thresholds(k, params.k_factors, x_mean, params.factors[k - 1]);
        auto state = detail::run_steps(init_state(x), x, inst, SolveOptions{},
                                       /*want_final_a=*/false);
        CHECK(stack.trace[c].e_pre_mean[k - 1] == mean(state.e));
        x -= state.e;
        e_factors.push_back(std::move(state.e));
      }
      e_factors.back() += x;  // leftover diffuse remainder
      for (int k = 0; k < params.k_factors; ++k)
        CHECK((stack.e[k].planes[c] - e_factors[k]).cwiseAbs().maxCoeff() == 0.0f);
    }
  }
  SUBCASE("difference maps are wired in") {
    const Image img = random_image(9, 9, 1, 530);
    const FactorStack stack = factorize(img, params);
    REQUIRE(stack.f.size() == 3);
    CHECK((stack.f[0].planes[0] - stack.e[0].planes[0]).cwiseAbs().maxCoeff() == 0.0f);
    const Eigen::MatrixXf expected = stack.e[1].planes[0] - stack.e[0].planes[0];
    CHECK((stack.f[1].planes[0] - expected).cwiseAbs().maxCoeff() == 0.0f);
  }
  SUBCASE("zero image decomposes into zero factors") {
    const Image img(6, 6, 1);
    const FactorStack stack = factorize(img, params);
    for (const auto& e : stack.e) CHECK(e.planes[0].cwiseAbs().maxCoeff() == 0.0f);
  }
  SUBCASE("trace records one entry per factor per channel") {
    const Image img = random_image(8, 8, 3, 540);
    const FactorStack stack = factorize(img, params);
    REQUIRE(stack.trace.size() == 3);
    for (const auto& t : stack.trace) {
      CHECK(t.x_mean.size() == 3);
      CHECK(t.e_pre_mean.size() == 3);
    }
    CHECK(stack.trace[1].x_mean[0] == doctest::Approx(mean(img.planes[1])).epsilon(1e-12));
  }
  SUBCASE("invalid inputs are rejected") {
    CHECK_THROWS_AS(factorize(Image(0, 0, 0), params), std::invalid_argument);
    ParamVector bad = params;
    bad.factors.clear();
    CHECK_THROWS_AS(factorize(random_image(4, 4, 1, 550), bad), std::invalid_argument);
  }
}
