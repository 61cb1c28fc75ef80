#include <gtest/gtest.h>

#include <cmath>

#include "imitlab/dv.hpp"
#include "imitlab/error.hpp"
#include "test_util.hpp"

using namespace imitlab;

TEST(Kl, ClosedForms) {
  const std::vector<double> p{1.0, 0.0}, q{0.5, 0.5};
  EXPECT_NEAR(kl_divergence(p, q), std::log(2.0), 1e-15);
  EXPECT_TRUE(std::isinf(kl_divergence(q, p)));
  EXPECT_DOUBLE_EQ(kl_divergence(q, q), 0.0);
  EXPECT_THROW(kl_divergence(p, std::vector<double>{1.0}), DimensionError);
  EXPECT_THROW(kl_divergence(std::vector<double>{0.7, 0.7}, q), ValueError);
}

TEST(Dv, IdenticalIsZero) {
  const std::vector<double> p{0.2, 0.3, 0.5};
  const DvResult r = dv_dual_value(p, p);
  EXPECT_NEAR(r.value, 0.0, 1e-15);
  EXPECT_TRUE(r.verified);
}

TEST(Dv, PointMassAgainstUniform) {
  const DvResult r = dv_dual_value(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0});
  EXPECT_NEAR(r.value, -std::log(2.0), 1e-15);
  EXPECT_TRUE(std::isinf(r.argmin[1]) && r.argmin[1] < 0);
  EXPECT_NEAR(dv_objective(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0}, r.argmin), r.value, 1e-15);
}

TEST(Dv, SupportViolationIsInfinite) {
  const DvResult r = dv_dual_value(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5});
  EXPECT_TRUE(r.infinite);
  EXPECT_TRUE(std::isinf(r.value) && r.value < 0);
}

TEST(Dv, RandomPairsMatchKlAndDescent) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const auto p_exp = imitlab::testing::random_simplex(rng, 6);
    const auto p_pi = imitlab::testing::random_simplex(rng, 6);
    const double target = -kl_divergence(p_pi, p_exp);
    const DvResult r = dv_dual_value(p_exp, p_pi);
    EXPECT_TRUE(r.verified);
    EXPECT_NEAR(r.value, target, 1e-12);
    // The minimizer attains the value and is a stationary point.
    EXPECT_NEAR(dv_objective(p_exp, p_pi, r.argmin), target, 1e-12);
    if (i < 10) EXPECT_NEAR(dv_dual_by_descent(p_exp, p_pi), target, 1e-6);
  }
}

TEST(Dv, ObjectiveIsUpperBound) {
  Rng rng(8);
  const auto p_exp = imitlab::testing::random_simplex(rng, 4);
  const auto p_pi = imitlab::testing::random_simplex(rng, 4);
  const double best = dv_dual_value(p_exp, p_pi).value;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> x(4);
    for (double& v : x) v = 2 * rng.normal();
    EXPECT_GE(dv_objective(p_exp, p_pi, x), best - 1e-12);
  }
}
