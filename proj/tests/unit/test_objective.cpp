#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "dbcsem/errors.hpp"
#include "dbcsem/nn_core.hpp"
#include "dbcsem/objective.hpp"
#include "../support/oracles.hpp"
#include "../support/toy.hpp"

using namespace dbcsem;

TEST(Mse, Examples) {
  auto zeros = torch::zeros({2, 3, 4, 4});
  EXPECT_EQ(mse(zeros, zeros).item<double>(), 0.0);
  EXPECT_NEAR(mse(zeros, torch::ones_like(zeros)).item<double>(), 1.0, 1e-12);
  EXPECT_NEAR(mse(zeros.to(torch::kDouble), torch::full({2, 3, 4, 4}, 0.1, torch::kDouble)).item<double>(), 0.01,
              1e-15);
  EXPECT_THROW(mse(zeros, torch::zeros({2, 3, 4, 5})), ConfigError);
}

TEST(Psnr, Examples) {
  EXPECT_NEAR(psnr(0.01), 20.0, 1e-12);
  EXPECT_NEAR(psnr(1.0), 0.0, 1e-12);
  EXPECT_NEAR(psnr(0.001), 30.0, 1e-12);
  EXPECT_EQ(psnr(0.0), std::numeric_limits<double>::infinity());
  EXPECT_THROW(psnr(-1.0), ConfigError);
}

TEST(Psnr, InverseOverDbGrid) {
  for (double p = -10.0; p <= 60.0; p += 0.25) {
    const double m = std::pow(10.0, -p / 10.0);
    EXPECT_NEAR(psnr(m), p, 1e-9);
  }
}

TEST(L3, Examples) {
  EXPECT_NEAR(l3(0.01, 0.01), -8.0, 1e-12);
  EXPECT_NEAR(l3(0.1, 1.0), -1.0, 1e-12);
}

TEST(L3, EqualsNegatedPsnrSquaresOnRandomPairs) {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> exponent(-6.0, 0.0);
  for (int i = 0; i < 100; ++i) {
    const double a = std::pow(10.0, exponent(gen)), b = std::pow(10.0, exponent(gen));
    const double expected = -(psnr(a) * psnr(a) + psnr(b) * psnr(b)) / 100.0;
    EXPECT_NEAR(l3(a, b), expected, 1e-12 * std::abs(expected));
    const double tensor_value = l3(torch::tensor(a, torch::kDouble), torch::tensor(b, torch::kDouble)).item<double>();
    EXPECT_NEAR(tensor_value, expected, 1e-12 * std::abs(expected));
  }
}

TEST(L3, FloorAppliedAndFlagged) {
  EXPECT_TRUE(mse_floored(0.0));
  EXPECT_TRUE(mse_floored(-1.0));
  EXPECT_FALSE(mse_floored(1e-3));
  EXPECT_TRUE(std::isfinite(l3(0.0, 0.5)));
  EXPECT_DOUBLE_EQ(l3(0.0, 0.5), l3(kMseFloor, 0.5));
}

TEST(L3, StrictlyDecreasesWithEitherMse) {
  double larger = 0.99;
  for (double m = 0.9; m > 1e-5; m *= 0.7) {
    EXPECT_LT(l3(m, 0.5), l3(larger, 0.5));
    EXPECT_LT(l3(0.5, m), l3(0.5, larger));
    larger = m;
  }
}

TEST(GradientWeights, MatchesFormulaValue) {
  const auto [w1, w2] = l3_gradient_weights(0.01, 0.01);
  EXPECT_NEAR(w1, 173.7177, 1e-4);
  EXPECT_DOUBLE_EQ(w1, w2);
  const auto [u1, u2] = l3_gradient_weights(1.0, 0.3);
  EXPECT_EQ(u1, 0.0);
  EXPECT_NE(u2, 0.0);
}

TEST(GradientWeights, MatchCentralDifferences) {
  for (double l : {0.3, 0.1, 0.01, 0.001}) {
    const double other = 0.05;
    const auto [w1, w2] = l3_gradient_weights(l, other);
    const double h = l * 1e-5;
    const double fd1 = oracle::central_difference([&](double x) { return l3(x, other); }, l, h);
    const double fd2 = oracle::central_difference([&](double x) { return l3(other, x); }, l, h);
    EXPECT_LE(std::abs(w1 - fd1) / std::abs(fd1), 1e-3) << "L = " << l;
    const auto [v1, v2] = l3_gradient_weights(other, l);
    EXPECT_LE(std::abs(v2 - fd2) / std::abs(fd2), 1e-3) << "L = " << l;
    (void)w2;
    (void)v1;
  }
}

TEST(CombinedLoss, Examples) {
  EXPECT_EQ(combined_baseline_loss(0.2, 0.7, 1.0), 0.2);
  EXPECT_EQ(combined_baseline_loss(0.2, 0.7, 0.0), 0.7);
  EXPECT_NEAR(combined_baseline_loss(0.4, 0.4, 0.3), 0.4, 1e-15);
  EXPECT_THROW(combined_baseline_loss(0.1, 0.1, 1.5), ConfigError);
  auto t = combined_baseline_loss(torch::tensor(0.2), torch::tensor(0.6), 0.3);
  EXPECT_NEAR(t.item<double>(), 0.3 * 0.2 + 0.7 * 0.6, 1e-7);
}

TEST(LossReport, FromMse) {
  const auto r = LossReport::from_mse(0.01, 0.001);
  EXPECT_NEAR(r.psnr1, 20.0, 1e-12);
  EXPECT_NEAR(r.psnr2, 30.0, 1e-12);
  EXPECT_NEAR(r.l3, -(4.0 + 9.0), 1e-12);
  EXPECT_EQ(r.loss, r.l3);
  EXPECT_GT(r.w1, 0);
  EXPECT_GT(r.w2, r.w1);
}

TEST(GradientIdentity, ToyModelUnderThousandParameters) {
  auto m = toy::model(3);
  ASSERT_LE(nn::count_parameters(*m).total, 1000);
  const auto [s1, s2] = toy::sources(4);
  auto params = m->parameters();

  auto losses = toy::forward(*m, s1, s2);
  auto g1 = torch::autograd::grad({losses.l1}, params, {}, true, false, true);
  auto g2 = torch::autograd::grad({losses.l2}, params, {}, true, false, true);
  auto g3 = torch::autograd::grad({l3(losses.l1, losses.l2)}, params, {}, false, false, true);
  const auto [w1, w2] = l3_gradient_weights(losses.l1.item<double>(), losses.l2.item<double>());

  std::vector<double> autodiff, combined;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto zero = torch::zeros_like(params[k]);
    auto a = g1[k].defined() ? g1[k] : zero;
    auto b = g2[k].defined() ? g2[k] : zero;
    auto c = g3[k].defined() ? g3[k] : zero;
    const auto cv = oracle::to_vector(c);
    const auto wv = oracle::to_vector(w1 * a + w2 * b);
    autodiff.insert(autodiff.end(), cv.begin(), cv.end());
    combined.insert(combined.end(), wv.begin(), wv.end());
  }
  EXPECT_LE(oracle::relative_error(autodiff, combined), 1e-5);
}

TEST(GradientIdentity, ToyModelMatchesFiniteDifferences) {
  auto m = toy::model(5);
  const auto [s1, s2] = toy::sources(6);
  auto check = oracle::gradient_check(
      [&] {
        auto losses = toy::forward(*m, s1, s2);
        return l3(losses.l1, losses.l2);
      },
      m->parameters());
  EXPECT_LE(check.relative, 1e-3);
}
