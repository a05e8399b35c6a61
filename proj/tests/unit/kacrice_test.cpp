#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "exlab/error.hpp"
#include "exlab/kacrice.hpp"
#include "oracles.hpp"

using namespace exlab;
using exlab::testing::covariance_by_differences;

namespace {

Eigen::MatrixXd random_spd(std::mt19937_64& rng, int m) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd g(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) g(i, j) = n(rng);
  return g * g.transpose() + 0.05 * Eigen::MatrixXd::Identity(m, m);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

JetLabel label(std::vector<double> p, FieldTag f, std::vector<int> a) { return {std::move(p), f, std::move(a)}; }

}  // namespace

TEST_CASE("jet covariance examples") {
  const auto bf = KernelSpec::bargmann_fock(2);
  const auto one = jet_covariance(bf, {label({0, 0}, FieldTag::F, {0, 0}), label({0, 0}, FieldTag::F, {0, 0})}, 1.0);
  CHECK(one.matrix.rows() == 2);
  CHECK(one.matrix(0, 0) == doctest::Approx(1.0));

  const auto grad = jet_covariance(bf, {label({0, 0}, FieldTag::F, {1, 0}), label({0, 0}, FieldTag::F, {0, 1})}, 1.0);
  CHECK((grad.matrix - Eigen::Matrix2d::Identity()).norm() < 1e-14);
  // Finite-difference oracle for -d^2 K / dx_1^2 at 0.
  CHECK(grad.matrix(0, 0) == doctest::Approx(covariance_by_differences(bf, {0, 0}, {1, 0}, {0, 0}, {1, 0}, 1e-2)).epsilon(1e-7));

  const std::vector<double> u{0.7, -0.4};
  std::vector<JetLabel> labels{label({0, 0}, FieldTag::F, {0, 0}), label({0, 0}, FieldTag::F, {1, 0}),
                               label(u, FieldTag::FT, {0, 0}), label(u, FieldTag::FT, {0, 1})};
  const auto zero = jet_covariance(bf, labels, 0.0);
  CHECK(zero.matrix.topRightCorner(2, 2).norm() == 0.0);
  CHECK(zero.matrix.bottomLeftCorner(2, 2).norm() == 0.0);

  const auto half = jet_covariance(bf, labels, 0.5);
  const auto full = jet_covariance(bf, labels, 1.0);
  CHECK((half.matrix.topRightCorner(2, 2) - 0.5 * full.matrix.topRightCorner(2, 2)).norm() < 1e-15);
  CHECK((half.matrix.topLeftCorner(2, 2) - full.matrix.topLeftCorner(2, 2)).norm() == 0.0);
  CHECK((full.matrix - full.matrix.transpose()).norm() == 0.0);

  CHECK_THROWS_AS(jet_covariance(bf, {label({0, 0}, FieldTag::F, {3, 0})}, 1.0), InputError);
  CHECK_THROWS_AS(jet_covariance(bf, labels, 1.5), InputError);
}

TEST_CASE("jet covariance entries against finite differences") {
  const std::vector<double> x{0.3, -0.2}, y{-0.5, 0.9};
  for (const auto& k : {KernelSpec::bargmann_fock(2), KernelSpec::cauchy(2, 1.0), KernelSpec::random_plane_wave()}) {
    CAPTURE(k.describe());
    for (const auto& a : testing::multi_indices_upto(2, 2))
      for (const auto& b : testing::multi_indices_upto(2, 2)) {
        const auto jc = jet_covariance(k, {label(x, FieldTag::F, a), label(y, FieldTag::FT, b)}, 0.8);
        const double oracle = 0.8 * covariance_by_differences(k, x, a, y, b, 2e-2);
        CHECK(std::abs(jc.matrix(0, 1) - oracle) <= 1e-5 * std::max(1.0, std::abs(oracle)));
      }
  }
}

TEST_CASE("dc") {
  CHECK(dc(Eigen::Matrix2d::Identity()) == doctest::Approx(1.0));
  Eigen::Matrix2d singular;
  singular << 1, 1, 1, 1;
  CHECK(dc(singular) == 0.0);
  CHECK(std::isinf(log_dc(singular)));

  std::mt19937_64 rng(17);
  for (int n = 0; n < 50; ++n) {
    const Eigen::MatrixXd s3 = random_spd(rng, 3);
    // Oracle: LU determinant.
    CHECK(rel(dc(s3), s3.determinant()) < 1e-12);
    CHECK(rel(dc(4.0 * s3), 64.0 * dc(s3)) < 1e-12);

    const Eigen::MatrixXd s4 = random_spd(rng, 4);
    const std::vector<std::size_t> cond{2, 3};
    const std::vector<double> vals{0.0, 0.0};
    const auto cm = conditional_moments(s4, cond, vals);
    CHECK(rel(dc(s4), dc(s4.bottomRightCorner(2, 2)) * dc(cm.cov)) < 1e-10);
    CHECK(dc(cm.cov) <= dc(s4.topLeftCorner(2, 2)) * (1 + 1e-12));
  }
  const DcAlgebraReport rep = run_dc_algebra_checks(50, 3);
  CHECK(rep.passed(1e-9));
}

TEST_CASE("conditional moments") {
  Eigen::Matrix2d toy;
  const double rho = 0.6;
  toy << 1, rho, rho, 1;
  const std::size_t c[1] = {1};
  const double v[1] = {2.0};
  const auto m = conditional_moments(toy, c, v);
  CHECK(m.free == std::vector<std::size_t>{0});
  CHECK(m.mean(0) == doctest::Approx(rho * 2.0));
  CHECK(m.cov(0, 0) == doctest::Approx(1 - rho * rho));

  Eigen::Matrix3d block = Eigen::Matrix3d::Zero();
  block.topLeftCorner(2, 2) << 2, 0.5, 0.5, 1;
  block(2, 2) = 3;
  const std::size_t c2[1] = {2};
  const double v2[1] = {1.7};
  const auto ind = conditional_moments(block, c2, v2);
  CHECK(ind.mean.norm() == 0.0);
  CHECK((ind.cov - block.topLeftCorner(2, 2)).norm() < 1e-15);

  Eigen::Matrix3d sing = Eigen::Matrix3d::Identity();
  sing(2, 2) = 0.0;
  CHECK_THROWS_AS(conditional_moments(sing, c2, v2), ConditioningError);
}

TEST_CASE("one-point critical intensity") {
  const auto bf = KernelSpec::bargmann_fock(2);
  MonteCarloOptions a{200000, 1, 1}, b{200000, 2, 1};
  for (double level : {0.5, 1.3}) {
    const auto i0 = one_point_critical_intensity(bf, level, 0, a);
    const auto i2 = one_point_critical_intensity(bf, -level, 2, b);
    CHECK(std::abs(i0.value - i2.value) < 3 * std::hypot(i0.std_error, i2.std_error));
  }
  const auto x = one_point_critical_intensity(bf, 0.0, std::nullopt, a);
  const auto y = one_point_critical_intensity(bf, 0.0, std::nullopt, b);
  CHECK(x.value > 0.0);
  CHECK(std::abs(x.value - y.value) < 3 * std::hypot(x.std_error, y.std_error));

  // Index classes partition the total on common draws.
  double parts = 0.0;
  for (int k = 0; k <= 2; ++k) parts += one_point_critical_intensity(bf, 0.7, k, a).value;
  CHECK(parts == doctest::Approx(one_point_critical_intensity(bf, 0.7, std::nullopt, a).value).epsilon(1e-12));

  // Total density of critical points for K = exp(-|x|^2 / 2) in the plane:
  // 2 / (sqrt(3) pi) (Gaussian orthogonal ensemble computation).
  const auto total = integrated_critical_intensity(bf, -6.0, 6.0, 121, std::nullopt, {100000, 5, 1});
  CHECK(std::abs(total.value - 2.0 / (std::sqrt(3.0) * std::numbers::pi)) < 3 * total.std_error);
}

TEST_CASE("two-point critical intensity") {
  const auto bf = KernelSpec::bargmann_fock(2);
  const MonteCarloOptions mc{100000, 9, 1};
  const std::vector<double> u{0.8, 0.3}, mu{-0.8, -0.3};
  const auto one = one_point_critical_intensity(bf, 0.4, std::nullopt, {200000, 4, 1});
  const auto two = two_point_critical_intensity(bf, 0.4, 0.0, u, 1, mc);
  const double product = one.value * one.value;
  CHECK(std::abs(two.value - product) < 3 * std::hypot(two.std_error, 2 * one.value * one.std_error));

  const auto p = two_point_critical_intensity(bf, 0.4, 0.6, u, 1, {100000, 10, 1});
  const auto m = two_point_critical_intensity(bf, 0.4, 0.6, mu, 1, {100000, 11, 1});
  CHECK(std::abs(p.value - m.value) < 3 * std::hypot(p.std_error, m.std_error));

  const std::vector<double> close{0.1, 0.0};
  const auto near = two_point_critical_intensity(bf, 0.0, 0.999, close, 1, mc);
  CHECK(std::isfinite(near.value));
  CHECK(near.value > 0.0);

  const std::vector<double> origin{0.0, 0.0};
  CHECK_THROWS_AS(two_point_critical_intensity(bf, 0.0, 1.0, origin, 1, mc), Error);
}

TEST_CASE("numbound determinant") {
  const auto bf = KernelSpec::bargmann_fock(2);
  // At t = 0 the two jets are independent, each with identity covariance.
  for (double r : {0.05, 0.5, 2.0}) {
    const std::vector<double> u{r, 0.0};
    CHECK(numbound_determinant(bf, 0.0, u) == doctest::Approx(1.0).epsilon(1e-10));
  }
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int n = 0; n < 50; ++n) {
    const std::vector<double> u{0.01 + 1.5 * unif(rng), 0.5 * unif(rng)};
    const double t1 = unif(rng), t2 = unif(rng);
    const double lo = std::min(t1, t2), hi = std::max(t1, t2);
    CHECK(numbound_determinant(bf, hi, u) <= numbound_determinant(bf, lo, u) * (1 + 1e-9));
  }
  double min_ratio = 1e300;
  for (double t = 0.9; t <= 0.999 + 1e-12; t += 0.0099)
    for (double r = 0.01; r <= 1.0 + 1e-12; r += 0.033) {
      const std::vector<double> u{r, 0.0};
      const double s = std::max(std::sqrt(1 - t), r);
      min_ratio = std::min(min_ratio, numbound_determinant(bf, t, u) / (std::pow(s, 4) * (1 - t)));
    }
  CHECK(min_ratio > 0.0);

  const NumboundReport rep = dc_lower_bound_check(bf);
  CHECK(rep.positive());
  CHECK(rep.stable(0.2));
  CHECK(rep.max_increase_in_t <= 1e-9);
}

TEST_CASE("variance upper bound") {
  const auto bf = KernelSpec::bargmann_fock(2);
  std::vector<double> ratio;
  for (double R : {10.0, 20.0, 40.0, 80.0}) ratio.push_back(variance_upper_bound(bf, R) / (R * R));
  for (double r : ratio) CHECK(r == doctest::Approx(ratio.back()).epsilon(0.05));

  // Oracle: midpoint sum of the mollified sup over Lambda_20.
  double acc = 0.0;
  const double c = 0.1;
  for (int i = 0; i < 200; ++i)
    for (int j = 0; j < 200; ++j) {
      const double x[2] = {-10 + (i + 0.5) * c, -10 + (j + 0.5) * c};
      acc += kernel_sup_mollified(bf, x);
    }
  CHECK(variance_upper_bound(bf, 10.0) == doctest::Approx(100.0 * acc * c * c).epsilon(0.01));
  CHECK_THROWS_AS(variance_upper_bound(bf, 0.5), InputError);
}

TEST_CASE("pivotal intensities partition the critical intensity") {
  const auto bf = KernelSpec::bargmann_fock(2);
  GridSpec g;
  g.side_length = 32.0;
  g.spacing = 0.25;
  g.padding = 2.0;
  PivotalSamplingOptions opt;
  opt.seed = 77;
  const auto piv = one_point_pivotal_intensities(bf, g, 1.0, Star::ES, 120, opt);
  const auto total = one_point_critical_intensity(bf, 1.0, std::nullopt, {200000, 6, 1});
  const double sum = piv.plus.value + piv.minus.value + piv.zero.value;
  // The classes are disjoint, so their estimates are negatively correlated and
  // the variance of the sum is at most the sum of the variances.
  const double sum_se = std::sqrt(std::pow(piv.plus.std_error, 2) + std::pow(piv.minus.std_error, 2) +
                                  std::pow(piv.zero.std_error, 2));
  CHECK(std::abs(sum - total.value) < 3 * std::hypot(sum_se, total.std_error));
  CHECK(piv.unstable_fraction() < 0.1);
  CHECK(piv.difference == doctest::Approx(piv.plus.value - piv.minus.value).epsilon(1e-12));
  CHECK(piv.density == doctest::Approx(std::exp(-0.5) / std::pow(2 * std::numbers::pi, 1.5)).epsilon(1e-12));

  GridSpec odd = g;
  odd.side_length = 32.25;
  CHECK_THROWS_AS(one_point_pivotal_intensities(bf, odd, 1.0, Star::ES, 10, opt), InputError);
}
