#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "exlab/error.hpp"
#include "exlab/kernels.hpp"

using namespace exlab;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<KernelSpec> all_families() {
  return {KernelSpec::bargmann_fock(2),  KernelSpec::bargmann_fock(3), KernelSpec::cauchy(2, 1.0),
          KernelSpec::cauchy(3, 0.5),    KernelSpec::random_plane_wave(), KernelSpec::monochromatic(3),
          KernelSpec::monochromatic(2, 1.5)};
}

KernelSpec bf_table() {
  std::vector<double> r, k;
  for (int i = 0; i <= 400; ++i) {
    r.push_back(0.025 * i);
    k.push_back(std::exp(-0.5 * r.back() * r.back()));
  }
  return KernelSpec::table(2, r, k);
}

// d/dx_a of g at x, central differences at h and h/2 combined by Richardson.
double fd(const std::function<double(const std::vector<double>&)>& g, std::vector<double> x, int a, double h) {
  auto central = [&](double s) {
    std::vector<double> p = x, m = x;
    p[a] += s;
    m[a] -= s;
    return (g(p) - g(m)) / (2.0 * s);
  };
  return (4.0 * central(h / 2) - central(h)) / 3.0;
}

std::vector<std::vector<int>> multi_indices(int d, int max_order) {
  std::vector<std::vector<int>> out;
  std::vector<int> a(d, 0);
  std::function<void(int, int)> rec = [&](int axis, int left) {
    if (axis == d) {
      out.push_back(a);
      return;
    }
    for (int k = 0; k <= left; ++k) {
      a[axis] = k;
      rec(axis + 1, left - k);
    }
    a[axis] = 0;
  };
  rec(0, max_order);
  return out;
}

int order(const std::vector<int>& a) {
  int s = 0;
  for (int v : a) s += v;
  return s;
}

std::vector<double> random_point(std::mt19937_64& rng, int d, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<double> x(d);
  for (auto& v : x) v = u(rng);
  return x;
}

}  // namespace

TEST_CASE("closed forms") {
  const double zero[2] = {0.0, 0.0};
  const double x2[2] = {1.0, 1.0};  // |x|^2 = 2
  const double unit[2] = {1.0, 0.0};
  CHECK(eval_kernel(KernelSpec::bargmann_fock(2), zero) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(eval_kernel(KernelSpec::bargmann_fock(2), x2) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(eval_kernel(KernelSpec::random_plane_wave(), zero) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(eval_kernel(KernelSpec::cauchy(2, 1.0), unit) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));

  for (double r : {0.3, 1.7, 4.2, 11.0}) {
    const double x[2] = {r * 0.6, r * 0.8};
    CHECK(eval_kernel(KernelSpec::random_plane_wave(), x) == doctest::Approx(std::cyl_bessel_j(0.0, r)).epsilon(1e-12));
    const double x3[3] = {r * 0.6, 0.0, r * 0.8};
    CHECK(eval_kernel(KernelSpec::monochromatic(3), x3) == doctest::Approx(std::sin(r) / r).epsilon(1e-12));
  }
}

TEST_CASE("unit variance, evenness and domination on a test lattice") {
  for (const auto& k : all_families()) {
    CAPTURE(k.describe());
    const int d = k.dimension();
    std::vector<double> origin(d, 0.0);
    CHECK(eval_kernel(k, origin) == doctest::Approx(1.0).epsilon(1e-14));
    std::mt19937_64 rng(7);
    for (int n = 0; n < 200; ++n) {
      auto x = random_point(rng, d, 8.0);
      auto mx = x;
      for (auto& v : mx) v = -v;
      const double kx = eval_kernel(k, x);
      CHECK(kx == eval_kernel(k, mx));
      CHECK(std::abs(kx) <= 1.0 + 1e-15);
      CHECK(kernel_sup_mollified(k, x) >= std::abs(kx));
    }
  }
}

TEST_CASE("derivative examples") {
  const double zero[2] = {0.0, 0.0};
  const int a20[2] = {2, 0};
  CHECK(eval_kernel_derivative(KernelSpec::bargmann_fock(2), a20, zero) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(eval_kernel_derivative(KernelSpec::random_plane_wave(), a20, zero) == doctest::Approx(-0.5).epsilon(1e-14));
  for (const auto& k : all_families()) {
    std::vector<int> a(k.dimension(), 0);
    a[0] = 1;
    std::vector<double> o(k.dimension(), 0.0);
    CHECK(eval_kernel_derivative(k, a, o) == 0.0);
  }
  // Finite-difference oracle on K itself for the two second-derivative examples.
  for (const auto& k : {KernelSpec::bargmann_fock(2), KernelSpec::random_plane_wave()}) {
    auto g = [&](const std::vector<double>& x) { return eval_kernel(k, x); };
    auto dg = [&](const std::vector<double>& x) { return fd(g, x, 0, 1e-3); };
    const double oracle = fd(dg, {0.0, 0.0}, 0, 1e-3);
    CHECK(eval_kernel_derivative(k, a20, zero) == doctest::Approx(oracle).epsilon(1e-6));
  }
}

TEST_CASE("derivative consistency against finite differences of the next lower order") {
  std::vector<KernelSpec> families = all_families();
  families.push_back(bf_table());
  for (const auto& k : families) {
    CAPTURE(k.describe());
    const int d = k.dimension();
    const int top = std::min(3, k.max_derivative_order());
    std::mt19937_64 rng(11);
    for (int n = 0; n < 20; ++n) {
      auto x = random_point(rng, d, 2.5);
      for (const auto& alpha : multi_indices(d, top)) {
        if (order(alpha) == 0) continue;
        int axis = 0;
        while (alpha[axis] == 0) ++axis;
        auto lower = alpha;
        --lower[axis];
        auto g = [&](const std::vector<double>& p) { return eval_kernel_derivative(k, lower, p); };
        // Spline tables are only C^2, so their steps stay inside one knot interval.
        const double h = k.family() == KernelFamily::TableKernel ? 2e-4 : 1e-3;
        const double oracle = fd(g, x, axis, h);
        const double value = eval_kernel_derivative(k, alpha, x);
        CAPTURE(alpha);
        CHECK(std::abs(value - oracle) <= 1e-5 * std::max(1.0, std::abs(oracle)));
      }
    }
  }
}

TEST_CASE("derivative parity") {
  for (const auto& k : all_families()) {
    const int d = k.dimension();
    std::mt19937_64 rng(3);
    for (int n = 0; n < 10; ++n) {
      auto x = random_point(rng, d, 3.0);
      auto mx = x;
      for (auto& v : mx) v = -v;
      for (const auto& alpha : multi_indices(d, 4)) {
        const double sign = order(alpha) % 2 ? -1.0 : 1.0;
        CHECK(eval_kernel_derivative(k, alpha, x) ==
              doctest::Approx(sign * eval_kernel_derivative(k, alpha, mx)).epsilon(1e-12).scale(1e-12));
      }
    }
  }
}

TEST_CASE("Gram matrices are positive semidefinite") {
  for (const auto& k : all_families()) {
    std::mt19937_64 rng(5);
    for (int set = 0; set < 10; ++set) {
      const int m = 2 + set % 7;
      std::vector<std::vector<double>> pts;
      for (int i = 0; i < m; ++i) pts.push_back(random_point(rng, k.dimension(), 3.0));
      Eigen::MatrixXd g(m, m);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
          std::vector<double> diff(k.dimension());
          for (int a = 0; a < k.dimension(); ++a) diff[a] = pts[i][a] - pts[j][a];
          g(i, j) = eval_kernel(k, diff);
        }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
      CHECK(es.eigenvalues().minCoeff() > -1e-10);
    }
  }
}

TEST_CASE("spectral density") {
  const auto bf = KernelSpec::bargmann_fock(2);
  // Oracle: rho(0) = (2 pi)^-2 int K(x) dx by a lattice sum.
  double acc = 0.0;
  const double h = 0.05;
  for (int i = -200; i <= 200; ++i)
    for (int j = -200; j <= 200; ++j) {
      const double x[2] = {i * h, j * h};
      acc += eval_kernel(bf, x);
    }
  const double zero[2] = {0.0, 0.0};
  CHECK(*spectral_density(bf, zero) == doctest::Approx(acc * h * h / (4 * kPi * kPi)).epsilon(1e-9));
  CHECK(*spectral_density(bf, zero) == doctest::Approx(0.159155).epsilon(1e-5));

  // Total mass: radial quadrature of 2 pi k rho(k).
  auto mass = [&](const KernelSpec& k, double kmax, int n) {
    double s = 0.0;
    const double dk = kmax / n;
    for (int i = 0; i < n; ++i) {
      const double r = (i + 0.5) * dk;
      const double xi[2] = {r, 0.0};
      s += 2 * kPi * r * *spectral_density(k, xi) * dk;
    }
    return s;
  };
  CHECK(mass(bf, 12.0, 20000) == doctest::Approx(1.0).epsilon(1e-6));

  // Cauchy beta = 1 in the plane: rho(k) = e^{-k} / (2 pi k).
  const auto cauchy = KernelSpec::cauchy(2, 1.0);
  for (double r : {0.1, 1.0, 3.0}) {
    const double xi[2] = {0.0, r};
    CHECK(*spectral_density(cauchy, xi) == doctest::Approx(std::exp(-r) / (2 * kPi * r)).epsilon(1e-10));
  }
  CHECK(mass(cauchy, 40.0, 400000) == doctest::Approx(1.0).epsilon(1e-4));

  const double any[2] = {0.3, 0.9};
  CHECK_FALSE(spectral_density(KernelSpec::random_plane_wave(), any).has_value());
}

TEST_CASE("mollified supremum") {
  for (const auto& k : all_families()) {
    std::vector<double> o(k.dimension(), 0.0);
    CHECK(kernel_sup_mollified(k, o) == doctest::Approx(1.0));
  }
  const double x3[2] = {3.0, 0.0};
  CHECK(kernel_sup_mollified(KernelSpec::bargmann_fock(2), x3) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));

  double scan = 0.0;
  for (int i = 0; i <= 200000; ++i) scan = std::max(scan, std::abs(std::cyl_bessel_j(0.0, 19.0 + 2.0 * i / 200000)));
  const double x20[2] = {12.0, 16.0};
  CHECK(kernel_sup_mollified(KernelSpec::random_plane_wave(), x20) == doctest::Approx(scan).epsilon(1e-8));
}

TEST_CASE("table kernels") {
  const auto t = bf_table();
  for (double r : {0.0, 0.4, 1.3, 2.9}) {
    const double x[2] = {r, 0.0};
    CHECK(eval_kernel(t, x) == doctest::Approx(std::exp(-0.5 * r * r)).epsilon(1e-6));
  }
  const auto path = std::filesystem::temp_directory_path() / "exlab_table_kernel.txt";
  {
    std::ofstream out(path);
    out << "# radius K\n";
    for (int i = 0; i <= 100; ++i) out << 0.1 * i << " " << std::exp(-0.5 * 0.01 * i * i) << "\n";
  }
  const auto f = KernelSpec::table_from_file(2, path);
  const double x[2] = {0.5, 0.5};
  CHECK(eval_kernel(f, x) == doctest::Approx(std::exp(-0.25)).epsilon(1e-5));
  std::filesystem::remove(path);

  const int a3[2] = {3, 0};
  CHECK_THROWS_AS(eval_kernel_derivative(t, a3, x), UnsupportedError);
  CHECK_THROWS_AS(KernelSpec::table(2, {0.0, 1.0, 0.5, 2.0}, {1.0, 0.5, 0.4, 0.1}), InputError);
  CHECK_THROWS_AS(KernelSpec::table(2, {0.1, 1.0, 1.5, 2.0}, {1.0, 0.5, 0.4, 0.1}), InputError);
}

TEST_CASE("errors") {
  const double nan[2] = {std::numeric_limits<double>::quiet_NaN(), 0.0};
  CHECK_THROWS_AS(eval_kernel(KernelSpec::bargmann_fock(2), nan), InputError);
  const int a5[2] = {5, 0};
  const double x[2] = {0.1, 0.2};
  CHECK_THROWS_AS(eval_kernel_derivative(KernelSpec::bargmann_fock(2), a5, x), UnsupportedError);
  CHECK_THROWS_AS(KernelSpec::cauchy(2, 2.0), InputError);
  CHECK_THROWS_AS(KernelSpec::cauchy(2, 0.0), InputError);
  CHECK(parse_kernel_family(to_string(KernelFamily::Cauchy)) == KernelFamily::Cauchy);
}

TEST_CASE("bessel ratio") {
  CHECK(bessel_ratio(0.0, 0.0) == doctest::Approx(1.0));
  CHECK(bessel_ratio(0.5, 0.0) == doctest::Approx(std::sqrt(2.0 / kPi)));
  CHECK(bessel_ratio(1.0, 2.0) == doctest::Approx(std::cyl_bessel_j(1.0, 2.0) / 2.0).epsilon(1e-13));
}
