#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "exlab/error.hpp"
#include "exlab/field.hpp"
#include "exlab/topology.hpp"
#include "fixtures.hpp"

using namespace exlab;
using namespace exlab::testing;

namespace {

CriticalPoint only_point(const FieldSample& s, double lo, double hi, const LatticeBox& box) {
  auto cps = find_critical_points(s, lo, hi, box);
  REQUIRE(cps.size() == 1);
  return cps.front();
}

bool contains(const std::vector<PivotalClass>& set, PivotalClass c) {
  return std::find(set.begin(), set.end(), c) != set.end();
}

FieldSample negated(const FieldSample& s) {
  FieldSample m = s;
  for (double& v : m.values) v = -v;
  return m;
}

}  // namespace

TEST_CASE("excursion counting examples") {
  const GridSpec g = planar_grid(10.0, 0.25, 6.0);
  const LatticeBox box = central_box(g);

  const FieldSample flat = synthetic(g, [](double, double) { return -1.0; });
  CHECK(count_excursion_components(flat, 0.0, box).n_excursion == 0);

  const FieldSample bump = synthetic(g, [](double x, double y) { return gauss_bump(x, y); });
  auto c = count_excursion_components(bump, 0.5, box);
  CHECK(c.n_excursion == 1);
  CHECK(c.n_excursion == oracle_excursions(raster(bump, box), 0.5));

  const FieldSample edge = synthetic(g, [](double x, double y) { return gauss_bump(x, y, 5.0, 0.0); });
  c = count_excursion_components(edge, 0.5, box);
  CHECK(c.n_excursion == 0);
  CHECK(c.n_boundary_touching == 1);
  CHECK(oracle_excursions(raster(edge, box), 0.5) == 0);

  const FieldSample two =
      synthetic(g, [](double x, double y) { return gauss_bump(x, y, -2.0, 1.0) + gauss_bump(x, y, 2.0, -1.0); });
  CHECK(count_excursion_components(two, 0.5, box).n_excursion == 2);
  CHECK(oracle_excursions(raster(two, box), 0.5) == 2);

  // Level below the interior minimum with a connected set touching the boundary.
  CHECK(count_excursion_components(bump, -0.5, box).n_excursion == 0);

  LatticeBox outside = box;
  outside.hi[0] += 1000;
  CHECK_THROWS_AS(count_excursion_components(bump, 0.5, outside), RangeError);
}

TEST_CASE("level counting examples") {
  const GridSpec g = planar_grid(16.0, 0.25, 4.0);
  const LatticeBox box = central_box(g);

  const FieldSample bump = synthetic(g, [](double x, double y) { return gauss_bump(x, y); });
  CHECK(count_level_components(bump, 0.5, box) == 1);
  CHECK(count_level_components(synthetic(g, [](double, double) { return 0.25; }), 0.0, box) == 0);

  const FieldSample annulus = synthetic(g, [](double x, double y) {
    const double r = std::hypot(x, y);
    return std::exp(-(r - 3.0) * (r - 3.0));
  });
  CHECK(count_level_components(annulus, 0.5, box) == 2);
  CHECK(count_excursion_components(annulus, 0.5, box).n_excursion == 1);
  CHECK_FALSE(has_saddle_cell(raster(annulus, box), 0.5));
  CHECK(oracle_contours(raster(annulus, box), 0.5) == 2);

  // A level sitting exactly on lattice values is moved just above them.
  const FieldSample steps = synthetic(g, [](double x, double y) { return std::hypot(x, y) < 2.0 ? 1.0 : 0.0; });
  CHECK(count_level_components(steps, 0.0, box) == 1);
  CHECK(count_level_components(steps, 1.0, box) == 0);

  GridSpec g3;
  g3.dimension = 3;
  g3.side_length = 4.0;
  g3.spacing = 0.5;
  g3.padding = 0.0;
  const FieldSample s3(g3, KernelSpec::bargmann_fock(3), 0, std::vector<double>(g3.total_points(), 0.0));
  CHECK_THROWS_AS(count_level_components(s3, 0.5, central_box(g3)), UnsupportedError);
  CHECK(count_excursion_components(s3, 0.5, central_box(g3)).n_excursion == 0);
}

TEST_CASE("three-dimensional excursion counting") {
  GridSpec g3;
  g3.dimension = 3;
  g3.side_length = 8.0;
  g3.spacing = 0.25;
  g3.padding = 0.0;
  const int n = g3.points_per_axis();
  std::vector<double> v(g3.total_points());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const double x = g3.coordinate(i), y = g3.coordinate(j), z = g3.coordinate(k);
        v[(static_cast<std::size_t>(i) * n + j) * n + k] =
            std::exp(-((x - 2) * (x - 2) + y * y + z * z)) + std::exp(-((x + 2) * (x + 2) + y * y + z * z));
      }
  const FieldSample s(g3, KernelSpec::bargmann_fock(3), 0, v);
  CHECK(count_excursion_components(s, 0.5, central_box(g3)).n_excursion == 2);
  // Below the saddle value 2e^-4 and above the face value e^-4 the bumps merge.
  CHECK(count_excursion_components(s, 0.03, central_box(g3)).n_excursion == 1);
}

TEST_CASE("duality and negation on boundary-free fixtures") {
  const GridSpec g = planar_grid(20.0, 0.25, 4.0);
  const LatticeBox box = central_box(g);
  const std::vector<FieldSample> fixtures{
      synthetic(g, [](double x, double y) { return gauss_bump(x, y); }),
      synthetic(g, [](double x, double y) { return gauss_bump(x, y, -3, 2) + gauss_bump(x, y, 3, -1, 2.0); }),
      synthetic(g, ring),
      synthetic(g, [](double x, double y) { return ring(x, y) - 0.8 * gauss_bump(x, y, 0, 3, 0.5); }),
      synthetic(g, [](double x, double y) { return ring(x - 1, y) + ring(x + 4, y + 4) * 0.9; }),
  };
  for (std::size_t k = 0; k < fixtures.size(); ++k) {
    for (double level : {0.2, 0.45, 0.7}) {
      CAPTURE(k);
      CAPTURE(level);
      const Raster r = raster(fixtures[k], box);
      if (has_saddle_cell(r, level)) continue;
      const auto c = count_components(fixtures[k], level, box);
      CHECK(c.n_excursion == oracle_excursions(r, level));
      CHECK(*c.n_level == oracle_contours(r, level));
      CHECK(count_level_components(negated(fixtures[k]), -level, box) == *c.n_level);
    }
  }
}

TEST_CASE("stability under tiny global perturbations") {
  const GridSpec g = planar_grid(20.0, 0.25, 8.0);
  const FieldSample s = sample_field(KernelSpec::bargmann_fock(2), g, 2024);
  const LatticeBox box = central_box(g);
  const auto cps = find_critical_points(s, -10.0, 10.0, box);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e-6, 1e-6);
  int tested = 0;
  for (double level : {-0.8, -0.3, 0.1, 0.6, 1.1}) {
    const bool clear = std::none_of(cps.begin(), cps.end(),
                                    [&](const CriticalPoint& cp) { return std::abs(cp.value - level) < 1e-3; });
    if (!clear) continue;
    // No lattice value so close to the level that a 1e-6 change can flip it.
    const bool margin = std::none_of(s.values.begin(), s.values.end(),
                                     [&](double v) { return std::abs(v - level) < 2e-6; });
    if (!margin) continue;
    FieldSample p = s;
    for (double& v : p.values) v += u(rng);
    const auto a = count_components(s, level, box), b = count_components(p, level, box);
    CHECK(a.n_excursion == b.n_excursion);
    CHECK(*a.n_level == *b.n_level);
    ++tested;
  }
  CHECK(tested >= 3);
}

TEST_CASE("critical points of quadratics") {
  const GridSpec g = planar_grid(8.0, 0.25, 2.0);
  const LatticeBox box = central_box(g);

  const CriticalPoint m = only_point(synthetic(g, [](double x, double y) { return x * x + y * y; }), -0.1, 0.1, box);
  CHECK(std::hypot(m.location[0], m.location[1]) < 1e-9);
  CHECK(m.morse_index == 0);
  CHECK(m.gradient_residual < 1e-6);
  CHECK(m.hessian(0, 0) == doctest::Approx(2.0));

  const CriticalPoint s = only_point(synthetic(g, [](double x, double y) { return x * x - y * y; }), -0.1, 0.1, box);
  CHECK(std::hypot(s.location[0], s.location[1]) < 1e-9);
  CHECK(s.morse_index == 1);

  // Off-lattice maximum.
  const CriticalPoint x = only_point(synthetic(g, [](double x, double y) {
                                       return 1.0 - (x - 0.37) * (x - 0.37) - 2.0 * (y + 0.61) * (y + 0.61);
                                     }),
                                     0.9, 1.1, box);
  CHECK(x.location[0] == doctest::Approx(0.37).epsilon(1e-9));
  CHECK(x.location[1] == doctest::Approx(-0.61).epsilon(1e-9));
  CHECK(x.morse_index == 2);
  CHECK(x.value == doctest::Approx(1.0));

  CHECK(find_critical_points(synthetic(g, [](double x, double y) { return x * x + y * y; }), 0.5, 1.0, box).empty());
  CHECK_THROWS_AS(find_critical_points(synthetic(g, [](double, double) { return 0.0; }), 1.0, 0.0, box), InputError);
}

TEST_CASE("critical points of a random sample") {
  const GridSpec g = planar_grid(20.0, 0.25, 8.0);
  const FieldSample s = sample_field(KernelSpec::bargmann_fock(2), g, 99);
  const auto cps = find_critical_points(s, -10.0, 10.0, central_box(g));
  REQUIRE(cps.size() > 50);
  for (const auto& cp : cps) {
    CHECK(cp.gradient_residual < 1e-6);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e(cp.hessian);
    int neg = 0;
    for (int k = 0; k < 2; ++k) neg += e.eigenvalues()(k) < 0;
    CHECK(neg == cp.morse_index);
  }
  // Distinct points are at least h/2 apart.
  for (std::size_t a = 0; a < cps.size(); ++a)
    for (std::size_t b = a + 1; b < cps.size(); ++b)
      CHECK(std::hypot(cps[a].location[0] - cps[b].location[0], cps[a].location[1] - cps[b].location[1]) >= 0.125);

  // Critical point on a lattice site from the discrete jet.
  const int site[2] = {g.nearest_index(0.0), g.nearest_index(0.0)};
  const CriticalPoint q = critical_point_at_site(synthetic(g, [](double x, double y) { return x * x - 3 * y * y; }), site);
  CHECK(q.morse_index == 1);
  CHECK(q.gradient_residual < 1e-12);
}

TEST_CASE("pivotal classification fixtures") {
  const GridSpec g = planar_grid(16.0, 0.25, 6.0);
  const LatticeBox box = central_box(g);

  SUBCASE("isolated maximum") {
    const FieldSample s = synthetic(g, [](double x, double y) { return 1.01 * gauss_bump(x, y); });
    const CriticalPoint cp = only_point(s, 0.9, 1.1, box);
    CHECK(classify_pivotal(s, cp, Star::ES, box) == PivotalClass::Plus);
    CHECK(classify_pivotal(s, cp, Star::LS, box) == PivotalClass::Plus);
    const Stabilization st = stabilization_radius(s, cp, Star::ES);
    CHECK(st.cls == PivotalClass::Plus);
    REQUIRE(st.radius.has_value());
    CHECK(*st.radius == 4.0);
  }

  SUBCASE("saddle joining two lobes, in several orientations") {
    for (double angle : {0.0, 0.3, 0.7853981633974483, 1.2}) {
      CAPTURE(angle);
      const FieldSample s = synthetic(g, two_lobes(angle));
      const double v = 2.0 * std::exp(-4.0);
      const CriticalPoint cp = only_point(s, v - 1e-3, v + 1e-3, box);
      CHECK(cp.morse_index == 1);
      CHECK(classify_pivotal(s, cp, Star::ES, box) == PivotalClass::Minus);
      CHECK(classify_pivotal(s, cp, Star::LS, box) == PivotalClass::Minus);
    }
  }

  SUBCASE("local minimum inside a filled component") {
    auto f = [](double x, double y) {
      const double q = x * x + y * y - 9.0;
      return std::exp(-q * q / 20.0);
    };
    const FieldSample s = synthetic(g, f);
    const double v = f(0.0, 0.0);
    const CriticalPoint cp = only_point(s, v - 1e-4, v + 1e-4, box);
    CHECK(cp.morse_index == 0);
    CHECK(classify_pivotal(s, cp, Star::ES, box) == PivotalClass::Zero);
    CHECK(classify_pivotal(s, cp, Star::LS, box) == PivotalClass::Minus);
  }

  SUBCASE("saddle closing a loop") {
    // A horseshoe whose ends meet through a saddle at the origin.
    auto f = [](double x, double y) {
      const double r = std::hypot(x, y - 3.0);
      const double ring_part = std::exp(-2.0 * (r - 3.0) * (r - 3.0));
      return ring_part * (1.0 - 0.6 * std::exp(-(x * x + y * y)));
    };
    const FieldSample s = synthetic(g, f);
    const double v = f(0.0, 0.0);
    const CriticalPoint cp = only_point(s, v - 1e-3, v + 1e-3, box);
    CHECK(cp.morse_index == 1);
    CHECK(classify_pivotal(s, cp, Star::ES, box) == PivotalClass::Zero);
    CHECK(classify_pivotal(s, cp, Star::LS, box) == PivotalClass::Plus);
  }
}

TEST_CASE("pivotal classes agree with the Morse index on random samples") {
  const GridSpec g = planar_grid(24.0, 0.25, 8.0);
  long resolved = 0, mismatched = 0, unstable = 0, total = 0;
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const FieldSample s = sample_field(KernelSpec::bargmann_fock(2), g, seed);
    const BicubicInterpolant interp(s);
    LatticeBox inner = central_box(g);
    for (int a = 0; a < 2; ++a) {
      inner.lo[a] += 24;  // keep 6 correlation lengths to the box faces
      inner.hi[a] -= 24;
    }
    for (const auto& cp : find_critical_points(interp, -10.0, 10.0, inner)) {
      if (cp.degenerate()) continue;
      for (Star star : {Star::ES, Star::LS}) {
        ++total;
        const Stabilization st = stabilization_radius(interp, cp, star, 16.0);
        if (!st.radius) {
          ++unstable;
          continue;
        }
        ++resolved;
        if (!contains(morse_index_crosscheck(cp, star), st.cls)) ++mismatched;
      }
    }
  }
  MESSAGE("resolved " << resolved << " of " << total << ", unstable " << unstable << ", mismatched " << mismatched);
  REQUIRE(resolved > 200);
  CHECK(static_cast<double>(unstable) / total < 0.10);
  CHECK(mismatched == 0);
}

TEST_CASE("Morse crosscheck sets") {
  CriticalPoint cp;
  cp.morse_index = 0;
  CHECK(morse_index_crosscheck(cp, Star::LS) == std::vector<PivotalClass>{PivotalClass::Minus});
  CHECK_FALSE(contains(morse_index_crosscheck(cp, Star::LS), PivotalClass::Zero));
  cp.morse_index = 1;
  CHECK(contains(morse_index_crosscheck(cp, Star::ES), PivotalClass::Zero));
  cp.morse_index = 2;
  CHECK(morse_index_crosscheck(cp, Star::ES) == std::vector<PivotalClass>{PivotalClass::Plus});
  CHECK_THROWS_AS(morse_index_crosscheck(cp, Star::ES, 3), UnsupportedError);
}

TEST_CASE("critical point csv") {
  CriticalPoint cp;
  cp.location = {0.5, -1.25};
  cp.value = 0.75;
  cp.morse_index = 2;
  cp.pivotal_es = PivotalClass::Plus;
  cp.pivotal_ls = PivotalClass::Plus;
  cp.stabilization_radius = 4.0;
  std::ostringstream out;
  write_critical_points_csv(out, {cp});
  const std::string text = out.str();
  CHECK(text.rfind("x,y,value,index,es_class,ls_class,stab_radius\n", 0) == 0);
  CHECK(text.find("plus,plus,4") != std::string::npos);
  CHECK(parse_star("LS") == Star::LS);
  CHECK_THROWS_AS(parse_star("XS"), InputError);
}
