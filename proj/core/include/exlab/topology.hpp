#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "exlab/field.hpp"

namespace exlab {

enum class Star { ES, LS };
enum class PivotalClass { Plus, Minus, Zero, Unresolved };

std::string_view to_string(Star star);
Star parse_star(std::string_view name);
std::string_view to_string(PivotalClass cls);

/// Dense values on a box of lattice sites, row-major with axis 0 slowest.
/// The outermost layer of sites is the box boundary.
struct GridArray {
  int dimension = 2;
  std::array<int, 3> extent{};
  std::vector<double> values;
  /// Optional per-site flags marking further boundary sites (used when the
  /// counting region is not the whole array). Empty means none.
  std::vector<unsigned char> boundary;

  std::size_t size() const;
};

GridArray extract_box(const FieldSample& sample, const LatticeBox& box);

struct ComponentCount {
  LatticeBox box;
  double level = 0.0;
  long n_excursion = 0;
  /// Present for d = 2 only.
  std::optional<long> n_level;
  /// Excursion components discarded for touching the boundary layer.
  long n_boundary_touching = 0;
};

/// Components of {f >= level} with face adjacency, discarding those that
/// contain a boundary-layer site. Returns (kept, discarded).
std::pair<long, long> count_excursion_array(const GridArray& a, double level);
/// Closed marching-squares contours of {f = level} (d = 2), discarding any
/// contour with a vertex on an edge incident to the boundary layer.
long count_level_array(const GridArray& a, double level);
long count_star_array(const GridArray& a, Star star, double level);

ComponentCount count_excursion_components(const FieldSample& sample, double level, const LatticeBox& box);
long count_level_components(const FieldSample& sample, double level, const LatticeBox& box);
/// Both counts in one pass over the box (the level count only for d = 2).
ComponentCount count_components(const FieldSample& sample, double level, const LatticeBox& box);

/// C^1 piecewise bicubic Hermite interpolant of a 2-D sample, with corner
/// derivatives taken from the fourth-order difference stencils.
class BicubicInterpolant {
 public:
  struct Eval {
    double value;
    Eigen::Vector2d gradient;
    Eigen::Matrix2d hessian;
  };

  explicit BicubicInterpolant(const FieldSample& sample);

  Eval eval(const Eigen::Vector2d& x) const;
  /// Physical extent on which eval is defined, per axis: [lo, hi].
  double domain_lo() const { return lo_; }
  double domain_hi() const { return hi_; }
  bool in_domain(const Eigen::Vector2d& x) const;

  const FieldSample& sample() const { return *sample_; }
  double fx(int i, int j) const { return fx_[flat(i, j)]; }
  double fy(int i, int j) const { return fy_[flat(i, j)]; }

 private:
  std::size_t flat(int i, int j) const { return static_cast<std::size_t>(i) * n_ + j; }

  const FieldSample* sample_;
  int n_;
  double h_;
  double lo_;
  double hi_;
  std::vector<double> fx_, fy_, fxy_;
};

inline constexpr double kDegeneracyThreshold = 1e-8;

struct CriticalPoint {
  std::vector<double> location;
  double value = 0.0;
  double gradient_residual = 0.0;
  Eigen::MatrixXd hessian;
  int morse_index = 0;
  PivotalClass pivotal_es = PivotalClass::Unresolved;
  PivotalClass pivotal_ls = PivotalClass::Unresolved;
  /// Empty means UNSTABLE (or not computed).
  std::optional<double> stabilization_radius;

  bool degenerate() const;
};

/// Critical points of a 2-D sample with value in [level_lo, level_hi] and
/// location inside the box, Newton-refined on the bicubic interpolant.
std::vector<CriticalPoint> find_critical_points(const FieldSample& sample, double level_lo, double level_hi,
                                                const LatticeBox& box);
std::vector<CriticalPoint> find_critical_points(const BicubicInterpolant& interp, double level_lo,
                                                double level_hi, const LatticeBox& box);

/// Critical point sitting on a lattice site, described by the discrete jet.
CriticalPoint critical_point_at_site(const FieldSample& sample, std::span<const int> index);

struct PivotalOptions {
  double delta0 = 0.05;
  /// Bump radius in cells of the classification lattice.
  double bump_cells = 2.0;
  /// The box is resampled from the interpolant at spacing h / resample_factor.
  int resample_factor = 4;
};

/// Recounts N_star on the box at level cp.value after perturbing by -delta*b
/// and +delta*b (b a smooth bump at cp), for delta0, delta0/2, delta0/4.
///
/// The box is resampled from the interpolant on a finer lattice centred on cp
/// and aligned with the Hessian eigenvectors (a saddle's ascending and
/// descending directions then lie along lattice axes, which face adjacency
/// needs to see the local topology). Resampled sites outside the box or
/// within one cell of its faces are boundary sites.
PivotalClass classify_pivotal(const BicubicInterpolant& interp, const CriticalPoint& cp, Star star,
                              const LatticeBox& box, const PivotalOptions& options = {});
PivotalClass classify_pivotal(const FieldSample& sample, const CriticalPoint& cp, Star star,
                              const LatticeBox& box, const PivotalOptions& options = {});

struct Stabilization {
  PivotalClass cls = PivotalClass::Unresolved;
  /// Empty means UNSTABLE.
  std::optional<double> radius;
  std::vector<std::pair<double, PivotalClass>> trace;
};

/// Classifies on nested boxes cp + Lambda_r, r = 4, 8, 16, ... while the box
/// fits in the interpolation domain (and r <= r_max when given). The radius
/// is the smallest tested r from which the class is constant over all larger
/// tested boxes; at least the two largest boxes must agree.
Stabilization stabilization_radius(const BicubicInterpolant& interp, const CriticalPoint& cp, Star star,
                                   std::optional<double> r_max = std::nullopt,
                                   const PivotalOptions& options = {});
Stabilization stabilization_radius(const FieldSample& sample, const CriticalPoint& cp, Star star,
                                   std::optional<double> r_max = std::nullopt,
                                   const PivotalOptions& options = {});

/// Classes compatible with the Morse index of an interior 2-D point.
std::vector<PivotalClass> morse_index_crosscheck(const CriticalPoint& cp, Star star, int dimension = 2);

/// Columns: x, y, value, index, es_class, ls_class, stab_radius.
void write_critical_points_csv(std::ostream& out, const std::vector<CriticalPoint>& points);

}  // namespace exlab
