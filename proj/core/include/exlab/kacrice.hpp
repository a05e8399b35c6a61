#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "exlab/field.hpp"
#include "exlab/kernels.hpp"
#include "exlab/topology.hpp"

namespace exlab {

enum class FieldTag { F, FT };

/// One coordinate of a Gaussian jet vector: d^alpha of f (or of f^t) at a point.
struct JetLabel {
  std::vector<double> point;
  FieldTag field = FieldTag::F;
  std::vector<int> alpha;
};

struct JetCovariance {
  std::vector<JetLabel> labels;
  Eigen::MatrixXd matrix;
  double t = 1.0;
};

/// Cov(d^a f(x), d^b f(y)) = (-1)^|a| d^(a+b) K(y - x), times t across the
/// two field tags. Throws AssemblyError if the result is not PSD.
JetCovariance jet_covariance(const KernelSpec& kernel, std::vector<JetLabel> labels, double t);

/// Determinant of a covariance matrix, via pivoted LDL^T in log space.
/// Returns 0 when a pivot falls below 1e-14 * trace.
double dc(const Eigen::MatrixXd& cov);
/// log of dc; -infinity when dc would return 0.
double log_dc(const Eigen::MatrixXd& cov);

struct ConditionalMoments {
  /// Indices (into the joint) of the free coordinates, in order.
  std::vector<std::size_t> free;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  /// Regression matrix Sigma_XY Sigma_Y^{-1}: mean = regression * values.
  Eigen::MatrixXd regression;
};

ConditionalMoments conditional_moments(const Eigen::MatrixXd& joint, std::span<const std::size_t> condition,
                                       std::span<const double> values);
ConditionalMoments conditional_moments(const JetCovariance& joint, std::span<const std::size_t> condition,
                                       std::span<const double> values);

/// Log of the centred Gaussian density with covariance `cov` at `v`.
double gaussian_log_density(const Eigen::MatrixXd& cov, const Eigen::VectorXd& v);

struct IntensityEstimate {
  double value = 0.0;
  double std_error = 0.0;
  long n_samples = 0;
  double level = 0.0;
};

struct MonteCarloOptions {
  long n_samples = 100000;
  std::uint64_t seed = 0x5eed;
  int workers = 1;
};

/// phi(l, 0) E[|det Hess f(0)| 1{index}] under f(0) = l, grad f(0) = 0.
/// Without an index restriction all critical points count.
IntensityEstimate one_point_critical_intensity(const KernelSpec& kernel, double level,
                                               std::optional<int> morse_index = std::nullopt,
                                               const MonteCarloOptions& options = {});

/// The one-point intensity integrated over levels in [lo, hi] (trapezoid
/// rule, common random numbers across levels): critical points per unit
/// volume with value in [lo, hi].
IntensityEstimate integrated_critical_intensity(const KernelSpec& kernel, double lo, double hi, int n_levels,
                                                std::optional<int> morse_index = std::nullopt,
                                                const MonteCarloOptions& options = {});

/// I_t^(k)(0, u) = phi_t E[|det Hess f(0) det Hess f^t(u)|^k]^(1/k) under
/// f(0) = f^t(u) = l and both gradients zero.
IntensityEstimate two_point_critical_intensity(const KernelSpec& kernel, double level, double t,
                                               std::span<const double> u, int k = 1,
                                               const MonteCarloOptions& options = {});

/// F(t, u) = dc(f(0), f^t(u), grad f(0), grad f^t(u)).
double numbound_determinant(const KernelSpec& kernel, double t, std::span<const double> u);

struct NumboundReport {
  /// min over the grid with |u| <= 1 of F / (max{(1-t)^(1/2), |u|}^(2d) (1-t))
  double min_ratio_coarse = 0.0;
  double min_ratio_fine = 0.0;
  /// min of F over the grid with |u| >= 1
  double min_far_coarse = 0.0;
  double min_far_fine = 0.0;
  /// Largest violation of monotonicity in t at fixed u (<= 0 when monotone).
  double max_increase_in_t = 0.0;

  bool positive() const;
  /// Relative change between coarse and refined grids within `tol`.
  bool stable(double tol = 0.2) const;
};

struct NumboundGrid {
  int n_t = 24;        // 1 - t log-spaced in [s_min, 1], plus t = 0
  int n_u = 24;        // |u| log-spaced in [u_min, 1]
  int n_far = 12;      // |u| in [1, u_far]
  double s_min = 1e-3;
  double u_min = 1e-2;
  double u_far = 6.0;
};

NumboundReport dc_lower_bound_check(const KernelSpec& kernel, const NumboundGrid& grid = {});

struct IntegrabilityReport {
  std::vector<double> epsilons;
  /// int_0^{1-eps} int_{|u|<=1} I_t(0,u) du dt for each epsilon.
  std::vector<double> integrals;
  std::vector<double> std_errors;
  double offdiag_sup_coarse = 0.0;
  double offdiag_sup_fine = 0.0;

  /// |I(eps_last) - I(eps_prev)| / I(eps_prev)
  double last_relative_change() const;
  double offdiag_relative_change() const;
};

struct IntegrabilityOptions {
  std::vector<double> epsilons{1e-1, 1e-2, 1e-3};
  int t_nodes_per_decade = 8;
  int u_nodes = 16;
  int far_t = 12;
  int far_u = 12;
  double far_u_max = 6.0;
  MonteCarloOptions mc{20000, 0x5eed, 1};
};

IntegrabilityReport integrability_scan(const KernelSpec& kernel, double level,
                                       const IntegrabilityOptions& options = {});

struct PivotalIntensities {
  double level = 0.0;
  Star star = Star::ES;
  IntensityEstimate plus, minus, zero;
  /// Plus - Minus with a paired standard error.
  double difference = 0.0;
  double difference_se = 0.0;
  long n_total = 0;
  long n_unstable = 0;
  double density = 0.0;  // phi(l, 0)

  double unstable_fraction() const { return n_total ? static_cast<double>(n_unstable) / n_total : 0.0; }
};

struct PivotalSamplingOptions {
  std::uint64_t seed = 0x5eed;
  int workers = 1;
  std::optional<double> r_max;
  PivotalOptions classify;
  /// Reliability gate on the UNSTABLE fraction.
  double max_unstable_fraction = 0.2;
};

/// Conditional fields with f(0) = l, grad f(0) = 0 at the central lattice
/// site; the critical point there is classified on nested boxes and
/// weighted by |det Hess|. UNSTABLE samples are excluded from the averages.
PivotalIntensities one_point_pivotal_intensities(const KernelSpec& kernel, const GridSpec& grid, double level,
                                                 Star star, long n_samples,
                                                 const PivotalSamplingOptions& options = {});
IntensityEstimate one_point_pivotal_intensity(const KernelSpec& kernel, const GridSpec& grid, double level,
                                              Star star, PivotalClass sign, long n_samples,
                                              const PivotalSamplingOptions& options = {});

/// R^d * int over Lambda_{2R} of the mollified kernel sup (midpoint rule,
/// cells halved from 0.5 until the integral changes by less than 1%).
double variance_upper_bound(const KernelSpec& kernel, double R);

/// Random-instance checks of the DC algebra: scaling, Schur identity and
/// monotonicity under interpolation.
struct DcAlgebraReport {
  int instances = 0;
  double max_scaling_error = 0.0;
  double max_schur_error = 0.0;
  double max_monotone_violation = 0.0;  // relative; <= 0 when all hold
  int conditioning_monotone_failures = 0;

  bool passed(double tol = 1e-9) const;
};

DcAlgebraReport run_dc_algebra_checks(int instances, std::uint64_t seed);

}  // namespace exlab
