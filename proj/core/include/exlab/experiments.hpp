#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "exlab/field.hpp"
#include "exlab/kernels.hpp"
#include "exlab/topology.hpp"

namespace exlab {

struct ExperimentConfig {
  KernelSpec kernel = KernelSpec::bargmann_fock(2);
  double level = 0.0;
  Star star = Star::ES;
  std::vector<double> sizes{20.0, 40.0, 80.0, 160.0};
  int replications = 100;
  std::vector<double> t_grid{0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0};
  std::uint64_t master_seed = 1;
  double spacing = 0.25;
  double padding = 8.0;
  /// 0 means all hardware threads.
  int workers = 0;
  /// Plane waves per random-plane-wave sample.
  int n_waves = kDefaultPlaneWaves;

  void validate() const;
  GridSpec grid(double side_length) const;
};

struct VarianceRow {
  double R = 0.0;
  double mean_N = 0.0;
  double var_N = 0.0;
  double se_var = 0.0;
  /// Per-replication counts, kept for resampling.
  std::vector<long> counts;
};

using VarianceTable = std::vector<VarianceRow>;

/// M independent samples per R; N_star(Lambda_R) of each.
VarianceTable run_variance_scan(const ExperimentConfig& config);

struct ScalingFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::pair<double, double> slope_ci_95{0.0, 0.0};
  double r_squared = 0.0;
};

/// Least squares of log var_N on log R; the slope CI resamples replications
/// within each size (when counts are present).
ScalingFit fit_scaling(const VarianceTable& table, int resamples = 1000, std::uint64_t seed = 0xb007);

struct InterpolationRow {
  double t = 0.0;
  double cov_hat = 0.0;
  double se = 0.0;
};

/// cov_hat(t) = sample covariance of N(f) and N(f^t) at R = sizes[0], with
/// every t evaluated on the same (f, f~) pair.
std::vector<InterpolationRow> run_interpolation_scan(const ExperimentConfig& config);

struct ShapeReport {
  /// Indices i where cov(t_{i+1}) - cov(t_i) is significantly negative.
  std::vector<int> monotonicity_violations;
  /// Indices i (interior) where the second divided difference is significantly negative.
  std::vector<int> convexity_violations;

  bool ok() const { return monotonicity_violations.empty() && convexity_violations.empty(); }
};

/// Flags differences more than `n_se` pooled standard errors below zero.
ShapeReport check_monotone_convex(const std::vector<InterpolationRow>& curve, double n_se = 2.0);

struct SigmaEstimate {
  /// Richardson value from the two largest sizes (removes a c R^{d-1} term).
  double sigma2_hat = 0.0;
  double se = 0.0;
  /// var_N / R^d at the largest size.
  double plain = 0.0;
  double plain_se = 0.0;
};

SigmaEstimate estimate_sigma_squared(const VarianceTable& table, int dimension);

struct MuDerivative {
  double dmu_hat = 0.0;
  double se = 0.0;
  /// mean N / R^d at the central level.
  double mu_hat = 0.0;
  double mu_se = 0.0;
  int replications = 0;
};

/// (N(l + dl) - N(l - dl)) / (2 dl R^d) on common fields, averaged.
MuDerivative estimate_mu_derivative(const KernelSpec& kernel, const GridSpec& grid, double level, double dlevel,
                                    int replications, Star star = Star::ES, std::uint64_t seed = 1, int workers = 0);

struct RefinementRow {
  double h = 0.0;
  double density = 0.0;
  double se = 0.0;
};

struct RefinementStudy {
  std::vector<RefinementRow> rows;
  /// Second-order Richardson value from the two finest spacings.
  double extrapolated = 0.0;
  /// Coarsest h whose density is within 1% of the next finer one.
  std::optional<double> converged_h;
};

/// Mean N_star per unit volume at R = sizes[0] for each spacing.
RefinementStudy run_h_refinement_study(const ExperimentConfig& config, const std::vector<double>& h_list);

/// One field realization for the config's kernel (plane-wave synthesis for
/// the random plane wave, circulant embedding otherwise).
FieldSample draw_field(const ExperimentConfig& config, const GridSpec& grid, std::uint64_t seed);

long count_star(const FieldSample& sample, Star star, double level);

}  // namespace exlab
