#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace exlab {

inline constexpr int kMaxKernelDimension = 8;
inline constexpr int kMaxDerivativeOrder = 4;

enum class KernelFamily { BargmannFock, Cauchy, RandomPlaneWave, Monochromatic, TableKernel };

std::string_view to_string(KernelFamily family);
KernelFamily parse_kernel_family(std::string_view name);

namespace detail {
struct RadialTable;
}

/// Isotropic covariance kernel K(x) = E[f(0) f(x)].
///
/// Every built-in family is normalized to K(0) = 1 with unit correlation
/// length, and is represented internally through its radial profile
/// phi(q) with q = |x|^2 / 2, so that partial derivatives follow from the
/// closed-form derivatives phi^(k) by the chain rule.
///
/// Instances are immutable and cheap to copy.
class KernelSpec {
 public:
  static KernelSpec bargmann_fock(int dimension);
  /// K(x) = (1 + |x|^2)^(-beta/2), 0 < beta < dimension.
  static KernelSpec cauchy(int dimension, double beta);
  /// Planar monochromatic wave, K(x) = J_0(a |x|).
  static KernelSpec random_plane_wave(double wave_number = 1.0);
  /// K(x) = Gamma(nu+1) (2/(a r))^nu J_nu(a r), nu = d/2 - 1, for d >= 2.
  static KernelSpec monochromatic(int dimension, double wave_number = 1.0);
  /// Radial table (radius, K) with radius strictly increasing from 0.
  /// Interpolated by a cubic spline with zero slope at the origin; zero
  /// beyond the last radius.
  static KernelSpec table(int dimension, std::vector<double> radii, std::vector<double> values);
  /// Two whitespace-separated columns per line; '#' starts a comment.
  static KernelSpec table_from_file(int dimension, const std::filesystem::path& path);

  KernelFamily family() const { return family_; }
  int dimension() const { return dimension_; }
  double beta() const { return beta_; }
  double wave_number() const { return wave_number_; }

  /// Largest supported |alpha| for eval_kernel_derivative.
  int max_derivative_order() const;

  /// K as a function of the radius |x|.
  double radial_value(double r) const;
  /// k-th derivative of the radial profile phi(q), q = |x|^2 / 2.
  double profile_derivative(int k, double q) const;

  std::string describe() const;

  friend bool operator==(const KernelSpec& a, const KernelSpec& b);

 private:
  KernelSpec() = default;

  KernelFamily family_ = KernelFamily::BargmannFock;
  int dimension_ = 2;
  double beta_ = 0.0;
  double wave_number_ = 1.0;
  std::shared_ptr<const detail::RadialTable> table_;
};

double eval_kernel(const KernelSpec& spec, std::span<const double> x);

/// Exact partial derivative d^alpha K(x); alpha has one entry per dimension.
double eval_kernel_derivative(const KernelSpec& spec, std::span<const int> alpha,
                              std::span<const double> x);

/// Density of the spectral measure at xi, normalized so that it integrates
/// to K(0). Returns std::nullopt when the measure is singular (supported on
/// a sphere), which is the case for the monochromatic families.
std::optional<double> spectral_density(const KernelSpec& spec, std::span<const double> xi);

/// sup over |y - x| <= 1 of |K(y)|. Every kernel here is isotropic, so this
/// is the maximum of |K| over radii in [max(0, |x| - 1), |x| + 1].
double kernel_sup_mollified(const KernelSpec& spec, std::span<const double> x);

/// z^(-mu) J_mu(z), continuous at z = 0. Exposed for tests.
double bessel_ratio(double mu, double z);

}  // namespace exlab
