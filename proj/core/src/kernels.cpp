#include "exlab/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "exlab/error.hpp"

namespace exlab {

namespace detail {

// Cubic spline through (r_i, K_i) with S'(0) = 0 and a natural right end.
struct RadialTable {
  std::vector<double> r;
  std::vector<double> y;
  std::vector<double> m;  // second derivatives at the knots

  struct Eval {
    double value;
    double d1;
    double d2;
  };

  Eval eval(double x) const {
    if (x > r.back()) return {0.0, 0.0, 0.0};
    auto it = std::upper_bound(r.begin(), r.end(), x);
    std::size_t i = it == r.begin() ? 0 : static_cast<std::size_t>(it - r.begin()) - 1;
    if (i >= r.size() - 1) i = r.size() - 2;
    const double h = r[i + 1] - r[i];
    const double a = (r[i + 1] - x) / h;
    const double b = (x - r[i]) / h;
    Eval e{};
    e.value = a * y[i] + b * y[i + 1] + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0;
    e.d1 = (y[i + 1] - y[i]) / h - (3.0 * a * a - 1.0) / 6.0 * h * m[i] +
           (3.0 * b * b - 1.0) / 6.0 * h * m[i + 1];
    e.d2 = a * m[i] + b * m[i + 1];
    return e;
  }
};

}  // namespace detail

namespace {

constexpr double kPi = std::numbers::pi;

std::shared_ptr<const detail::RadialTable> build_table(std::vector<double> radii,
                                                       std::vector<double> values) {
  if (radii.size() != values.size()) throw InputError("table kernel: column lengths differ");
  if (radii.size() < 4) throw InputError("table kernel: need at least 4 rows");
  if (radii.front() != 0.0) throw InputError("table kernel: first radius must be 0");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!std::isfinite(radii[i]) || !std::isfinite(values[i]))
      throw InputError("table kernel: non-finite entry at row " + std::to_string(i + 1));
    if (i > 0 && !(radii[i] > radii[i - 1]))
      throw InputError("table kernel: radius not strictly increasing at row " + std::to_string(i + 1));
  }
  const std::size_t n = radii.size();
  std::vector<double> h(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) h[i] = radii[i + 1] - radii[i];

  // Tridiagonal system for the knot second derivatives.
  std::vector<double> diag(n), upper(n), lower(n), rhs(n);
  diag[0] = 2.0 * h[0];
  upper[0] = h[0];
  rhs[0] = 6.0 * ((values[1] - values[0]) / h[0]);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    lower[i] = h[i - 1];
    diag[i] = 2.0 * (h[i - 1] + h[i]);
    upper[i] = h[i];
    rhs[i] = 6.0 * ((values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1]);
  }
  diag[n - 1] = 1.0;
  lower[n - 1] = 0.0;
  rhs[n - 1] = 0.0;

  for (std::size_t i = 1; i < n; ++i) {
    const double w = lower[i] / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  std::vector<double> m(n);
  m[n - 1] = rhs[n - 1] / diag[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];

  auto table = std::make_shared<detail::RadialTable>();
  table->r = std::move(radii);
  table->y = std::move(values);
  table->m = std::move(m);
  return table;
}

void check_dimension(int d) {
  if (d < 1 || d > kMaxKernelDimension)
    throw InputError("kernel dimension must be in [1, " + std::to_string(kMaxKernelDimension) +
                     "], got " + std::to_string(d));
}

// Terms of d^alpha phi(|x|^2/2): coeff * phi^(order)(q) * x^power.
struct ChainTerm {
  double coeff;
  int order;
  std::array<int, kMaxKernelDimension> power;
};

}  // namespace

double bessel_ratio(double mu, double z) {
  z = std::abs(z);
  if (mu == -0.5) return std::sqrt(2.0 / kPi) * std::cos(z);
  if (z < 2.0) {
    // Power series: sum_m (-1)^m (z^2/4)^m / (m! Gamma(m + mu + 1)) / 2^mu.
    const double x = 0.25 * z * z;
    double term = 1.0 / std::tgamma(mu + 1.0);
    double sum = term;
    for (int m = 1; m < 40; ++m) {
      term *= -x / (m * (m + mu));
      sum += term;
      if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return sum / std::pow(2.0, mu);
  }
  return std::cyl_bessel_j(mu, z) / std::pow(z, mu);
}

std::string_view to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::BargmannFock: return "bargmann-fock";
    case KernelFamily::Cauchy: return "cauchy";
    case KernelFamily::RandomPlaneWave: return "rpw";
    case KernelFamily::Monochromatic: return "monochromatic";
    case KernelFamily::TableKernel: return "table";
  }
  return "unknown";
}

KernelFamily parse_kernel_family(std::string_view name) {
  if (name == "bargmann-fock" || name == "bf" || name == "bargmann_fock") return KernelFamily::BargmannFock;
  if (name == "cauchy") return KernelFamily::Cauchy;
  if (name == "rpw" || name == "random-plane-wave") return KernelFamily::RandomPlaneWave;
  if (name == "monochromatic") return KernelFamily::Monochromatic;
  if (name == "table") return KernelFamily::TableKernel;
  throw InputError("unknown kernel family '" + std::string(name) + "'");
}

KernelSpec KernelSpec::bargmann_fock(int dimension) {
  check_dimension(dimension);
  KernelSpec k;
  k.family_ = KernelFamily::BargmannFock;
  k.dimension_ = dimension;
  return k;
}

KernelSpec KernelSpec::cauchy(int dimension, double beta) {
  check_dimension(dimension);
  if (!(beta > 0.0 && beta < dimension))
    throw InputError("cauchy kernel: beta must lie in (0, dimension), got " + std::to_string(beta));
  KernelSpec k;
  k.family_ = KernelFamily::Cauchy;
  k.dimension_ = dimension;
  k.beta_ = beta;
  return k;
}

KernelSpec KernelSpec::random_plane_wave(double wave_number) {
  if (!(wave_number > 0.0) || !std::isfinite(wave_number))
    throw InputError("wave number must be positive");
  KernelSpec k;
  k.family_ = KernelFamily::RandomPlaneWave;
  k.dimension_ = 2;
  k.wave_number_ = wave_number;
  return k;
}

KernelSpec KernelSpec::monochromatic(int dimension, double wave_number) {
  check_dimension(dimension);
  if (dimension < 2) throw InputError("monochromatic kernel requires dimension >= 2");
  if (!(wave_number > 0.0) || !std::isfinite(wave_number))
    throw InputError("wave number must be positive");
  KernelSpec k;
  k.family_ = KernelFamily::Monochromatic;
  k.dimension_ = dimension;
  k.wave_number_ = wave_number;
  return k;
}

KernelSpec KernelSpec::table(int dimension, std::vector<double> radii, std::vector<double> values) {
  check_dimension(dimension);
  KernelSpec k;
  k.family_ = KernelFamily::TableKernel;
  k.dimension_ = dimension;
  k.table_ = build_table(std::move(radii), std::move(values));
  return k;
}

KernelSpec KernelSpec::table_from_file(int dimension, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open kernel table '" + path.string() + "'");
  std::vector<double> radii, values;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    double r = 0.0, v = 0.0;
    if (!(ss >> r)) continue;
    if (!(ss >> v))
      throw InputError("kernel table '" + path.string() + "' line " + std::to_string(lineno) +
                       ": expected two columns");
    radii.push_back(r);
    values.push_back(v);
  }
  return table(dimension, std::move(radii), std::move(values));
}

int KernelSpec::max_derivative_order() const {
  return family_ == KernelFamily::TableKernel ? 2 : kMaxDerivativeOrder;
}

double KernelSpec::radial_value(double r) const {
  r = std::abs(r);
  switch (family_) {
    case KernelFamily::BargmannFock: return std::exp(-0.5 * r * r);
    case KernelFamily::Cauchy: return std::pow(1.0 + r * r, -0.5 * beta_);
    case KernelFamily::RandomPlaneWave:
    case KernelFamily::Monochromatic: {
      const double nu = 0.5 * dimension_ - 1.0;
      return std::tgamma(nu + 1.0) * std::pow(2.0, nu) * bessel_ratio(nu, wave_number_ * r);
    }
    case KernelFamily::TableKernel: return table_->eval(r).value;
  }
  return 0.0;
}

double KernelSpec::profile_derivative(int k, double q) const {
  switch (family_) {
    case KernelFamily::BargmannFock:
      return (k % 2 == 0 ? 1.0 : -1.0) * std::exp(-q);
    case KernelFamily::Cauchy: {
      double c = 1.0;
      for (int j = 0; j < k; ++j) c *= 2.0 * (-0.5 * beta_ - j);
      return c * std::pow(1.0 + 2.0 * q, -0.5 * beta_ - k);
    }
    case KernelFamily::RandomPlaneWave:
    case KernelFamily::Monochromatic: {
      // d^k/dq^k G_nu(a sqrt(2q)) = (-a^2)^k G_{nu+k}(a sqrt(2q)).
      const double nu = 0.5 * dimension_ - 1.0;
      const double a2 = wave_number_ * wave_number_;
      const double scale = std::tgamma(nu + 1.0) * std::pow(2.0, nu) * std::pow(-a2, k);
      return scale * bessel_ratio(nu + k, wave_number_ * std::sqrt(2.0 * q));
    }
    case KernelFamily::TableKernel: {
      const double r = std::sqrt(2.0 * q);
      if (k == 0) return table_->eval(r).value;
      if (r < 1e-9) {
        const auto e = table_->eval(0.0);
        if (k == 1) return e.d2;
        if (k == 2) return 0.0;
      } else {
        const auto e = table_->eval(r);
        if (k == 1) return e.d1 / r;
        if (k == 2) return (e.d2 - e.d1 / r) / (r * r);
      }
      throw UnsupportedError("table kernel: derivative order " + std::to_string(k) + " unsupported");
    }
  }
  return 0.0;
}

std::string KernelSpec::describe() const {
  std::ostringstream os;
  os << to_string(family_) << "(d=" << dimension_;
  if (family_ == KernelFamily::Cauchy) os << ", beta=" << beta_;
  if (family_ == KernelFamily::Monochromatic || family_ == KernelFamily::RandomPlaneWave)
    os << ", a=" << wave_number_;
  if (family_ == KernelFamily::TableKernel) os << ", rows=" << table_->r.size();
  os << ")";
  return os.str();
}

bool operator==(const KernelSpec& a, const KernelSpec& b) {
  return a.family_ == b.family_ && a.dimension_ == b.dimension_ && a.beta_ == b.beta_ &&
         a.wave_number_ == b.wave_number_ && a.table_ == b.table_;
}

namespace {

double squared_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

void check_point(const KernelSpec& spec, std::span<const double> x) {
  if (static_cast<int>(x.size()) != spec.dimension())
    throw InputError("point has dimension " + std::to_string(x.size()) + ", kernel has " +
                     std::to_string(spec.dimension()));
  for (double v : x)
    if (!std::isfinite(v)) throw InputError("non-finite coordinate in kernel argument");
}

}  // namespace

double eval_kernel(const KernelSpec& spec, std::span<const double> x) {
  check_point(spec, x);
  return spec.radial_value(std::sqrt(squared_norm(x)));
}

double eval_kernel_derivative(const KernelSpec& spec, std::span<const int> alpha,
                              std::span<const double> x) {
  check_point(spec, x);
  if (alpha.size() != x.size()) throw InputError("multi-index length does not match dimension");
  int total = 0;
  for (int a : alpha) {
    if (a < 0) throw InputError("negative multi-index entry");
    total += a;
  }
  if (total > spec.max_derivative_order())
    throw UnsupportedError("derivative order " + std::to_string(total) + " exceeds " +
                           std::to_string(spec.max_derivative_order()) + " for " + spec.describe());

  std::vector<ChainTerm> terms{{1.0, 0, {}}};
  std::vector<ChainTerm> next;
  for (std::size_t axis = 0; axis < alpha.size(); ++axis) {
    for (int rep = 0; rep < alpha[axis]; ++rep) {
      next.clear();
      for (const auto& t : terms) {
        // d/dx_i [phi^(k)(q) x^p] = phi^(k+1) x_i x^p + p_i phi^(k) x^(p - e_i)
        ChainTerm up = t;
        up.order += 1;
        up.power[axis] += 1;
        next.push_back(up);
        if (t.power[axis] > 0) {
          ChainTerm down = t;
          down.coeff *= t.power[axis];
          down.power[axis] -= 1;
          next.push_back(down);
        }
      }
      terms.swap(next);
    }
  }

  const double q = 0.5 * squared_norm(x);
  std::array<double, kMaxDerivativeOrder + 1> profile{};
  std::array<bool, kMaxDerivativeOrder + 1> have{};
  double sum = 0.0;
  for (const auto& t : terms) {
    double mono = t.coeff;
    for (std::size_t i = 0; i < x.size(); ++i)
      for (int p = 0; p < t.power[i]; ++p) mono *= x[i];
    if (mono == 0.0) continue;
    if (!have[t.order]) {
      profile[t.order] = spec.profile_derivative(t.order, q);
      have[t.order] = true;
    }
    sum += mono * profile[t.order];
  }
  return sum;
}

std::optional<double> spectral_density(const KernelSpec& spec, std::span<const double> xi) {
  if (static_cast<int>(xi.size()) != spec.dimension())
    throw InputError("frequency has wrong dimension");
  const int d = spec.dimension();
  const double k = std::sqrt(squared_norm(xi));
  switch (spec.family()) {
    case KernelFamily::BargmannFock:
      return std::pow(2.0 * kPi, -0.5 * d) * std::exp(-0.5 * k * k);
    case KernelFamily::Cauchy: {
      // Generalized multiquadric transform: a Matern-type density.
      if (k == 0.0) return std::numeric_limits<double>::infinity();
      const double b = spec.beta();
      return std::pow(2.0 * kPi, -0.5 * d) * std::pow(2.0, 1.0 - 0.5 * b) / std::tgamma(0.5 * b) *
             std::pow(k, 0.5 * (b - d)) * std::cyl_bessel_k(0.5 * (d - b), k);
    }
    case KernelFamily::RandomPlaneWave:
    case KernelFamily::Monochromatic:
      return std::nullopt;
    case KernelFamily::TableKernel: {
      // rho(k) = (2 pi)^(-d/2) int_0^rmax K(r) G_nu(k r) r^(d-1) dr, Simpson rule.
      const double nu = 0.5 * d - 1.0;
      double rmax = 0.0;
      for (double r = 1.0;; r *= 1.5) {
        if (spec.radial_value(r) == 0.0 && spec.radial_value(r * 1.0000001) == 0.0) {
          rmax = r;
          break;
        }
        if (r > 1e6) throw UnsupportedError("table kernel support too large for spectral transform");
      }
      const int n = 8000;
      const double step = rmax / n;
      double acc = 0.0;
      for (int i = 0; i <= n; ++i) {
        const double r = i * step;
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        acc += w * spec.radial_value(r) * bessel_ratio(nu, k * r) * std::pow(r, d - 1);
      }
      return std::max(0.0, std::pow(2.0 * kPi, -0.5 * d) * acc * step / 3.0);
    }
  }
  return std::nullopt;
}

double kernel_sup_mollified(const KernelSpec& spec, std::span<const double> x) {
  check_point(spec, x);
  // Isotropy: the unit ball around x meets exactly the radii in [|x|-1, |x|+1].
  const double rho = std::sqrt(squared_norm(x));
  const double a = std::max(0.0, rho - 1.0);
  const double b = rho + 1.0;
  auto abs_k = [&](double r) { return std::abs(spec.radial_value(r)); };

  constexpr int kSamples = 256;
  const double step = (b - a) / kSamples;
  int best_i = 0;
  double best = abs_k(a);
  for (int i = 1; i <= kSamples; ++i) {
    const double v = abs_k(a + i * step);
    if (v > best) {
      best = v;
      best_i = i;
    }
  }

  // Golden-section refinement on the bracket around the best sample.
  double lo = a + std::max(0, best_i - 1) * step;
  double hi = a + std::min(kSamples, best_i + 1) * step;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = hi - g * (hi - lo);
  double e = lo + g * (hi - lo);
  double fc = abs_k(c), fe = abs_k(e);
  while (hi - lo > 1e-10 * std::max(1.0, b)) {
    if (fc > fe) {
      hi = e;
      e = c;
      fe = fc;
      c = hi - g * (hi - lo);
      fc = abs_k(c);
    } else {
      lo = c;
      c = e;
      fc = fe;
      e = lo + g * (hi - lo);
      fe = abs_k(e);
    }
  }
  return std::max({best, fc, fe});
}

}  // namespace exlab
