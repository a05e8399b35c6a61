#include "exlab/kacrice.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "exlab/error.hpp"
#include "exlab/parallel.hpp"

namespace exlab {

namespace {

constexpr double kPi = std::numbers::pi;

int order(const std::vector<int>& alpha) {
  int s = 0;
  for (int a : alpha) s += a;
  return s;
}

std::vector<int> unit(int d, int a) {
  std::vector<int> e(static_cast<std::size_t>(d), 0);
  e[a] = 1;
  return e;
}

std::vector<int> pair_index(int d, int a, int b) {
  std::vector<int> e(static_cast<std::size_t>(d), 0);
  e[a] += 1;
  e[b] += 1;
  return e;
}

// Labels (value, gradient) and then the upper-triangular Hessian of one field
// at one point.
void append_jet(std::vector<JetLabel>& out, int d, const std::vector<double>& x, FieldTag tag, bool value,
                bool gradient, bool hessian) {
  if (value) out.push_back({x, tag, std::vector<int>(static_cast<std::size_t>(d), 0)});
  if (gradient)
    for (int a = 0; a < d; ++a) out.push_back({x, tag, unit(d, a)});
  if (hessian)
    for (int a = 0; a < d; ++a)
      for (int b = a; b < d; ++b) out.push_back({x, tag, pair_index(d, a, b)});
}

// Symmetric square root factor L with L L^T = cov (negative eigenvalues
// from roundoff are clipped).
Eigen::MatrixXd sqrt_factor(const Eigen::MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd s = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * s.asDiagonal();
}

// Standard normal draws, one column per antithetic pair.
Eigen::MatrixXd make_draws(Eigen::Index dim, long n_pairs, std::uint64_t seed) {
  Eigen::MatrixXd z(dim, n_pairs);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (long p = 0; p < n_pairs; ++p)
    for (Eigen::Index i = 0; i < dim; ++i) z(i, p) = normal(rng);
  return z;
}

long pairs_for(long n_samples) {
  if (n_samples < 2) throw InputError("Monte Carlo: at least 2 samples are required");
  return n_samples / 2;
}

// |det| and Morse index of the symmetric matrix with upper triangle `h`.
struct HessInfo {
  double abs_det;
  int index;
};

HessInfo hessian_info(const double* h, int d) {
  if (d == 1) return {std::abs(h[0]), h[0] < 0.0 ? 1 : 0};
  if (d == 2) {
    const double det = h[0] * h[2] - h[1] * h[1];
    int index;
    if (det < 0.0) index = 1;
    else index = (h[0] + h[2] < 0.0) ? 2 : 0;
    return {std::abs(det), index};
  }
  Eigen::MatrixXd m(d, d);
  int k = 0;
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) m(a, b) = m(b, a) = h[k++];
  if (d == 3) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig;
    eig.computeDirect(Eigen::Matrix3d(m), Eigen::EigenvaluesOnly);
    const auto& ev = eig.eigenvalues();
    return {std::abs(ev.prod()), static_cast<int>((ev.array() < 0.0).count())};
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  const auto& ev = eig.eigenvalues();
  return {std::abs(ev.prod()), static_cast<int>((ev.array() < 0.0).count())};
}

struct MeanSe {
  double mean;
  double se;
};

MeanSe mean_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double m = 0.0;
  for (double x : v) m += x;
  m /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double var = v.size() > 1 ? ss / (n - 1.0) : 0.0;
  return {m, std::sqrt(var / n)};
}

// Everything needed to evaluate the one-point Hessian law at any level.
struct OnePointModel {
  int d;
  Eigen::MatrixXd cond_cov;     // covariance of (f, grad f)
  Eigen::VectorXd level_slope;  // conditional Hessian mean per unit level
  Eigen::MatrixXd factor;       // sqrt of the conditional Hessian covariance
};

OnePointModel one_point_model(const KernelSpec& kernel) {
  const int d = kernel.dimension();
  std::vector<JetLabel> labels;
  const std::vector<double> origin(static_cast<std::size_t>(d), 0.0);
  append_jet(labels, d, origin, FieldTag::F, true, true, true);
  const JetCovariance joint = jet_covariance(kernel, std::move(labels), 1.0);
  std::vector<std::size_t> cond(static_cast<std::size_t>(d + 1));
  for (int i = 0; i <= d; ++i) cond[i] = static_cast<std::size_t>(i);
  std::vector<double> v(static_cast<std::size_t>(d + 1), 0.0);
  v[0] = 1.0;
  const ConditionalMoments cm = conditional_moments(joint, cond, v);
  OnePointModel m;
  m.d = d;
  m.cond_cov = joint.matrix.topLeftCorner(d + 1, d + 1);
  m.level_slope = cm.mean;
  m.factor = sqrt_factor(cm.cov);
  return m;
}

double one_point_density(const OnePointModel& m, double level) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(m.d + 1);
  v(0) = level;
  return std::exp(gaussian_log_density(m.cond_cov, v));
}

}  // namespace

// ---------------------------------------------------------------- assembly

JetCovariance jet_covariance(const KernelSpec& kernel, std::vector<JetLabel> labels, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw InputError("jet_covariance: t must lie in [0, 1]");
  const int d = kernel.dimension();
  for (const auto& l : labels) {
    if (static_cast<int>(l.point.size()) != d || static_cast<int>(l.alpha.size()) != d)
      throw InputError("jet_covariance: label point and multi-index must have one entry per axis");
    if (order(l.alpha) > 2) throw InputError("jet_covariance: |alpha| must be at most 2");
    for (int a : l.alpha)
      if (a < 0) throw InputError("jet_covariance: negative multi-index entry");
  }
  const auto n = static_cast<Eigen::Index>(labels.size());
  JetCovariance out;
  out.t = t;
  out.matrix.resize(n, n);
  std::vector<double> diff(static_cast<std::size_t>(d));
  std::vector<int> sum(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) {
      const JetLabel& a = labels[i];
      const JetLabel& b = labels[j];
      for (int k = 0; k < d; ++k) {
        diff[k] = b.point[k] - a.point[k];
        sum[k] = a.alpha[k] + b.alpha[k];
      }
      if (order(sum) > kernel.max_derivative_order())
        throw UnsupportedError("jet_covariance: derivative order exceeds what " + kernel.describe() + " supports");
      const double factor = a.field == b.field ? 1.0 : t;
      const double sign = order(a.alpha) % 2 == 0 ? 1.0 : -1.0;
      const double v = factor == 0.0 ? 0.0 : factor * sign * eval_kernel_derivative(kernel, sum, diff);
      out.matrix(i, j) = v;
      out.matrix(j, i) = v;
    }
  out.labels = std::move(labels);
  if (n == 0) return out;

  const double trace = out.matrix.trace();
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(out.matrix(i, i) > 0.0))
      throw AssemblyError("jet_covariance: non-positive variance on the diagonal");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.matrix, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues().minCoeff();
  if (lmin < -1e-10 * trace) {
    std::ostringstream msg;
    msg << "jet_covariance: assembled matrix is not positive semidefinite (smallest eigenvalue " << lmin
        << ", trace " << trace << ")";
    throw AssemblyError(msg.str());
  }
  return out;
}

// ---------------------------------------------------------------- DC algebra

double log_dc(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols()) throw InputError("dc: matrix must be square");
  if (cov.rows() == 0) return 0.0;
  const double trace = cov.trace();
  if (!(trace > 0.0)) return -std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
  Eigen::LDLT<Eigen::MatrixXd> ldlt(sym);
  const Eigen::VectorXd D = ldlt.vectorD();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < D.size(); ++i) {
    if (!(D(i) > 1e-14 * trace)) return -std::numeric_limits<double>::infinity();
    acc += std::log(D(i));
  }
  return acc;
}

double dc(const Eigen::MatrixXd& cov) {
  const double l = log_dc(cov);
  return std::isinf(l) ? 0.0 : std::exp(l);
}

ConditionalMoments conditional_moments(const Eigen::MatrixXd& joint, std::span<const std::size_t> condition,
                                       std::span<const double> values) {
  const auto n = static_cast<std::size_t>(joint.rows());
  if (joint.rows() != joint.cols()) throw InputError("conditional_moments: matrix must be square");
  if (condition.size() != values.size())
    throw InputError("conditional_moments: one value per conditioning coordinate is required");
  std::vector<bool> is_cond(n, false);
  for (std::size_t c : condition) {
    if (c >= n) throw InputError("conditional_moments: conditioning index out of range");
    if (is_cond[c]) throw InputError("conditional_moments: repeated conditioning index");
    is_cond[c] = true;
  }
  ConditionalMoments out;
  for (std::size_t i = 0; i < n; ++i)
    if (!is_cond[i]) out.free.push_back(i);

  const auto nc = static_cast<Eigen::Index>(condition.size());
  const auto nf = static_cast<Eigen::Index>(out.free.size());
  Eigen::MatrixXd sy(nc, nc), sxy(nf, nc), sx(nf, nf);
  for (Eigen::Index i = 0; i < nc; ++i)
    for (Eigen::Index j = 0; j < nc; ++j) sy(i, j) = joint(condition[i], condition[j]);
  for (Eigen::Index i = 0; i < nf; ++i) {
    for (Eigen::Index j = 0; j < nc; ++j) sxy(i, j) = joint(out.free[i], condition[j]);
    for (Eigen::Index j = 0; j < nf; ++j) sx(i, j) = joint(out.free[i], out.free[j]);
  }
  Eigen::VectorXd v(nc);
  for (Eigen::Index i = 0; i < nc; ++i) v(i) = values[i];

  if (nc == 0) {
    out.mean = Eigen::VectorXd::Zero(nf);
    out.cov = sx;
    out.regression = Eigen::MatrixXd::Zero(nf, 0);
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sy, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues().minCoeff();
  const double trace = sy.trace();
  if (!(lmin > 1e-12 * trace)) {
    std::ostringstream msg;
    msg << "conditional_moments: conditioning block is singular (smallest eigenvalue " << lmin << ", trace "
        << trace << ")";
    throw ConditioningError(msg.str());
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(sy);
  out.regression = ldlt.solve(sxy.transpose()).transpose();
  out.mean = out.regression * v;
  out.cov = sx - out.regression * sxy.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

ConditionalMoments conditional_moments(const JetCovariance& joint, std::span<const std::size_t> condition,
                                       std::span<const double> values) {
  return conditional_moments(joint.matrix, condition, values);
}

double gaussian_log_density(const Eigen::MatrixXd& cov, const Eigen::VectorXd& v) {
  const double ld = log_dc(cov);
  if (std::isinf(ld)) throw ConditioningError("Gaussian density: covariance is singular");
  Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  const double q = v.dot(ldlt.solve(v));
  return -0.5 * (static_cast<double>(v.size()) * std::log(2.0 * kPi) + ld + q);
}

// ---------------------------------------------------------------- one-point

IntensityEstimate one_point_critical_intensity(const KernelSpec& kernel, double level,
                                               std::optional<int> morse_index, const MonteCarloOptions& options) {
  return integrated_critical_intensity(kernel, level, level, 1, morse_index, options);
}

IntensityEstimate integrated_critical_intensity(const KernelSpec& kernel, double lo, double hi, int n_levels,
                                                std::optional<int> morse_index, const MonteCarloOptions& options) {
  if (!(lo <= hi)) throw InputError("critical intensity: empty level range");
  if (n_levels < 1 || (n_levels == 1 && lo != hi)) throw InputError("critical intensity: need at least 2 levels");
  const OnePointModel m = one_point_model(kernel);
  const int d = m.d;
  if (morse_index && (*morse_index < 0 || *morse_index > d))
    throw InputError("critical intensity: Morse index out of range");

  std::vector<double> levels(static_cast<std::size_t>(n_levels)), weight(levels.size()), phi(levels.size());
  for (int j = 0; j < n_levels; ++j) {
    levels[j] = n_levels == 1 ? lo : lo + (hi - lo) * j / (n_levels - 1);
    weight[j] = n_levels == 1 ? 1.0 : (hi - lo) / (n_levels - 1) * ((j == 0 || j == n_levels - 1) ? 0.5 : 1.0);
    phi[j] = one_point_density(m, levels[j]);
  }

  const long n_pairs = pairs_for(options.n_samples);
  const Eigen::MatrixXd z = make_draws(m.factor.cols(), n_pairs, options.seed);
  std::vector<double> per_pair(static_cast<std::size_t>(n_pairs));
  const long chunk = 1024;
  const auto n_chunks = static_cast<std::size_t>((n_pairs + chunk - 1) / chunk);
  parallel_for(n_chunks, options.workers, [&](std::size_t c) {
    const long begin = static_cast<long>(c) * chunk;
    const long end = std::min(n_pairs, begin + chunk);
    Eigen::VectorXd noise, hp, hm;
    for (long p = begin; p < end; ++p) {
      noise = m.factor * z.col(p);
      double acc = 0.0;
      for (std::size_t j = 0; j < levels.size(); ++j) {
        hp = levels[j] * m.level_slope + noise;
        hm = levels[j] * m.level_slope - noise;
        const HessInfo a = hessian_info(hp.data(), d);
        const HessInfo b = hessian_info(hm.data(), d);
        double g = 0.0;
        if (!morse_index || a.index == *morse_index) g += a.abs_det;
        if (!morse_index || b.index == *morse_index) g += b.abs_det;
        acc += weight[j] * phi[j] * 0.5 * g;
      }
      per_pair[static_cast<std::size_t>(p)] = acc;
    }
  });
  const MeanSe ms = mean_se(per_pair);
  IntensityEstimate est;
  est.value = ms.mean;
  est.std_error = ms.se;
  est.n_samples = 2 * n_pairs;
  est.level = lo == hi ? lo : 0.5 * (lo + hi);
  return est;
}

// ---------------------------------------------------------------- two-point

namespace {

struct TwoPointModel {
  int d;
  int n_hess;
  double log_phi;
  Eigen::VectorXd mean;
  Eigen::MatrixXd factor;
};

std::vector<JetLabel> two_point_labels(int d, std::span<const double> u, bool hessians) {
  std::vector<JetLabel> labels;
  const std::vector<double> origin(static_cast<std::size_t>(d), 0.0);
  const std::vector<double> y(u.begin(), u.end());
  append_jet(labels, d, origin, FieldTag::F, true, false, false);
  append_jet(labels, d, y, FieldTag::FT, true, false, false);
  append_jet(labels, d, origin, FieldTag::F, false, true, false);
  append_jet(labels, d, y, FieldTag::FT, false, true, false);
  if (hessians) {
    append_jet(labels, d, origin, FieldTag::F, false, false, true);
    append_jet(labels, d, y, FieldTag::FT, false, false, true);
  }
  return labels;
}

void check_two_point(const KernelSpec& kernel, double t, std::span<const double> u) {
  if (!(t >= 0.0 && t <= 1.0)) throw InputError("two-point intensity: t must lie in [0, 1]");
  if (static_cast<int>(u.size()) != kernel.dimension())
    throw InputError("two-point intensity: separation must have one entry per axis");
  double s = 0.0;
  for (double x : u) s += x * x;
  if (t == 1.0 && s == 0.0)
    throw ConditioningError("two-point intensity: t = 1 with u = 0 is the excluded diagonal configuration");
}

TwoPointModel two_point_model(const KernelSpec& kernel, double level, double t, std::span<const double> u) {
  check_two_point(kernel, t, u);
  const int d = kernel.dimension();
  const JetCovariance joint = jet_covariance(kernel, two_point_labels(d, u, true), t);
  const std::size_t nc = 2 + 2 * static_cast<std::size_t>(d);
  std::vector<std::size_t> cond(nc);
  std::vector<double> v(nc, 0.0);
  for (std::size_t i = 0; i < nc; ++i) cond[i] = i;
  v[0] = level;
  v[1] = level;
  const ConditionalMoments cm = conditional_moments(joint, cond, v);
  TwoPointModel m;
  m.d = d;
  m.n_hess = d * (d + 1) / 2;
  const auto ncond = static_cast<Eigen::Index>(nc);
  Eigen::VectorXd vv = Eigen::VectorXd::Zero(ncond);
  vv(0) = level;
  vv(1) = level;
  m.log_phi = gaussian_log_density(joint.matrix.topLeftCorner(ncond, ncond), vv);
  m.mean = cm.mean;
  m.factor = sqrt_factor(cm.cov);
  return m;
}

// Per-pair values of |det H1 det H2|^k averaged over the antithetic pair.
void two_point_pairs(const TwoPointModel& m, int k, const Eigen::MatrixXd& z, std::vector<double>& out) {
  out.resize(static_cast<std::size_t>(z.cols()));
  Eigen::VectorXd noise, hp, hm;
  for (Eigen::Index p = 0; p < z.cols(); ++p) {
    noise = m.factor * z.col(p);
    hp = m.mean + noise;
    hm = m.mean - noise;
    const double a = hessian_info(hp.data(), m.d).abs_det * hessian_info(hp.data() + m.n_hess, m.d).abs_det;
    const double b = hessian_info(hm.data(), m.d).abs_det * hessian_info(hm.data() + m.n_hess, m.d).abs_det;
    out[static_cast<std::size_t>(p)] = 0.5 * (std::pow(a, k) + std::pow(b, k));
  }
}

MeanSe two_point_value(const KernelSpec& kernel, double level, double t, std::span<const double> u, int k,
                       const Eigen::MatrixXd& z, std::vector<double>& scratch) {
  const TwoPointModel m = two_point_model(kernel, level, t, u);
  two_point_pairs(m, k, z, scratch);
  const MeanSe ms = mean_se(scratch);
  const double phi = std::exp(m.log_phi);
  if (k == 1) return {phi * ms.mean, phi * ms.se};
  const double root = std::pow(ms.mean, 1.0 / k);
  const double se = ms.mean > 0.0 ? root / (k * ms.mean) * ms.se : 0.0;
  return {phi * root, phi * se};
}

}  // namespace

IntensityEstimate two_point_critical_intensity(const KernelSpec& kernel, double level, double t,
                                               std::span<const double> u, int k, const MonteCarloOptions& options) {
  if (k < 1) throw InputError("two-point intensity: moment order k must be at least 1");
  const int d = kernel.dimension();
  const long n_pairs = pairs_for(options.n_samples);
  const Eigen::MatrixXd z = make_draws(2 * (d * (d + 1) / 2), n_pairs, options.seed);
  std::vector<double> scratch;
  const MeanSe ms = two_point_value(kernel, level, t, u, k, z, scratch);
  return {ms.mean, ms.se, 2 * n_pairs, level};
}

double numbound_determinant(const KernelSpec& kernel, double t, std::span<const double> u) {
  if (static_cast<int>(u.size()) != kernel.dimension())
    throw InputError("numbound: separation must have one entry per axis");
  const JetCovariance joint = jet_covariance(kernel, two_point_labels(kernel.dimension(), u, false), t);
  return dc(joint.matrix);
}

// ---------------------------------------------------------------- numbound

bool NumboundReport::positive() const {
  return min_ratio_coarse > 0.0 && min_ratio_fine > 0.0 && min_far_coarse > 0.0 && min_far_fine > 0.0;
}

bool NumboundReport::stable(double tol) const {
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); };
  return positive() && rel(min_ratio_coarse, min_ratio_fine) <= tol && rel(min_far_coarse, min_far_fine) <= tol;
}

namespace {

std::vector<double> logspace(double a, double b, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[i] = n == 1 ? a : a * std::pow(b / a, static_cast<double>(i) / (n - 1));
  return v;
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[i] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return v;
}

}  // namespace

NumboundReport dc_lower_bound_check(const KernelSpec& kernel, const NumboundGrid& g) {
  if (g.n_t < 2 || g.n_u < 2 || g.n_far < 2) throw InputError("numbound: grids need at least 2 points");
  const int d = kernel.dimension();
  NumboundReport rep;
  auto run = [&](int refine, double& min_ratio, double& min_far) {
    const auto s_grid = logspace(g.s_min, 1.0, (g.n_t - 1) * refine + 1);
    const auto u_grid = logspace(g.u_min, 1.0, (g.n_u - 1) * refine + 1);
    const auto far_grid = linspace(1.0, g.u_far, (g.n_far - 1) * refine + 1);
    min_ratio = std::numeric_limits<double>::infinity();
    min_far = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(d), 0.0);
    for (double r : u_grid) {
      u[0] = r;
      double prev = std::numeric_limits<double>::quiet_NaN();
      // s descending means t ascending: F must not increase.
      for (auto it = s_grid.rbegin(); it != s_grid.rend(); ++it) {
        const double s = *it;
        const double F = numbound_determinant(kernel, 1.0 - s, u);
        const double scale = std::pow(std::max(std::sqrt(s), r), 2 * d) * s;
        min_ratio = std::min(min_ratio, F / scale);
        if (!std::isnan(prev) && prev > 0.0) rep.max_increase_in_t = std::max(rep.max_increase_in_t, (F - prev) / prev);
        prev = F;
      }
    }
    for (double r : far_grid) {
      u[0] = r;
      for (double s : s_grid) min_far = std::min(min_far, numbound_determinant(kernel, 1.0 - s, u));
      min_far = std::min(min_far, numbound_determinant(kernel, 1.0, u));
    }
  };
  rep.max_increase_in_t = -std::numeric_limits<double>::infinity();
  run(1, rep.min_ratio_coarse, rep.min_far_coarse);
  run(2, rep.min_ratio_fine, rep.min_far_fine);
  return rep;
}

// ---------------------------------------------------------------- integrability

double IntegrabilityReport::last_relative_change() const {
  if (integrals.size() < 2) return 0.0;
  const double a = integrals[integrals.size() - 2];
  const double b = integrals.back();
  return std::abs(b - a) / std::abs(a);
}

double IntegrabilityReport::offdiag_relative_change() const {
  return std::abs(offdiag_sup_fine - offdiag_sup_coarse) / std::max(offdiag_sup_coarse, offdiag_sup_fine);
}

namespace {

// Gauss-Legendre nodes/weights on [-1, 1] (Newton on the Legendre recurrence).
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(static_cast<std::size_t>(n), 0.0);
  w.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-15) break;
    }
    x[i] = -z;
    w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

struct Node {
  double x;
  double w;
};

std::vector<Node> gl_nodes(double a, double b, int n) {
  std::vector<double> x, w;
  gauss_legendre(n, x, w);
  std::vector<Node> out;
  for (int i = 0; i < n; ++i) out.push_back({0.5 * (a + b) + 0.5 * (b - a) * x[i], 0.5 * (b - a) * w[i]});
  return out;
}

}  // namespace

IntegrabilityReport integrability_scan(const KernelSpec& kernel, double level, const IntegrabilityOptions& opt) {
  if (opt.epsilons.empty()) throw InputError("integrability scan: no epsilon values");
  std::vector<double> eps = opt.epsilons;
  std::sort(eps.begin(), eps.end(), std::greater<>());
  if (!(eps.front() < 1.0) || !(eps.back() > 0.0)) throw InputError("integrability scan: epsilons must lie in (0, 1)");
  const int d = kernel.dimension();
  const double sphere = 2.0 * std::pow(kPi, 0.5 * d) / std::tgamma(0.5 * d);
  const long n_pairs = pairs_for(opt.mc.n_samples);
  const Eigen::MatrixXd z = make_draws(2 * (d * (d + 1) / 2), n_pairs, opt.mc.seed);

  // Panels in s = 1 - t: [eps_0, 1], [eps_1, eps_0], ... integrated in log s.
  struct TNode {
    std::size_t panel;
    double s;
    double w;  // includes the ds = s dlog(s) Jacobian
  };
  std::vector<TNode> tnodes;
  double upper = 1.0;
  for (std::size_t p = 0; p < eps.size(); ++p) {
    const double decades = std::max(1.0, std::round(std::log10(upper / eps[p])));
    for (const Node& nd : gl_nodes(std::log(eps[p]), std::log(upper), opt.t_nodes_per_decade * static_cast<int>(decades))) {
      const double s = std::exp(nd.x);
      tnodes.push_back({p, s, nd.w * s});
    }
    upper = eps[p];
  }

  // Radial nodes: [0, sqrt(s)] linearly and [sqrt(s), 1] in log r.
  auto radial_nodes = [&](double s) {
    std::vector<Node> out;
    const double knee = std::min(1.0, std::sqrt(s));
    for (const Node& nd : gl_nodes(0.0, knee, opt.u_nodes)) out.push_back(nd);
    if (knee < 1.0)
      for (const Node& nd : gl_nodes(std::log(knee), 0.0, opt.u_nodes)) {
        const double r = std::exp(nd.x);
        out.push_back({r, nd.w * r});
      }
    return out;
  };

  std::vector<std::vector<double>> contrib(tnodes.size(), std::vector<double>(static_cast<std::size_t>(n_pairs), 0.0));
  parallel_for(tnodes.size(), opt.mc.workers, [&](std::size_t i) {
    const TNode& tn = tnodes[i];
    std::vector<double> u(static_cast<std::size_t>(d), 0.0), scratch;
    auto& acc = contrib[i];
    for (const Node& rn : radial_nodes(tn.s)) {
      u[0] = rn.x;
      const TwoPointModel m = two_point_model(kernel, level, 1.0 - tn.s, u);
      two_point_pairs(m, 1, z, scratch);
      const double w = tn.w * rn.w * sphere * std::pow(rn.x, d - 1) * std::exp(m.log_phi);
      for (std::size_t p = 0; p < acc.size(); ++p) acc[p] += w * scratch[p];
    }
  });

  IntegrabilityReport rep;
  std::vector<double> running(static_cast<std::size_t>(n_pairs), 0.0);
  for (std::size_t p = 0; p < eps.size(); ++p) {
    for (std::size_t i = 0; i < tnodes.size(); ++i)
      if (tnodes[i].panel == p)
        for (std::size_t q = 0; q < running.size(); ++q) running[q] += contrib[i][q];
    const MeanSe ms = mean_se(running);
    rep.epsilons.push_back(eps[p]);
    rep.integrals.push_back(ms.mean);
    rep.std_errors.push_back(ms.se);
  }

  // Off-diagonal sup over t in [0, 1], |u| in [1, far_u_max].
  auto offdiag = [&](int refine) {
    const auto s_grid = logspace(1e-3, 1.0, (opt.far_t - 1) * refine + 1);
    const auto r_grid = linspace(1.0, opt.far_u_max, (opt.far_u - 1) * refine + 1);
    std::vector<double> best(r_grid.size(), 0.0);
    parallel_for(r_grid.size(), opt.mc.workers, [&](std::size_t i) {
      std::vector<double> u(static_cast<std::size_t>(d), 0.0), scratch;
      u[0] = r_grid[i];
      double b = two_point_value(kernel, level, 1.0, u, 1, z, scratch).mean;
      for (double s : s_grid) b = std::max(b, two_point_value(kernel, level, 1.0 - s, u, 1, z, scratch).mean);
      best[i] = b;
    });
    return *std::max_element(best.begin(), best.end());
  };
  rep.offdiag_sup_coarse = offdiag(1);
  rep.offdiag_sup_fine = offdiag(2);
  return rep;
}

// ---------------------------------------------------------------- variance bound

double variance_upper_bound(const KernelSpec& kernel, double R) {
  if (!(R >= 1.0) || !std::isfinite(R)) throw InputError("variance_upper_bound: R must be at least 1");
  const int d = kernel.dimension();
  if (d > 3) throw UnsupportedError("variance_upper_bound: dimensions above 3 are not supported");

  // K~ depends on |x| only: the max of |K| over radii [rho - 1, rho + 1].
  const double dr = 0.0025;
  const double rho_max = std::sqrt(static_cast<double>(d)) * R + 1.0;
  const auto n_r = static_cast<std::size_t>(std::ceil((rho_max + 1.0) / dr)) + 2;
  std::vector<double> absk(n_r);
  for (std::size_t i = 0; i < n_r; ++i) absk[i] = std::abs(kernel.radial_value(i * dr));
  const auto half = static_cast<std::size_t>(std::lround(1.0 / dr));
  const std::size_t n_rho = n_r - half;
  std::vector<double> sup(n_rho);
  std::deque<std::size_t> window;  // indices with decreasing |K|
  std::size_t next = 0;
  for (std::size_t i = 0; i < n_rho; ++i) {
    const std::size_t hi = i + half;
    while (next <= hi) {
      while (!window.empty() && absk[window.back()] <= absk[next]) window.pop_back();
      window.push_back(next++);
    }
    const std::size_t lo = i > half ? i - half : 0;
    while (window.front() < lo) window.pop_front();
    sup[i] = absk[window.front()];
  }
  auto ktilde = [&](double rho) {
    const double x = rho / dr;
    const auto i = std::min(static_cast<std::size_t>(x), n_rho - 2);
    const double f = x - static_cast<double>(i);
    return (1.0 - f) * sup[i] + f * sup[i + 1];
  };

  // Octant symmetry: 2^d times the integral over [0, R]^d.
  auto integrate = [&](double cell) {
    const int n = static_cast<int>(std::ceil(R / cell - 1e-9));
    const double c = R / n;
    std::vector<double> sq(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) sq[i] = ((i + 0.5) * c) * ((i + 0.5) * c);
    double acc = 0.0;
    if (d == 1) {
      for (int i = 0; i < n; ++i) acc += ktilde(std::sqrt(sq[i]));
    } else if (d == 2) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) acc += ktilde(std::sqrt(sq[i] + sq[j]));
    } else {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          for (int k = 0; k < n; ++k) acc += ktilde(std::sqrt(sq[i] + sq[j] + sq[k]));
    }
    return acc * std::pow(c, d) * std::pow(2.0, d);
  };

  double cell = 0.5;
  double prev = integrate(cell);
  for (int it = 0; it < 6; ++it) {
    cell *= 0.5;
    const double cur = integrate(cell);
    const bool done = std::abs(cur - prev) < 0.01 * std::abs(cur);
    prev = cur;
    if (done) break;
  }
  return std::pow(R, d) * prev;
}

// ---------------------------------------------------------------- DC checks

bool DcAlgebraReport::passed(double tol) const {
  return instances > 0 && max_scaling_error <= tol && max_schur_error <= tol && max_monotone_violation <= tol &&
         conditioning_monotone_failures == 0;
}

DcAlgebraReport run_dc_algebra_checks(int instances, std::uint64_t seed) {
  if (instances < 1) throw InputError("dc checks: need at least one instance");
  DcAlgebraReport rep;
  rep.instances = instances;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> dim(1, 3);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); };
  const KernelSpec bf = KernelSpec::bargmann_fock(2);

  for (int n = 0; n < instances; ++n) {
    const int m1 = dim(rng), m2 = dim(rng), m = m1 + m2;
    Eigen::MatrixXd G(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) G(i, j) = normal(rng);
    const Eigen::MatrixXd S = G * G.transpose() + 0.1 * Eigen::MatrixXd::Identity(m, m);

    // DC(aX, Y) = a^(2 m1) DC(X, Y)
    const double a = 0.5 + 2.5 * unif(rng);
    Eigen::VectorXd scale = Eigen::VectorXd::Ones(m);
    scale.head(m1).setConstant(a);
    const Eigen::MatrixXd Sa = scale.asDiagonal() * S * scale.asDiagonal();
    rep.max_scaling_error = std::max(rep.max_scaling_error, rel(dc(Sa), std::pow(a, 2 * m1) * dc(S)));

    // DC(X, Y) = DC(Y) DC(X | Y) and DC(X) >= DC(X | Y)
    std::vector<std::size_t> cond;
    for (int i = m1; i < m; ++i) cond.push_back(static_cast<std::size_t>(i));
    const std::vector<double> zeros(cond.size(), 0.0);
    const ConditionalMoments cm = conditional_moments(S, cond, zeros);
    const double dc_xy = dc(S), dc_y = dc(S.bottomRightCorner(m2, m2)), dc_xgy = dc(cm.cov);
    rep.max_schur_error = std::max(rep.max_schur_error, rel(dc_xy, dc_y * dc_xgy));
    if (dc(S.topLeftCorner(m1, m1)) < dc_xgy * (1.0 - 1e-12)) ++rep.conditioning_monotone_failures;

    // DC(X, Y^t) >= DC(X, Y): cross block scaled by t.
    const double t = unif(rng);
    Eigen::MatrixXd St = S;
    St.topRightCorner(m1, m2) *= t;
    St.bottomLeftCorner(m2, m1) *= t;
    rep.max_monotone_violation = std::max(rep.max_monotone_violation, (dc_xy - dc(St)) / dc_xy);

    // The same on a jet covariance: (f(0), grad f(0)) against (f^t(u), grad f^t(u)).
    const double r = 0.05 + 2.0 * unif(rng);
    const double phi = 2.0 * kPi * unif(rng);
    const std::vector<double> u{r * std::cos(phi), r * std::sin(phi)};
    const double t2 = unif(rng);
    const double f1 = numbound_determinant(bf, 1.0, u);
    const double ft = numbound_determinant(bf, t2, u);
    rep.max_monotone_violation = std::max(rep.max_monotone_violation, (f1 - ft) / std::max(f1, ft));
  }
  return rep;
}

}  // namespace exlab
