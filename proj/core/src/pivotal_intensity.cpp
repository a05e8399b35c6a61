#include <cmath>
#include <sstream>

#include "exlab/error.hpp"
#include "exlab/kacrice.hpp"
#include "exlab/parallel.hpp"

namespace exlab {

namespace {

struct PivotalDraw {
  double abs_det = 0.0;
  PivotalClass cls = PivotalClass::Unresolved;
  bool stable = false;
};

IntensityEstimate weighted_mean(const std::vector<PivotalDraw>& draws, PivotalClass cls, double density,
                                double level) {
  long n = 0;
  double sum = 0.0, sum_sq = 0.0;
  for (const auto& d : draws) {
    if (!d.stable) continue;
    const double y = d.cls == cls ? d.abs_det : 0.0;
    ++n;
    sum += y;
    sum_sq += y * y;
  }
  IntensityEstimate est;
  est.level = level;
  est.n_samples = n;
  if (n == 0) return est;
  const double mean = sum / n;
  const double var = n > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1)) : 0.0;
  est.value = density * mean;
  est.std_error = density * std::sqrt(var / n);
  return est;
}

}  // namespace

PivotalIntensities one_point_pivotal_intensities(const KernelSpec& kernel, const GridSpec& grid, double level,
                                                 Star star, long n_samples, const PivotalSamplingOptions& options) {
  if (n_samples < 2) throw InputError("pivotal intensity: at least 2 samples are required");
  if (grid.dimension != 2) throw UnsupportedError("pivotal intensity is implemented for d = 2 only");
  grid.validate();
  if (grid.box_steps() % 2 != 0)
    throw InputError("pivotal intensity: the box must have an even number of lattice steps so 0 is a site");
  const int d = grid.dimension;
  const int centre = grid.pad_steps() + grid.box_steps() / 2;

  std::vector<JetConstraint> constraints;
  const std::vector<double> origin(static_cast<std::size_t>(d), 0.0);
  constraints.push_back({origin, std::vector<int>(static_cast<std::size_t>(d), 0), level});
  for (int a = 0; a < d; ++a) {
    std::vector<int> alpha(static_cast<std::size_t>(d), 0);
    alpha[a] = 1;
    constraints.push_back({origin, alpha, 0.0});
  }
  const ConditionalSampler sampler(kernel, grid, constraints);

  // phi(l, 0): density of (f(0), grad f(0)) at (l, 0).
  std::vector<JetLabel> labels;
  labels.push_back({origin, FieldTag::F, std::vector<int>(static_cast<std::size_t>(d), 0)});
  for (int a = 0; a < d; ++a) {
    std::vector<int> alpha(static_cast<std::size_t>(d), 0);
    alpha[a] = 1;
    labels.push_back({origin, FieldTag::F, alpha});
  }
  const JetCovariance jc = jet_covariance(kernel, std::move(labels), 1.0);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(d + 1);
  v(0) = level;
  const double density = std::exp(gaussian_log_density(jc.matrix, v));

  std::vector<PivotalDraw> draws(static_cast<std::size_t>(n_samples));
  const std::array<int, 2> site{centre, centre};
  parallel_for(draws.size(), options.workers, [&](std::size_t i) {
    const FieldSample s = sampler.sample(derive_seed(options.seed, i));
    const CriticalPoint cp = critical_point_at_site(s, site);
    PivotalDraw& out = draws[i];
    out.abs_det = std::abs(cp.hessian.determinant());
    const BicubicInterpolant interp(s);
    const Stabilization st = stabilization_radius(interp, cp, star, options.r_max, options.classify);
    out.stable = st.radius.has_value();
    out.cls = st.cls;
  });

  PivotalIntensities res;
  res.level = level;
  res.star = star;
  res.density = density;
  res.n_total = n_samples;
  for (const auto& dr : draws) res.n_unstable += dr.stable ? 0 : 1;
  if (res.unstable_fraction() > options.max_unstable_fraction) {
    std::ostringstream msg;
    msg << "pivotal intensity: " << res.n_unstable << " of " << n_samples
        << " samples have no stable class; enlarge the grid";
    throw ReliabilityError(msg.str());
  }
  res.plus = weighted_mean(draws, PivotalClass::Plus, density, level);
  res.minus = weighted_mean(draws, PivotalClass::Minus, density, level);
  res.zero = weighted_mean(draws, PivotalClass::Zero, density, level);

  long n = 0;
  double sum = 0.0, sum_sq = 0.0;
  for (const auto& dr : draws) {
    if (!dr.stable) continue;
    const double y = dr.cls == PivotalClass::Plus ? dr.abs_det : dr.cls == PivotalClass::Minus ? -dr.abs_det : 0.0;
    ++n;
    sum += y;
    sum_sq += y * y;
  }
  if (n > 0) {
    const double mean = sum / n;
    const double var = n > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1)) : 0.0;
    res.difference = density * mean;
    res.difference_se = density * std::sqrt(var / n);
  }
  return res;
}

IntensityEstimate one_point_pivotal_intensity(const KernelSpec& kernel, const GridSpec& grid, double level,
                                              Star star, PivotalClass sign, long n_samples,
                                              const PivotalSamplingOptions& options) {
  const PivotalIntensities all = one_point_pivotal_intensities(kernel, grid, level, star, n_samples, options);
  switch (sign) {
    case PivotalClass::Plus: return all.plus;
    case PivotalClass::Minus: return all.minus;
    case PivotalClass::Zero: return all.zero;
    default: throw InputError("pivotal intensity: sign must be plus, minus or zero");
  }
}

}  // namespace exlab
