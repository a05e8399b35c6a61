#include "exlab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "exlab/error.hpp"
#include "exlab/parallel.hpp"

namespace exlab {

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments moments(const std::vector<double>& x) {
  Moments m;
  const double n = static_cast<double>(x.size());
  if (x.empty()) return m;
  m.mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  if (x.size() < 2) return m;
  double ss = 0.0;
  for (double v : x) ss += (v - m.mean) * (v - m.mean);
  m.var = ss / (n - 1.0);
  return m;
}

// Unbiased covariance of (x, y) and its jackknife standard error.
std::pair<double, double> covariance_jackknife(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 3) throw InputError("covariance: at least 3 replications are required");
  const double nn = static_cast<double>(n);
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / nn;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / nn;
  // Centred sums make the leave-one-out updates exact.
  double sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) sxy += (x[i] - mx) * (y[i] - my);
  const double cov = sxy / (nn - 1.0);
  std::vector<double> loo(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    // sum over j != i of (x_j - mx_i)(y_j - my_i)
    const double s = sxy - dx * dy - dx * dy / (nn - 1.0);
    loo[i] = s / (nn - 2.0);
  }
  const double mean_loo = std::accumulate(loo.begin(), loo.end(), 0.0) / nn;
  double ss = 0.0;
  for (double v : loo) ss += (v - mean_loo) * (v - mean_loo);
  return {cov, std::sqrt((nn - 1.0) / nn * ss)};
}

std::vector<double> as_double(const std::vector<long>& v) { return {v.begin(), v.end()}; }

double sample_variance(const std::vector<long>& v) { return moments(as_double(v)).var; }

struct Ols {
  double slope, intercept, r2;
};

Ols ols(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  Ols o;
  o.slope = sxy / sxx;
  o.intercept = my - o.slope * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (o.intercept + o.slope * x[i]);
    ssr += r * r;
  }
  o.r2 = syy > 0.0 ? std::clamp(1.0 - ssr / syy, 0.0, 1.0) : 1.0;
  return o;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (sizes.empty()) throw InputError("config: sizes must not be empty");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (!(sizes[i] > 0.0)) throw InputError("config: sizes must be positive");
    if (i > 0 && !(sizes[i] > sizes[i - 1])) throw InputError("config: sizes must be strictly increasing");
  }
  if (replications < 3) throw InputError("config: replications must be at least 3");
  if (t_grid.empty()) throw InputError("config: t_grid must not be empty");
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    if (!(t_grid[i] >= 0.0 && t_grid[i] <= 1.0)) throw InputError("config: t_grid values must lie in [0, 1]");
    if (i > 0 && !(t_grid[i] > t_grid[i - 1])) throw InputError("config: t_grid must be strictly increasing");
  }
  if (t_grid.front() != 0.0 || t_grid.back() != 1.0) throw InputError("config: t_grid must include 0 and 1");
  if (kernel.dimension() != 2 && kernel.dimension() != 3)
    throw InputError("config: simulations support d = 2 or 3");
  for (double R : sizes) grid(R).validate();
}

GridSpec ExperimentConfig::grid(double side_length) const {
  GridSpec g;
  g.dimension = kernel.dimension();
  g.side_length = side_length;
  g.spacing = spacing;
  g.padding = padding;
  return g;
}

FieldSample draw_field(const ExperimentConfig& config, const GridSpec& grid, std::uint64_t seed) {
  if (config.kernel.family() == KernelFamily::RandomPlaneWave)
    return sample_rpw(grid, config.n_waves, seed, config.kernel.wave_number());
  return sample_field(config.kernel, grid, seed);
}

long count_star(const FieldSample& sample, Star star, double level) {
  const LatticeBox box = central_box(sample.grid);
  return star == Star::ES ? count_excursion_components(sample, level, box).n_excursion
                          : count_level_components(sample, level, box);
}

namespace {

// Samples with the embedding factored once per grid.
class Sampler {
 public:
  Sampler(const ExperimentConfig& config, const GridSpec& grid) : config_(config), grid_(grid) {
    if (config.kernel.family() != KernelFamily::RandomPlaneWave) embedding_.emplace(config.kernel, grid);
  }

  FieldSample operator()(std::uint64_t seed) const {
    if (embedding_) return embedding_->sample(seed);
    return sample_rpw(grid_, config_.n_waves, seed, config_.kernel.wave_number());
  }

 private:
  const ExperimentConfig& config_;
  GridSpec grid_;
  std::optional<CirculantEmbedding> embedding_;
};

template <typename F>
void run_replications(int count, int workers, F&& body) {
  parallel_for(static_cast<std::size_t>(count), workers, [&](std::size_t i) {
    auto describe = [i](const Error& e) {
      std::ostringstream msg;
      msg << "replication " << i << " failed: " << e.what();
      return msg.str();
    };
    try {
      body(i);
    } catch (const SynthesisError& e) {
      throw SynthesisError(describe(e));
    } catch (const Error& e) {
      throw Error(describe(e));
    }
  });
}

void require_variance_replications(const ExperimentConfig& config) {
  if (config.replications < 50) throw InputError("config: variance estimates need replications >= 50");
}

}  // namespace

VarianceTable run_variance_scan(const ExperimentConfig& config) {
  config.validate();
  require_variance_replications(config);
  VarianceTable table;
  for (std::size_t k = 0; k < config.sizes.size(); ++k) {
    const double R = config.sizes[k];
    const GridSpec grid = config.grid(R);
    const Sampler sampler(config, grid);
    VarianceRow row;
    row.R = R;
    row.counts.assign(static_cast<std::size_t>(config.replications), 0);
    const std::uint64_t size_seed = derive_seed(config.master_seed, k);
    run_replications(config.replications, config.workers, [&](std::size_t i) {
      row.counts[i] = count_star(sampler(derive_seed(size_seed, i)), config.star, config.level);
    });
    const auto x = as_double(row.counts);
    const Moments m = moments(x);
    row.mean_N = m.mean;
    std::tie(row.var_N, row.se_var) = covariance_jackknife(x, x);
    table.push_back(std::move(row));
  }
  return table;
}

ScalingFit fit_scaling(const VarianceTable& table, int resamples, std::uint64_t seed) {
  if (table.size() < 4) throw FitError("fit_scaling: at least 4 sizes are required");
  std::vector<double> lx, ly;
  for (const auto& r : table) {
    if (!(r.R > 0.0)) throw FitError("fit_scaling: non-positive size");
    if (!(r.var_N > 0.0)) {
      std::ostringstream msg;
      msg << "fit_scaling: zero variance at R = " << r.R;
      throw FitError(msg.str());
    }
    lx.push_back(std::log(r.R));
    ly.push_back(std::log(r.var_N));
  }
  const Ols o = ols(lx, ly);
  ScalingFit fit;
  fit.slope = o.slope;
  fit.intercept = o.intercept;
  fit.r_squared = o.r2;
  fit.slope_ci_95 = {o.slope, o.slope};

  const bool have_counts =
      std::all_of(table.begin(), table.end(), [](const VarianceRow& r) { return r.counts.size() >= 2; });
  if (have_counts && resamples > 0) {
    std::mt19937_64 rng(seed);
    std::vector<double> slopes;
    slopes.reserve(static_cast<std::size_t>(resamples));
    std::vector<long> boot;
    for (int b = 0; b < resamples; ++b) {
      std::vector<double> by;
      bool degenerate = false;
      for (const auto& r : table) {
        std::uniform_int_distribution<std::size_t> pick(0, r.counts.size() - 1);
        boot.resize(r.counts.size());
        for (auto& c : boot) c = r.counts[pick(rng)];
        const double v = sample_variance(boot);
        if (!(v > 0.0)) {
          degenerate = true;
          break;
        }
        by.push_back(std::log(v));
      }
      if (!degenerate) slopes.push_back(ols(lx, by).slope);
    }
    if (slopes.size() >= 20) {
      std::sort(slopes.begin(), slopes.end());
      auto quantile = [&](double q) {
        const double pos = q * (slopes.size() - 1);
        const auto i = static_cast<std::size_t>(pos);
        const double f = pos - i;
        return i + 1 < slopes.size() ? (1.0 - f) * slopes[i] + f * slopes[i + 1] : slopes[i];
      };
      fit.slope_ci_95 = {std::min(quantile(0.025), o.slope), std::max(quantile(0.975), o.slope)};
    }
  }
  return fit;
}

std::vector<InterpolationRow> run_interpolation_scan(const ExperimentConfig& config) {
  config.validate();
  require_variance_replications(config);
  const GridSpec grid = config.grid(config.sizes.front());
  const Sampler sampler(config, grid);
  const std::size_t nt = config.t_grid.size();
  const auto M = static_cast<std::size_t>(config.replications);
  std::vector<double> base(M);
  std::vector<std::vector<double>> at_t(nt, std::vector<double>(M));
  run_replications(config.replications, config.workers, [&](std::size_t i) {
    const std::uint64_t s = derive_seed(config.master_seed, i);
    const FieldSample f = sampler(derive_seed(s, 0));
    const FieldSample g = sampler(derive_seed(s, 1));
    base[i] = static_cast<double>(count_star(f, config.star, config.level));
    for (std::size_t k = 0; k < nt; ++k)
      at_t[k][i] = static_cast<double>(count_star(make_interpolation(f, g, config.t_grid[k]), config.star, config.level));
  });
  std::vector<InterpolationRow> out;
  for (std::size_t k = 0; k < nt; ++k) {
    const auto [cov, se] = covariance_jackknife(base, at_t[k]);
    out.push_back({config.t_grid[k], cov, se});
  }
  return out;
}

ShapeReport check_monotone_convex(const std::vector<InterpolationRow>& c, double n_se) {
  if (c.size() < 5) throw InputError("check_monotone_convex: at least 5 t-points are required");
  ShapeReport rep;
  for (std::size_t i = 0; i + 1 < c.size(); ++i) {
    const double diff = c[i + 1].cov_hat - c[i].cov_hat;
    const double se = std::hypot(c[i].se, c[i + 1].se);
    if (diff < -n_se * se) rep.monotonicity_violations.push_back(static_cast<int>(i));
  }
  for (std::size_t i = 1; i + 1 < c.size(); ++i) {
    const double h0 = c[i].t - c[i - 1].t;
    const double h1 = c[i + 1].t - c[i].t;
    // Second divided difference: a c_{i-1} + b c_i + e c_{i+1}.
    const double a = 2.0 / (h0 * (h0 + h1));
    const double b = -2.0 / (h0 * h1);
    const double e = 2.0 / (h1 * (h0 + h1));
    const double d2 = a * c[i - 1].cov_hat + b * c[i].cov_hat + e * c[i + 1].cov_hat;
    const double se = std::sqrt(a * a * c[i - 1].se * c[i - 1].se + b * b * c[i].se * c[i].se +
                                e * e * c[i + 1].se * c[i + 1].se);
    if (d2 < -n_se * se) rep.convexity_violations.push_back(static_cast<int>(i));
  }
  return rep;
}

SigmaEstimate estimate_sigma_squared(const VarianceTable& table, int d) {
  if (table.empty()) throw InputError("estimate_sigma_squared: empty table");
  SigmaEstimate est;
  const VarianceRow& last = table.back();
  est.plain = last.var_N / std::pow(last.R, d);
  est.plain_se = last.se_var / std::pow(last.R, d);
  if (table.size() < 2) {
    est.sigma2_hat = est.plain;
    est.se = est.plain_se;
    return est;
  }
  const VarianceRow& prev = table[table.size() - 2];
  // var = s R^d + c R^{d-1}  =>  var / R^{d-1} = s R + c
  const double b1 = prev.var_N / std::pow(prev.R, d - 1), b2 = last.var_N / std::pow(last.R, d - 1);
  const double s1 = prev.se_var / std::pow(prev.R, d - 1), s2 = last.se_var / std::pow(last.R, d - 1);
  const double span = last.R - prev.R;
  est.sigma2_hat = (b2 - b1) / span;
  est.se = std::hypot(s1, s2) / span;
  return est;
}

MuDerivative estimate_mu_derivative(const KernelSpec& kernel, const GridSpec& grid, double level, double dlevel,
                                    int replications, Star star, std::uint64_t seed, int workers) {
  if (!(dlevel >= 0.02 && dlevel <= 0.2)) throw InputError("estimate_mu_derivative: dlevel must lie in [0.02, 0.2]");
  if (replications < 2) throw InputError("estimate_mu_derivative: at least 2 replications are required");
  ExperimentConfig cfg;
  cfg.kernel = kernel;
  cfg.spacing = grid.spacing;
  cfg.padding = grid.padding;
  const Sampler sampler(cfg, grid);
  const double volume = std::pow(grid.side_length, grid.dimension);
  std::vector<double> diff(static_cast<std::size_t>(replications)), mid(diff.size());
  run_replications(replications, workers, [&](std::size_t i) {
    const FieldSample f = sampler(derive_seed(seed, i));
    const double up = static_cast<double>(count_star(f, star, level + dlevel));
    const double down = static_cast<double>(count_star(f, star, level - dlevel));
    diff[i] = (up - down) / (2.0 * dlevel * volume);
    mid[i] = static_cast<double>(count_star(f, star, level)) / volume;
  });
  const Moments md = moments(diff), mm = moments(mid);
  MuDerivative out;
  out.replications = replications;
  out.dmu_hat = md.mean;
  out.se = std::sqrt(md.var / replications);
  out.mu_hat = mm.mean;
  out.mu_se = std::sqrt(mm.var / replications);
  return out;
}

RefinementStudy run_h_refinement_study(const ExperimentConfig& config, const std::vector<double>& h_list) {
  if (h_list.size() < 2) throw InputError("h refinement: at least two spacings are required");
  for (std::size_t i = 1; i < h_list.size(); ++i)
    if (!(h_list[i] < h_list[i - 1])) throw InputError("h refinement: spacings must be decreasing");
  RefinementStudy study;
  const double R = config.sizes.front();
  for (std::size_t k = 0; k < h_list.size(); ++k) {
    ExperimentConfig c = config;
    c.spacing = h_list[k];
    const GridSpec grid = c.grid(R);
    grid.validate();
    const Sampler sampler(c, grid);
    const double volume = std::pow(R, grid.dimension);
    std::vector<double> dens(static_cast<std::size_t>(c.replications));
    run_replications(c.replications, c.workers, [&](std::size_t i) {
      dens[i] = static_cast<double>(count_star(sampler(derive_seed(c.master_seed, i)), c.star, c.level)) / volume;
    });
    const Moments m = moments(dens);
    study.rows.push_back({h_list[k], m.mean, std::sqrt(m.var / c.replications)});
  }
  const auto& a = study.rows[study.rows.size() - 2];
  const auto& b = study.rows.back();
  const double ratio = a.h / b.h;
  study.extrapolated = b.density + (b.density - a.density) / (ratio * ratio - 1.0);
  for (std::size_t k = 0; k + 1 < study.rows.size(); ++k) {
    const double x = study.rows[k].density, y = study.rows[k + 1].density;
    const bool close = (x == y) || (y != 0.0 && std::abs(x - y) / std::abs(y) < 0.01);
    if (close) {
      study.converged_h = study.rows[k].h;
      break;
    }
  }
  return study;
}

}  // namespace exlab
