#include "commands.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "exlab/kacrice.hpp"
#include "exlab/parallel.hpp"
#include "json.hpp"

namespace exlab::cli {

namespace {

using json = nlohmann::ordered_json;

class Outputs {
 public:
  Outputs(std::filesystem::path dir, RunManifest& manifest) : dir_(std::move(dir)), manifest_(manifest) {}

  std::ofstream open(const std::string& name) {
    const auto path = dir_ / name;
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    pending_.push_back(path);
    return out;
  }

  void write_json(const std::string& name, const json& j) {
    auto out = open(name);
    out << j.dump(2) << '\n';
  }

  const std::filesystem::path& dir() const { return dir_; }

  void track(const std::filesystem::path& path) { pending_.push_back(path); }

  // Registers files with the manifest once their streams are closed.
  ~Outputs() {
    for (const auto& p : pending_) manifest_.add_output(p);
  }

 private:
  std::filesystem::path dir_;
  RunManifest& manifest_;
  std::vector<std::filesystem::path> pending_;
};

json interval(std::pair<double, double> ci) { return json::array({ci.first, ci.second}); }

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
  }
  return sxy / sxx;
}

int cmd_sample(const RunConfig& cfg, Outputs& out) {
  const ExperimentConfig& e = cfg.experiment;
  const GridSpec grid = e.grid(e.sizes.front());
  const FieldSample s = draw_field(e, grid, e.master_seed);
  write_field_binary(out.dir() / "field.exlb", s);
  out.track(out.dir() / "field.exlb");

  double mean = 0.0, sq = 0.0, lo = s.values.front(), hi = s.values.front();
  for (double v : s.values) {
    mean += v;
    sq += v * v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double n = static_cast<double>(s.values.size());
  json j;
  j["kernel"] = e.kernel.describe();
  j["R"] = grid.side_length;
  j["h"] = grid.spacing;
  j["points_per_axis"] = grid.points_per_axis();
  j["seed"] = e.master_seed;
  j["mean"] = mean / n;
  j["variance"] = sq / n - (mean / n) * (mean / n);
  j["min"] = lo;
  j["max"] = hi;

  if (grid.dimension == 2) {
    const BicubicInterpolant interp(s);
    auto points = find_critical_points(interp, -std::numeric_limits<double>::infinity(),
                                       std::numeric_limits<double>::infinity(), central_box(grid));
    parallel_for(points.size(), e.workers, [&](std::size_t i) {
      CriticalPoint& cp = points[i];
      const Stabilization es = stabilization_radius(interp, cp, Star::ES, cfg.r_max);
      const Stabilization ls = stabilization_radius(interp, cp, Star::LS, cfg.r_max);
      cp.pivotal_es = es.cls;
      cp.pivotal_ls = ls.cls;
      cp.stabilization_radius = (e.star == Star::ES ? es : ls).radius;
    });
    long n_unstable = 0, n_degenerate = 0;
    for (const auto& cp : points) {
      n_unstable += cp.stabilization_radius ? 0 : 1;
      n_degenerate += cp.degenerate() ? 1 : 0;
    }
    auto csv = out.open("critical_points.csv");
    write_critical_points_csv(csv, points);
    j["critical_points"] = points.size();
    j["critical_points_per_unit_area"] = static_cast<double>(points.size()) / std::pow(grid.side_length, 2);
    j["unstable"] = n_unstable;
    j["degenerate"] = n_degenerate;
  }
  const ComponentCount c = count_components(s, e.level, central_box(grid));
  j["level"] = e.level;
  j["n_excursion"] = c.n_excursion;
  if (c.n_level) j["n_level"] = *c.n_level;
  j["n_boundary_touching"] = c.n_boundary_touching;
  out.write_json("sample_summary.json", j);
  return kExitOk;
}

int cmd_count(const RunConfig& cfg, Outputs& out) {
  const ExperimentConfig& e = cfg.experiment;
  auto csv = out.open("count.csv");
  csv << "R,level,seed,n_excursion,n_level,n_boundary_touching\n";
  for (std::size_t k = 0; k < e.sizes.size(); ++k) {
    const GridSpec grid = e.grid(e.sizes[k]);
    const std::uint64_t seed = derive_seed(e.master_seed, k);
    const FieldSample s = draw_field(e, grid, seed);
    const ComponentCount c = count_components(s, e.level, central_box(grid));
    csv << grid.side_length << ',' << e.level << ',' << seed << ',' << c.n_excursion << ',';
    if (c.n_level) csv << *c.n_level;
    csv << ',' << c.n_boundary_touching << '\n';
  }
  return kExitOk;
}

int cmd_var_scan(const RunConfig& cfg, Outputs& out) {
  const ExperimentConfig& e = cfg.experiment;
  const VarianceTable table = run_variance_scan(e);
  {
    auto csv = out.open("var_scan.csv");
    csv << "R,mean_N,var_N,se_var\n";
    for (const auto& r : table) csv << r.R << ',' << r.mean_N << ',' << r.var_N << ',' << r.se_var << '\n';
    auto dat = out.open("var_scan.dat");
    dat << "# log(R) log(var_N)\n";
    for (const auto& r : table)
      if (r.var_N > 0.0) dat << std::log(r.R) << ' ' << std::log(r.var_N) << '\n';
  }
  json j;
  j["kernel"] = e.kernel.describe();
  j["star"] = std::string(to_string(e.star));
  j["level"] = e.level;
  j["replications"] = e.replications;
  int code = kExitOk;
  const SigmaEstimate sig = estimate_sigma_squared(table, e.kernel.dimension());
  j["sigma2_hat"] = sig.sigma2_hat;
  j["sigma2_se"] = sig.se;
  j["sigma2_plain"] = sig.plain;
  j["sigma2_plain_se"] = sig.plain_se;
  bool fitted = false;
  if (table.size() >= 4) {
    try {
      const ScalingFit fit = fit_scaling(table, 1000, e.master_seed);
      fitted = true;
      j["slope"] = fit.slope;
      j["intercept"] = fit.intercept;
      j["slope_ci_95"] = interval(fit.slope_ci_95);
      j["r_squared"] = fit.r_squared;
      if (const auto expected = expected_variance_exponent(e.kernel)) {
        const bool in_window = std::abs(fit.slope - *expected) <= 0.4;
        const bool ci_overlaps = fit.slope_ci_95.first <= *expected && *expected <= fit.slope_ci_95.second;
        j["expected_slope"] = *expected;
        j["slope_in_window"] = in_window;
        j["ci_contains_expected"] = ci_overlaps;
        if (!in_window) code = kExitCheckFailed;
      }
    } catch (const FitError& err) {
      j["fit_error"] = err.what();
    }
  }
  if (!fitted && !j.contains("fit_error")) j["fit_error"] = "fewer than 4 sizes";
  out.write_json("var_scan_summary.json", j);
  return code;
}

int cmd_interp_scan(const RunConfig& cfg, Outputs& out) {
  const ExperimentConfig& e = cfg.experiment;
  const auto curve = run_interpolation_scan(e);
  {
    auto csv = out.open("interp_scan.csv");
    csv << "t,cov_hat,se\n";
    for (const auto& r : curve) csv << r.t << ',' << r.cov_hat << ',' << r.se << '\n';
    auto dat = out.open("interp_scan.dat");
    dat << "# t cov_hat\n";
    for (const auto& r : curve) dat << r.t << ' ' << r.cov_hat << '\n';
  }
  json j;
  j["R"] = e.sizes.front();
  j["replications"] = e.replications;
  const auto& first = curve.front();
  const double z0 = first.se > 0.0 ? first.cov_hat / first.se : 0.0;
  j["cov_hat_0"] = first.cov_hat;
  j["z_0"] = z0;
  j["cov_hat_1"] = curve.back().cov_hat;
  int code = std::abs(z0) <= 3.0 ? kExitOk : kExitCheckFailed;
  if (curve.size() >= 5) {
    const ShapeReport rep = check_monotone_convex(curve);
    j["monotonicity_violations"] = rep.monotonicity_violations;
    j["convexity_violations"] = rep.convexity_violations;
    if (!rep.ok()) code = kExitCheckFailed;
  }
  out.write_json("interp_scan_summary.json", j);
  return code;
}

int cmd_intensity(const RunConfig& cfg, Outputs& out) {
  const ExperimentConfig& e = cfg.experiment;
  MonteCarloOptions mc;
  mc.n_samples = std::max(cfg.samples, 1000L);
  mc.seed = e.master_seed;
  mc.workers = e.workers;
  const int d = e.kernel.dimension();
  auto csv = out.open("intensity.csv");
  csv << "level,morse_index,value,se\n";
  json j;
  j["kernel"] = e.kernel.describe();
  j["level"] = e.level;
  for (int idx = 0; idx <= d; ++idx) {
    const auto est = one_point_critical_intensity(e.kernel, e.level, idx, mc);
    csv << e.level << ',' << idx << ',' << est.value << ',' << est.std_error << '\n';
  }
  const auto total = one_point_critical_intensity(e.kernel, e.level, std::nullopt, mc);
  csv << e.level << ",all," << total.value << ',' << total.std_error << '\n';
  const auto integrated = integrated_critical_intensity(e.kernel, -6.0, 6.0, 49, std::nullopt, mc);
  j["one_point_total"] = total.value;
  j["one_point_total_se"] = total.std_error;
  j["critical_density_all_levels"] = integrated.value;
  j["critical_density_all_levels_se"] = integrated.std_error;
  out.write_json("intensity_summary.json", j);
  return kExitOk;
}

int cmd_pivotal(const RunConfig& cfg, Outputs& out) {
  const ExperimentConfig& e = cfg.experiment;
  GridSpec pgrid = e.grid(32.0);
  PivotalSamplingOptions po;
  po.seed = e.master_seed;
  po.workers = e.workers;
  po.r_max = cfg.r_max;
  const PivotalIntensities piv = one_point_pivotal_intensities(e.kernel, pgrid, e.level, e.star, cfg.samples, po);
  const GridSpec mgrid = e.grid(e.sizes.back());
  const MuDerivative mu = estimate_mu_derivative(e.kernel, mgrid, e.level, cfg.dlevel, e.replications, e.star,
                                                 derive_seed(e.master_seed, 1), e.workers);
  const double se = std::hypot(piv.difference_se, mu.se);
  // A positively pivotal point is one where raising the field adds a
  // component, so raising the level removes it: dmu/dl = I- - I+.
  const double gap = piv.difference + mu.dmu_hat;
  const bool agrees = std::abs(gap) <= 3.0 * se;
  const bool reliable = piv.unstable_fraction() < 0.1;
  json j;
  j["kernel"] = e.kernel.describe();
  j["star"] = std::string(to_string(e.star));
  j["level"] = e.level;
  j["I_plus"] = piv.plus.value;
  j["I_plus_se"] = piv.plus.std_error;
  j["I_minus"] = piv.minus.value;
  j["I_minus_se"] = piv.minus.std_error;
  j["I_zero"] = piv.zero.value;
  j["I_plus_minus_I_minus"] = piv.difference;
  j["I_plus_minus_I_minus_se"] = piv.difference_se;
  j["unstable_fraction"] = piv.unstable_fraction();
  j["samples"] = piv.n_total;
  j["mu_hat"] = mu.mu_hat;
  j["dmu_dlevel"] = mu.dmu_hat;
  j["dmu_dlevel_se"] = mu.se;
  j["dmu_R"] = mgrid.side_length;
  j["combined_se"] = se;
  j["difference_plus_dmu"] = gap;
  j["agrees_within_3se"] = agrees;
  out.write_json("pivotal_summary.json", j);
  return agrees && reliable ? kExitOk : kExitCheckFailed;
}

int cmd_bound(const RunConfig& cfg, Outputs& out) {
  const ExperimentConfig& e = cfg.experiment;
  std::vector<double> rs = e.sizes, bs;
  {
    auto csv = out.open("bound.csv");
    csv << "R,bound\n";
    auto dat = out.open("bound.dat");
    dat << "# log(R) log(bound)\n";
    for (double R : rs) {
      const double b = variance_upper_bound(e.kernel, R);
      bs.push_back(b);
      csv << R << ',' << b << '\n';
      dat << std::log(R) << ' ' << std::log(b) << '\n';
    }
  }
  json j;
  j["kernel"] = e.kernel.describe();
  int code = kExitOk;
  if (rs.size() >= 2) {
    const double slope = loglog_slope(rs, bs);
    j["slope"] = slope;
    if (const auto expected = expected_bound_exponent(e.kernel)) {
      j["expected_slope"] = *expected;
      j["within_0_1"] = std::abs(slope - *expected) <= 0.1;
      if (std::abs(slope - *expected) > 0.1) code = kExitCheckFailed;
    }
  }
  out.write_json("bound_summary.json", j);
  return code;
}

int cmd_kacrice_check(const RunConfig& cfg, Outputs& out) {
  const ExperimentConfig& e = cfg.experiment;
  const DcAlgebraReport alg = run_dc_algebra_checks(50, e.master_seed);
  json j;
  j["dc_instances"] = alg.instances;
  j["max_scaling_error"] = alg.max_scaling_error;
  j["max_schur_error"] = alg.max_schur_error;
  j["max_monotone_violation"] = alg.max_monotone_violation;
  j["conditioning_monotone_failures"] = alg.conditioning_monotone_failures;
  j["dc_algebra_passed"] = alg.passed();
  bool ok = alg.passed();
  const NumboundReport nb = dc_lower_bound_check(e.kernel);
  j["numbound_min_ratio_coarse"] = nb.min_ratio_coarse;
  j["numbound_min_ratio_fine"] = nb.min_ratio_fine;
  j["numbound_min_far_coarse"] = nb.min_far_coarse;
  j["numbound_min_far_fine"] = nb.min_far_fine;
  j["numbound_max_increase_in_t"] = nb.max_increase_in_t;
  j["numbound_positive"] = nb.positive();
  j["numbound_stable"] = nb.stable();
  ok = ok && nb.positive() && nb.stable();
  out.write_json("kacrice_check.json", j);
  return ok ? kExitOk : kExitCheckFailed;
}

int cmd_refine(const RunConfig& cfg, Outputs& out) {
  const RefinementStudy study = run_h_refinement_study(cfg.experiment, cfg.h_list);
  {
    auto csv = out.open("refine.csv");
    csv << "h,density,se\n";
    for (const auto& r : study.rows) csv << r.h << ',' << r.density << ',' << r.se << '\n';
  }
  json j;
  j["R"] = cfg.experiment.sizes.front();
  j["extrapolated_density"] = study.extrapolated;
  if (study.converged_h) j["converged_h"] = *study.converged_h;
  else j["converged_h"] = nullptr;
  out.write_json("refine_summary.json", j);
  return kExitOk;
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"sample",    "count", "var-scan", "interp-scan",   "intensity",
                                              "pivotal",   "bound", "kacrice-check", "refine"};
  return names;
}

std::string usage() {
  std::ostringstream os;
  os << "usage: exlab <subcommand> --config PATH --out DIR [--seed U64] [--workers N]\n"
     << "subcommands:";
  for (const auto& s : subcommands()) os << ' ' << s;
  os << '\n';
  return os.str();
}

std::optional<double> expected_variance_exponent(const KernelSpec& kernel) {
  const int d = kernel.dimension();
  switch (kernel.family()) {
    case KernelFamily::BargmannFock: return d;
    case KernelFamily::Cauchy: return 2.0 * d - kernel.beta();
    default: return std::nullopt;
  }
}

std::optional<double> expected_bound_exponent(const KernelSpec& kernel) {
  const int d = kernel.dimension();
  switch (kernel.family()) {
    case KernelFamily::BargmannFock: return d;
    case KernelFamily::Cauchy: return 2.0 * d - kernel.beta();
    case KernelFamily::RandomPlaneWave:
    case KernelFamily::Monochromatic: return (3.0 * d + 1.0) / 2.0;
    default: return std::nullopt;
  }
}

int dispatch(std::string_view sub, const RunConfig& config, const std::filesystem::path& out_dir,
             RunManifest& manifest) {
  Outputs out(out_dir, manifest);
  if (sub == "sample") return cmd_sample(config, out);
  if (sub == "count") return cmd_count(config, out);
  if (sub == "var-scan") return cmd_var_scan(config, out);
  if (sub == "interp-scan") return cmd_interp_scan(config, out);
  if (sub == "intensity") return cmd_intensity(config, out);
  if (sub == "pivotal") return cmd_pivotal(config, out);
  if (sub == "bound") return cmd_bound(config, out);
  if (sub == "kacrice-check") return cmd_kacrice_check(config, out);
  if (sub == "refine") return cmd_refine(config, out);
  throw InputError("unknown subcommand '" + std::string(sub) + "'");
}

}  // namespace exlab::cli
