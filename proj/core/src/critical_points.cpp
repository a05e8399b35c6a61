#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <unordered_map>

#include "exlab/error.hpp"
#include "exlab/topology.hpp"

namespace exlab {

namespace {

constexpr std::array<int, 4> kSteps{-2, -1, 1, 2};
constexpr std::array<double, 4> kWeights{1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0};

int morse_index_of(const Eigen::MatrixXd& hessian) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hessian, Eigen::EigenvaluesOnly);
  int neg = 0;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) neg += eig.eigenvalues()(i) < 0.0;
  return neg;
}

double bump(double r, double w) {
  if (r >= w) return 0.0;
  const double s = r / w;
  return std::exp(1.0 / (s * s - 1.0));
}

PivotalClass class_of(long diff) {
  if (diff == 1) return PivotalClass::Plus;
  if (diff == -1) return PivotalClass::Minus;
  if (diff == 0) return PivotalClass::Zero;
  return PivotalClass::Unresolved;
}

// Resamples the axis-aligned box [box_lo, box_hi] on the eigenframe lattice
// described at classify_pivotal. Sites outside the box, or within one
// spacing of its faces, are flagged as boundary.
PivotalClass classify_window(const BicubicInterpolant& interp, const CriticalPoint& cp, Star star,
                             const Eigen::Vector2d& box_lo, const Eigen::Vector2d& box_hi, const PivotalOptions& opt) {
  if (cp.location.size() != 2) throw UnsupportedError("pivotal classification is implemented for d = 2 only");
  if (cp.degenerate()) return PivotalClass::Unresolved;
  if (opt.resample_factor < 1) throw InputError("pivotal classification: resample_factor must be >= 1");
  const double h = interp.sample().grid.spacing / opt.resample_factor;
  const Eigen::Vector2d c(cp.location[0], cp.location[1]);
  if ((c.array() < box_lo.array()).any() || (c.array() > box_hi.array()).any())
    throw InputError("pivotal classification: critical point lies outside the box");

  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(Eigen::Matrix2d(cp.hessian));
  const Eigen::Matrix2d q = eig.eigenvectors();

  // Rotated-lattice index range covering the box corners.
  std::array<int, 2> lo{0, 0}, hi{0, 0};
  for (int corner = 0; corner < 4; ++corner) {
    const Eigen::Vector2d x((corner & 1) ? box_hi(0) : box_lo(0), (corner & 2) ? box_hi(1) : box_lo(1));
    const Eigen::Vector2d m = q.transpose() * (x - c) / h;
    for (int a = 0; a < 2; ++a) {
      lo[a] = std::min(lo[a], static_cast<int>(std::floor(m(a) + 1e-9)));
      hi[a] = std::max(hi[a], static_cast<int>(std::ceil(m(a) - 1e-9)));
    }
  }

  GridArray base;
  base.dimension = 2;
  base.extent = {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, 0};
  base.values.resize(base.size());
  base.boundary.assign(base.size(), 0);
  const double lo_dom = interp.domain_lo(), hi_dom = interp.domain_hi();
  const double tol = 1e-9 * h;
  std::vector<std::pair<std::size_t, double>> support;
  const double w = opt.bump_cells * h;
  for (int a = lo[0]; a <= hi[0]; ++a)
    for (int b = lo[1]; b <= hi[1]; ++b) {
      const std::size_t k = static_cast<std::size_t>(a - lo[0]) * base.extent[1] + (b - lo[1]);
      const Eigen::Vector2d x = c + h * (q * Eigen::Vector2d(a, b));
      bool inside = true;
      for (int ax = 0; ax < 2; ++ax)
        inside = inside && x(ax) >= box_lo(ax) + h - tol && x(ax) <= box_hi(ax) - h + tol;
      base.boundary[k] = inside ? 0 : 1;
      if (a == 0 && b == 0) {
        base.values[k] = cp.value;
      } else {
        // Flagged sites only need plausible values; clamp those beyond the interpolant.
        const Eigen::Vector2d xc = x.cwiseMax(lo_dom).cwiseMin(hi_dom);
        if (inside && (xc - x).norm() > tol)
          throw RangeError("pivotal classification: box leaves the interpolation domain");
        base.values[k] = interp.eval(xc).value;
      }
      const double r = h * std::hypot(a, b);
      if (r < w) support.emplace_back(k, bump(r, w));
    }

  PivotalClass result = PivotalClass::Unresolved;
  GridArray work = base;
  for (int halving = 0; halving < 3; ++halving) {
    const double delta = opt.delta0 / static_cast<double>(1 << halving);
    for (auto [k, b] : support) work.values[k] = base.values[k] + delta * b;
    const long up = count_star_array(work, star, cp.value);
    for (auto [k, b] : support) work.values[k] = base.values[k] - delta * b;
    const long down = count_star_array(work, star, cp.value);
    const PivotalClass cls = class_of(up - down);
    if (cls == PivotalClass::Unresolved) return cls;
    if (halving == 0) result = cls;
    else if (cls != result) return PivotalClass::Unresolved;
  }
  return result;
}

}  // namespace

// ---------------------------------------------------------------- interpolant

BicubicInterpolant::BicubicInterpolant(const FieldSample& sample)
    : sample_(&sample), n_(sample.n()), h_(sample.grid.spacing) {
  if (sample.grid.dimension != 2) throw UnsupportedError("bicubic interpolation is implemented for d = 2 only");
  if (n_ < 6) throw InputError("bicubic interpolation: grid too small");
  lo_ = sample.grid.coordinate(2);
  hi_ = sample.grid.coordinate(n_ - 3);
  const std::size_t total = static_cast<std::size_t>(n_) * n_;
  fx_.assign(total, 0.0);
  fy_.assign(total, 0.0);
  fxy_.assign(total, 0.0);
  const auto& v = sample.values;
  auto at = [&](int i, int j) { return v[flat(i, j)]; };
  for (int i = 2; i <= n_ - 3; ++i)
    for (int j = 2; j <= n_ - 3; ++j) {
      double gx = 0.0, gy = 0.0, gxy = 0.0;
      for (int s = 0; s < 4; ++s) {
        gx += kWeights[s] * at(i + kSteps[s], j);
        gy += kWeights[s] * at(i, j + kSteps[s]);
        for (int u = 0; u < 4; ++u) gxy += kWeights[s] * kWeights[u] * at(i + kSteps[s], j + kSteps[u]);
      }
      fx_[flat(i, j)] = gx / h_;
      fy_[flat(i, j)] = gy / h_;
      fxy_[flat(i, j)] = gxy / (h_ * h_);
    }
}

bool BicubicInterpolant::in_domain(const Eigen::Vector2d& x) const {
  const double tol = 1e-9 * h_;
  return x(0) >= lo_ - tol && x(0) <= hi_ + tol && x(1) >= lo_ - tol && x(1) <= hi_ + tol;
}

BicubicInterpolant::Eval BicubicInterpolant::eval(const Eigen::Vector2d& x) const {
  if (!in_domain(x)) throw RangeError("bicubic interpolation: point outside the domain");
  const GridSpec& g = sample_->grid;
  const double x0 = g.coordinate(0);
  int cell[2];
  double uv[2];
  for (int a = 0; a < 2; ++a) {
    int i = static_cast<int>(std::floor((x(a) - x0) / h_));
    i = std::clamp(i, 2, n_ - 4);
    cell[a] = i;
    uv[a] = (x(a) - g.coordinate(i)) / h_;
  }
  const int i = cell[0], j = cell[1];
  const auto& v = sample_->values;
  Eigen::Matrix4d F;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const std::size_t k = flat(i + a, j + b);
      F(a, b) = v[k];
      F(a, 2 + b) = h_ * fy_[k];
      F(2 + a, b) = h_ * fx_[k];
      F(2 + a, 2 + b) = h_ * h_ * fxy_[k];
    }
  Eigen::Matrix4d M;
  M << 1, 0, 0, 0, 0, 0, 1, 0, -3, 3, -2, -1, 2, -2, 1, 1;
  const Eigen::Matrix4d A = M * F * M.transpose();

  const double u = uv[0], w = uv[1];
  const Eigen::Vector4d U(1, u, u * u, u * u * u), dU(0, 1, 2 * u, 3 * u * u), ddU(0, 0, 2, 6 * u);
  const Eigen::Vector4d W(1, w, w * w, w * w * w), dW(0, 1, 2 * w, 3 * w * w), ddW(0, 0, 2, 6 * w);
  Eval e;
  e.value = U.dot(A * W);
  e.gradient << dU.dot(A * W) / h_, U.dot(A * dW) / h_;
  const double hxx = ddU.dot(A * W) / (h_ * h_);
  const double hyy = U.dot(A * ddW) / (h_ * h_);
  const double hxy = dU.dot(A * dW) / (h_ * h_);
  e.hessian << hxx, hxy, hxy, hyy;
  return e;
}

// ---------------------------------------------------------------- critical points

bool CriticalPoint::degenerate() const {
  return hessian.size() == 0 || std::abs(hessian.determinant()) <= kDegeneracyThreshold;
}

std::vector<CriticalPoint> find_critical_points(const FieldSample& sample, double level_lo, double level_hi,
                                                const LatticeBox& box) {
  const BicubicInterpolant interp(sample);
  return find_critical_points(interp, level_lo, level_hi, box);
}

std::vector<CriticalPoint> find_critical_points(const BicubicInterpolant& interp, double level_lo,
                                                double level_hi, const LatticeBox& box) {
  if (!(level_lo <= level_hi)) throw InputError("find_critical_points: empty level window");
  const FieldSample& s = interp.sample();
  const GridSpec& g = s.grid;
  if (box.dimension != 2) throw UnsupportedError("find_critical_points is implemented for d = 2 only");
  if (!box_within_grid(g, box)) throw RangeError("find_critical_points: box exceeds the simulated region");
  const int n = s.n();
  const double h = g.spacing;
  const double box_lo[2] = {g.coordinate(box.lo[0]), g.coordinate(box.lo[1])};
  const double box_hi[2] = {g.coordinate(box.hi[0]), g.coordinate(box.hi[1])};

  std::vector<CriticalPoint> found;
  // Spatial hash with cells of size h for the h/2 de-duplication.
  std::unordered_map<long long, std::vector<std::size_t>> buckets;
  auto key = [&](long long a, long long b) { return a * 1000003LL + b; };
  auto cell_of = [&](double x) { return static_cast<long long>(std::floor(x / h)); };

  const int i_lo = std::max(box.lo[0], 2), i_hi = std::min(box.hi[0], n - 3) - 1;
  const int j_lo = std::max(box.lo[1], 2), j_hi = std::min(box.hi[1], n - 3) - 1;
  for (int i = i_lo; i <= i_hi; ++i)
    for (int j = j_lo; j <= j_hi; ++j) {
      double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          xmin = std::min(xmin, interp.fx(i + a, j + b));
          xmax = std::max(xmax, interp.fx(i + a, j + b));
          ymin = std::min(ymin, interp.fy(i + a, j + b));
          ymax = std::max(ymax, interp.fy(i + a, j + b));
        }
      if (xmin > 0.0 || xmax < 0.0 || ymin > 0.0 || ymax < 0.0) continue;

      Eigen::Vector2d x(g.coordinate(i) + 0.5 * h, g.coordinate(j) + 0.5 * h);
      bool ok = true;
      for (int it = 0; it < 30; ++it) {
        const auto e = interp.eval(x);
        if (e.gradient.norm() == 0.0) break;
        const double det = e.hessian.determinant();
        if (det == 0.0 || !std::isfinite(det)) {
          ok = false;
          break;
        }
        Eigen::Vector2d step = -e.hessian.inverse() * e.gradient;
        const double len = step.norm();
        if (len > h) step *= h / len;
        x += step;
        if (!interp.in_domain(x)) {
          ok = false;
          break;
        }
        if (len < 1e-13 * h) break;
      }
      if (!ok) continue;
      const auto e = interp.eval(x);
      if (!(e.gradient.norm() < 1e-6)) continue;
      if (e.value < level_lo || e.value > level_hi) continue;
      if (x(0) < box_lo[0] || x(0) > box_hi[0] || x(1) < box_lo[1] || x(1) > box_hi[1]) continue;

      const long long cx = cell_of(x(0)), cy = cell_of(x(1));
      bool duplicate = false;
      for (long long a = cx - 1; a <= cx + 1 && !duplicate; ++a)
        for (long long b = cy - 1; b <= cy + 1 && !duplicate; ++b) {
          auto it = buckets.find(key(a, b));
          if (it == buckets.end()) continue;
          for (std::size_t idx : it->second) {
            const auto& q = found[idx].location;
            if (std::hypot(q[0] - x(0), q[1] - x(1)) < 0.5 * h) {
              duplicate = true;
              break;
            }
          }
        }
      if (duplicate) continue;

      CriticalPoint cp;
      cp.location = {x(0), x(1)};
      cp.value = e.value;
      cp.gradient_residual = e.gradient.norm();
      cp.hessian = e.hessian;
      cp.morse_index = morse_index_of(cp.hessian);
      buckets[key(cx, cy)].push_back(found.size());
      found.push_back(std::move(cp));
    }
  std::sort(found.begin(), found.end(), [](const CriticalPoint& a, const CriticalPoint& b) {
    return a.location < b.location;
  });
  return found;
}

CriticalPoint critical_point_at_site(const FieldSample& sample, std::span<const int> index) {
  const Jet jet = jet_extraction(sample, index);
  CriticalPoint cp;
  for (int a = 0; a < sample.grid.dimension; ++a) cp.location.push_back(sample.grid.coordinate(index[a]));
  cp.value = jet.value;
  cp.gradient_residual = jet.gradient.norm();
  cp.hessian = jet.hessian;
  cp.morse_index = morse_index_of(cp.hessian);
  return cp;
}

// ---------------------------------------------------------------- pivotal classes

PivotalClass classify_pivotal(const BicubicInterpolant& interp, const CriticalPoint& cp, Star star,
                              const LatticeBox& box, const PivotalOptions& options) {
  const GridSpec& g = interp.sample().grid;
  if (box.dimension != 2 || cp.location.size() != 2)
    throw UnsupportedError("pivotal classification is implemented for d = 2 only");
  if (!box_within_grid(g, box)) throw RangeError("pivotal classification: box exceeds the simulated region");
  const Eigen::Vector2d lo(g.coordinate(box.lo[0]), g.coordinate(box.lo[1]));
  const Eigen::Vector2d hi(g.coordinate(box.hi[0]), g.coordinate(box.hi[1]));
  return classify_window(interp, cp, star, lo, hi, options);
}

PivotalClass classify_pivotal(const FieldSample& sample, const CriticalPoint& cp, Star star,
                              const LatticeBox& box, const PivotalOptions& options) {
  const BicubicInterpolant interp(sample);
  return classify_pivotal(interp, cp, star, box, options);
}

Stabilization stabilization_radius(const BicubicInterpolant& interp, const CriticalPoint& cp, Star star,
                                   std::optional<double> r_max, const PivotalOptions& options) {
  if (cp.location.size() != 2) throw UnsupportedError("stabilization radius is implemented for d = 2 only");
  const double h = interp.sample().grid.spacing;
  Stabilization out;
  if (cp.degenerate()) return out;

  for (double r = 4.0;; r *= 2.0) {
    if (r_max && r > *r_max + 1e-9) break;
    const double half = h * std::round(0.5 * r / h);
    const Eigen::Vector2d c(cp.location[0], cp.location[1]);
    const Eigen::Vector2d corner_lo = c - Eigen::Vector2d::Constant(half);
    const Eigen::Vector2d corner_hi = c + Eigen::Vector2d::Constant(half);
    if (!interp.in_domain(corner_lo) || !interp.in_domain(corner_hi)) break;
    out.trace.emplace_back(r, classify_window(interp, cp, star, corner_lo, corner_hi, options));
  }

  const auto& t = out.trace;
  if (t.size() < 2) return out;
  const PivotalClass last = t.back().second;
  if (last == PivotalClass::Unresolved || t[t.size() - 2].second != last) return out;
  std::size_t first = t.size() - 1;
  while (first > 0 && t[first - 1].second == last) --first;
  out.cls = last;
  out.radius = t[first].first;
  return out;
}

Stabilization stabilization_radius(const FieldSample& sample, const CriticalPoint& cp, Star star,
                                   std::optional<double> r_max, const PivotalOptions& options) {
  const BicubicInterpolant interp(sample);
  return stabilization_radius(interp, cp, star, r_max, options);
}

std::vector<PivotalClass> morse_index_crosscheck(const CriticalPoint& cp, Star star, int dimension) {
  if (dimension != 2) throw UnsupportedError("morse_index_crosscheck is implemented for d = 2 only");
  using P = PivotalClass;
  switch (cp.morse_index) {
    case 0:  // local minimum: fills a hole of the excursion set
      return star == Star::ES ? std::vector<P>{P::Zero} : std::vector<P>{P::Minus};
    case 2:  // local maximum: a new component appears
      return {P::Plus};
    case 1:
      return star == Star::ES ? std::vector<P>{P::Minus, P::Zero} : std::vector<P>{P::Plus, P::Minus, P::Zero};
    default:
      throw InputError("morse_index_crosscheck: Morse index out of range for d = 2");
  }
}

void write_critical_points_csv(std::ostream& out, const std::vector<CriticalPoint>& points) {
  out << "x,y,value,index,es_class,ls_class,stab_radius\n";
  out << std::setprecision(12);
  for (const auto& p : points) {
    out << p.location.at(0) << ',' << (p.location.size() > 1 ? p.location[1] : 0.0) << ',' << p.value << ','
        << p.morse_index << ',' << to_string(p.pivotal_es) << ',' << to_string(p.pivotal_ls) << ',';
    if (p.stabilization_radius) out << *p.stabilization_radius;
    else out << "UNSTABLE";
    out << '\n';
  }
}

}  // namespace exlab
