#include "exlab/field.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>

#include <fftw3.h>

#include "exlab/error.hpp"

namespace exlab {

namespace {

constexpr double kPi = std::numbers::pi;

int checked_steps(double length, double h, const char* what) {
  const double ratio = length / h;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio))
    throw InputError(std::string("grid: ") + what + " is not an integer multiple of the spacing");
  return static_cast<int>(rounded);
}

// FFTW's planner is not thread-safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n)
      : data(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
    if (!data) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  fftw_complex* data;
};

fftw_plan make_plan(int d, int m, fftw_complex* buf) {
  std::vector<int> dims(static_cast<std::size_t>(d), m);
  std::lock_guard lock(planner_mutex());
  fftw_plan p = fftw_plan_dft(d, dims.data(), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  if (!p) throw SynthesisError("FFTW could not create a plan");
  return p;
}

void destroy_plan(fftw_plan p) {
  if (!p) return;
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(p);
}

std::size_t ipow(std::size_t base, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

// Unflatten a row-major index with `m` points per axis into `out`.
void unflatten(std::size_t flat, int d, int m, std::array<int, 3>& out) {
  for (int a = d - 1; a >= 0; --a) {
    out[a] = static_cast<int>(flat % static_cast<std::size_t>(m));
    flat /= static_cast<std::size_t>(m);
  }
}

}  // namespace

// ---------------------------------------------------------------- grid

void GridSpec::validate() const {
  if (dimension != 2 && dimension != 3) throw InputError("grid: dimension must be 2 or 3");
  if (!(side_length > 0.0) || !std::isfinite(side_length)) throw InputError("grid: side length must be positive");
  if (!(spacing > 0.0) || !std::isfinite(spacing)) throw InputError("grid: spacing must be positive");
  if (spacing > 0.5) throw InputError("grid: spacing must be at most 0.5");
  if (!(padding >= 0.0) || !std::isfinite(padding)) throw InputError("grid: padding must be nonnegative");
  if (checked_steps(side_length, spacing, "side length") < 8)
    throw InputError("grid: side length must span at least 8 lattice steps");
}

int GridSpec::box_steps() const { return checked_steps(side_length, spacing, "side length"); }

int GridSpec::pad_steps() const { return static_cast<int>(std::ceil(padding / spacing - 1e-9)); }

int GridSpec::points_per_axis() const { return box_steps() + 2 * pad_steps() + 1; }

std::size_t GridSpec::total_points() const {
  return ipow(static_cast<std::size_t>(points_per_axis()), dimension);
}

double GridSpec::coordinate(int index) const {
  return -0.5 * side_length + static_cast<double>(index - pad_steps()) * spacing;
}

int GridSpec::nearest_index(double x) const {
  return static_cast<int>(std::lround((x + 0.5 * side_length) / spacing)) + pad_steps();
}

bool LatticeBox::contains(std::span<const int> index) const {
  for (int a = 0; a < dimension; ++a)
    if (index[a] < lo[a] || index[a] > hi[a]) return false;
  return true;
}

LatticeBox central_box(const GridSpec& grid) {
  LatticeBox box;
  box.dimension = grid.dimension;
  for (int a = 0; a < grid.dimension; ++a) {
    box.lo[a] = grid.pad_steps();
    box.hi[a] = grid.pad_steps() + grid.box_steps();
  }
  return box;
}

LatticeBox box_around(const GridSpec& grid, std::span<const int> center, double side) {
  const int half = static_cast<int>(std::lround(0.5 * side / grid.spacing));
  LatticeBox box;
  box.dimension = grid.dimension;
  for (int a = 0; a < grid.dimension; ++a) {
    box.lo[a] = center[a] - half;
    box.hi[a] = center[a] + half;
  }
  return box;
}

bool box_within_grid(const GridSpec& grid, const LatticeBox& box) {
  const int n = grid.points_per_axis();
  for (int a = 0; a < grid.dimension; ++a)
    if (box.lo[a] < 0 || box.hi[a] >= n) return false;
  return true;
}

FieldSample::FieldSample(GridSpec g, KernelSpec k, std::uint64_t s, std::vector<double> v)
    : grid(g), kernel(std::move(k)), seed(s), values(std::move(v)) {
  if (values.size() != grid.total_points()) throw InputError("field sample: value count does not match grid");
}

std::size_t FieldSample::index(std::span<const int> idx) const {
  std::size_t flat = 0;
  const auto m = static_cast<std::size_t>(n());
  for (int a = 0; a < grid.dimension; ++a) flat = flat * m + static_cast<std::size_t>(idx[a]);
  return flat;
}

// ---------------------------------------------------------------- embedding

struct CirculantEmbedding::Impl {
  KernelSpec kernel;
  GridSpec grid;
  int m = 0;                       // torus points per axis
  std::vector<double> amplitude;   // sqrt(lambda_k / M)
  fftw_plan plan = nullptr;
  double min_ratio = 0.0;

  Impl(KernelSpec k, GridSpec g) : kernel(std::move(k)), grid(g) {}
  ~Impl() { destroy_plan(plan); }
};

CirculantEmbedding::CirculantEmbedding(KernelSpec kernel, GridSpec grid) {
  grid.validate();
  if (kernel.dimension() != grid.dimension)
    throw InputError("circulant embedding: kernel and grid dimensions differ");
  if (kernel.family() == KernelFamily::RandomPlaneWave)
    throw UnsupportedError("circulant embedding: use sample_rpw for the random plane wave");

  impl_ = std::make_unique<Impl>(std::move(kernel), grid);
  const int d = grid.dimension;
  const int n = grid.points_per_axis();
  const double h = grid.spacing;

  for (int factor : {1, 2, 4}) {
    const int m = 2 * (n - 1) * factor;
    const std::size_t total = ipow(static_cast<std::size_t>(m), d);
    FftwBuffer buf(total);
    fftw_plan plan = make_plan(d, m, buf.data);

    std::array<int, 3> idx{};
    std::vector<double> x(static_cast<std::size_t>(d));
    for (std::size_t f = 0; f < total; ++f) {
      unflatten(f, d, m, idx);
      for (int a = 0; a < d; ++a) x[a] = h * std::min(idx[a], m - idx[a]);
      buf.data[f][0] = eval_kernel(impl_->kernel, x);
      buf.data[f][1] = 0.0;
    }
    fftw_execute(plan);

    double lmax = 0.0;
    double lmin = 0.0;
    for (std::size_t f = 0; f < total; ++f) {
      lmax = std::max(lmax, buf.data[f][0]);
      lmin = std::min(lmin, buf.data[f][0]);
    }
    if (!(lmax > 0.0)) {
      destroy_plan(plan);
      throw SynthesisError("circulant embedding of " + impl_->kernel.describe() + " has no positive eigenvalue");
    }
    const double ratio = lmin / lmax;
    const bool last = factor == 4;
    if (ratio >= -1e-8 || (last && ratio >= -1e-2)) {
      if (ratio < -1e-8) {
        std::ostringstream msg;
        msg << "circulant embedding of " << impl_->kernel.describe() << ": clipping negative eigenvalues (min/max = "
            << ratio << ") on a torus of " << m << " points per axis";
        log_warning(msg.str());
      }
      impl_->m = m;
      impl_->plan = plan;
      impl_->min_ratio = ratio;
      impl_->amplitude.resize(total);
      const double inv = 1.0 / static_cast<double>(total);
      for (std::size_t f = 0; f < total; ++f) impl_->amplitude[f] = std::sqrt(std::max(buf.data[f][0], 0.0) * inv);
      return;
    }
    destroy_plan(plan);
    if (last) {
      std::ostringstream msg;
      msg << "circulant embedding of " << impl_->kernel.describe()
          << " is not nonnegative (min/max eigenvalue " << ratio << ") with padding " << grid.padding
          << " and torus enlarged up to " << m << " points per axis";
      throw SynthesisError(msg.str());
    }
  }
}

CirculantEmbedding::~CirculantEmbedding() = default;
CirculantEmbedding::CirculantEmbedding(CirculantEmbedding&&) noexcept = default;
CirculantEmbedding& CirculantEmbedding::operator=(CirculantEmbedding&&) noexcept = default;

const KernelSpec& CirculantEmbedding::kernel() const { return impl_->kernel; }
const GridSpec& CirculantEmbedding::grid() const { return impl_->grid; }
int CirculantEmbedding::torus_points() const { return impl_->m; }
double CirculantEmbedding::min_eigenvalue_ratio() const { return impl_->min_ratio; }

FieldSample CirculantEmbedding::sample(std::uint64_t seed) const {
  const Impl& s = *impl_;
  const int d = s.grid.dimension;
  const std::size_t total = s.amplitude.size();
  FftwBuffer buf(total);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (std::size_t f = 0; f < total; ++f) {
    const double re = normal(rng);
    const double im = normal(rng);
    buf.data[f][0] = s.amplitude[f] * re;
    buf.data[f][1] = s.amplitude[f] * im;
  }
  fftw_execute_dft(s.plan, buf.data, buf.data);

  const int n = s.grid.points_per_axis();
  std::vector<double> values(s.grid.total_points());
  const auto m = static_cast<std::size_t>(s.m);
  if (d == 2) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        values[static_cast<std::size_t>(i) * n + j] = buf.data[static_cast<std::size_t>(i) * m + j][0];
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k)
          values[(static_cast<std::size_t>(i) * n + j) * n + k] =
              buf.data[(static_cast<std::size_t>(i) * m + j) * m + k][0];
  }
  return FieldSample(s.grid, s.kernel, seed, std::move(values));
}

FieldSample sample_field(const KernelSpec& kernel, const GridSpec& grid, std::uint64_t seed) {
  return CirculantEmbedding(kernel, grid).sample(seed);
}

// ---------------------------------------------------------------- plane waves

FieldSample sample_rpw(const GridSpec& grid, int n_waves, std::uint64_t seed, double wave_number) {
  grid.validate();
  if (grid.dimension != 2) throw UnsupportedError("sample_rpw: only d = 2 is supported");
  if (n_waves < 64) throw InputError("sample_rpw: n_waves must be at least 64");
  if (!(wave_number > 0.0)) throw InputError("sample_rpw: wave number must be positive");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
  std::normal_distribution<double> normal;
  const auto k = static_cast<Eigen::Index>(n_waves);
  Eigen::VectorXd cx(k), cy(k);
  Eigen::VectorXcd c(k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n_waves));
  for (Eigen::Index w = 0; w < k; ++w) {
    const double phi = angle(rng);
    cx(w) = wave_number * std::cos(phi);
    cy(w) = wave_number * std::sin(phi);
    const double a = normal(rng);
    const double b = normal(rng);
    c(w) = std::complex<double>(a, -b) * scale;
  }

  // Re sum_k c_k e^{i x cx_k} e^{i y cy_k}, factored as A diag(c) B^T.
  const int n = grid.points_per_axis();
  Eigen::MatrixXcd A(n, k), B(n, k);
  for (int i = 0; i < n; ++i) {
    const double x = grid.coordinate(i);
    for (Eigen::Index w = 0; w < k; ++w) {
      A(i, w) = std::polar(1.0, x * cx(w)) * c(w);
      B(i, w) = std::polar(1.0, x * cy(w));
    }
  }
  const Eigen::MatrixXcd F = A * B.transpose();
  std::vector<double> values(grid.total_points());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) values[static_cast<std::size_t>(i) * n + j] = F(i, j).real();
  return FieldSample(grid, KernelSpec::random_plane_wave(wave_number), seed, std::move(values));
}

// ---------------------------------------------------------------- interpolation

FieldSample make_interpolation(const FieldSample& base, const FieldSample& copy, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw InputError("make_interpolation: t must lie in [0, 1]");
  if (!(base.grid == copy.grid)) throw InputError("make_interpolation: base and copy grids differ");
  if (!(base.kernel == copy.kernel)) throw InputError("make_interpolation: base and copy kernels differ");
  std::vector<double> v(base.values.size());
  if (t == 1.0) {
    v = base.values;
  } else if (t == 0.0) {
    v = copy.values;
  } else {
    const double s = std::sqrt(1.0 - t * t);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = t * base.values[i] + s * copy.values[i];
  }
  FieldSample out(base.grid, base.kernel, base.seed, std::move(v));
  out.interpolation_t = t;
  return out;
}

// ---------------------------------------------------------------- jets

namespace {

constexpr std::array<int, 4> kD1Steps{-2, -1, 1, 2};
constexpr std::array<double, 4> kD1Weights{1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0};
constexpr std::array<double, 5> kD2Weights{-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0};

}  // namespace

Jet jet_extraction(const FieldSample& sample, std::span<const int> index) {
  const int d = sample.grid.dimension;
  const int n = sample.n();
  if (static_cast<int>(index.size()) < d) throw InputError("jet_extraction: index has too few coordinates");
  for (int a = 0; a < d; ++a)
    if (index[a] < 2 || index[a] > n - 3)
      throw RangeError("jet_extraction: point within 2 lattice steps of the simulated-region edge");

  std::array<int, 3> p{};
  for (int a = 0; a < d; ++a) p[a] = index[a];
  auto value_at = [&](std::array<int, 3> q) { return sample.values[sample.index(q)]; };

  const double h = sample.grid.spacing;
  Jet jet;
  jet.value = value_at(p);
  jet.gradient = Eigen::VectorXd::Zero(d);
  jet.hessian = Eigen::MatrixXd::Zero(d, d);
  for (int a = 0; a < d; ++a) {
    double g = 0.0;
    for (int s = 0; s < 4; ++s) {
      auto q = p;
      q[a] += kD1Steps[s];
      g += kD1Weights[s] * value_at(q);
    }
    jet.gradient(a) = g / h;

    double hh = 0.0;
    for (int s = -2; s <= 2; ++s) {
      auto q = p;
      q[a] += s;
      hh += kD2Weights[s + 2] * value_at(q);
    }
    jet.hessian(a, a) = hh / (h * h);

    for (int b = a + 1; b < d; ++b) {
      double mixed = 0.0;
      for (int s = 0; s < 4; ++s)
        for (int u = 0; u < 4; ++u) {
          auto q = p;
          q[a] += kD1Steps[s];
          q[b] += kD1Steps[u];
          mixed += kD1Weights[s] * kD1Weights[u] * value_at(q);
        }
      jet.hessian(a, b) = jet.hessian(b, a) = mixed / (h * h);
    }
  }
  return jet;
}

// ---------------------------------------------------------------- conditioning

ConditionalSampler::ConditionalSampler(KernelSpec kernel, GridSpec grid, std::vector<JetConstraint> constraints)
    : embedding_(std::move(kernel), grid), constraints_(std::move(constraints)) {
  const int d = grid.dimension;
  const int n = grid.points_per_axis();
  const double h = grid.spacing;
  const KernelSpec& K = embedding_.kernel();

  std::vector<std::array<int, 3>> anchors;
  for (const JetConstraint& c : constraints_) {
    if (static_cast<int>(c.point.size()) != d || static_cast<int>(c.alpha.size()) != d)
      throw InputError("conditional sampling: constraint point and multi-index must have one entry per axis");
    if (!std::isfinite(c.value)) throw InputError("conditional sampling: constraint value must be finite");
    int order = 0;
    int axis = -1;
    for (int a = 0; a < d; ++a) {
      if (c.alpha[a] < 0) throw InputError("conditional sampling: negative multi-index entry");
      order += c.alpha[a];
      if (c.alpha[a] > 0) axis = a;
    }
    if (order > 1) throw UnsupportedError("conditional sampling: only |alpha| <= 1 constraints are supported");

    std::array<int, 3> anchor{};
    for (int a = 0; a < d; ++a) {
      anchor[a] = grid.nearest_index(c.point[a]);
      if (std::abs(grid.coordinate(anchor[a]) - c.point[a]) > 1e-6 * h)
        throw InputError("conditional sampling: constraint point is not a lattice point");
      if (anchor[a] < 2 || anchor[a] > n - 3)
        throw RangeError("conditional sampling: constraint point too close to the simulated-region edge");
    }
    anchors.push_back(anchor);

    Functional fn;
    auto add_tap = [&](std::array<int, 3> step, double w) {
      std::array<int, 3> q = anchor;
      for (int a = 0; a < d; ++a) q[a] += step[a];
      std::size_t flat = 0;
      for (int a = 0; a < d; ++a) flat = flat * static_cast<std::size_t>(n) + static_cast<std::size_t>(q[a]);
      fn.offsets.push_back(flat);
      fn.weights.push_back(w);
      fn.steps.push_back(step);
    };
    if (axis < 0) {
      add_tap({0, 0, 0}, 1.0);
    } else {
      for (int s = 0; s < 4; ++s) {
        std::array<int, 3> step{};
        step[axis] = kD1Steps[s];
        add_tap(step, kD1Weights[s] / h);
      }
    }
    functionals_.push_back(std::move(fn));
  }

  const auto nc = static_cast<Eigen::Index>(constraints_.size());
  if (nc == 0) return;

  std::vector<double> x(static_cast<std::size_t>(d));
  gram_.resize(nc, nc);
  for (Eigen::Index i = 0; i < nc; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      const Functional& fi = functionals_[i];
      const Functional& fj = functionals_[j];
      double acc = 0.0;
      for (std::size_t a = 0; a < fi.weights.size(); ++a)
        for (std::size_t b = 0; b < fj.weights.size(); ++b) {
          for (int ax = 0; ax < d; ++ax)
            x[ax] = h * ((anchors[i][ax] + fi.steps[a][ax]) - (anchors[j][ax] + fj.steps[b][ax]));
          acc += fi.weights[a] * fj.weights[b] * eval_kernel(K, x);
        }
      gram_(i, j) = gram_(j, i) = acc;
    }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram_, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues().minCoeff();
  const double lmax = eig.eigenvalues().maxCoeff();
  condition_ = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
  if (!(condition_ < 1e10)) {
    std::ostringstream msg;
    msg << "conditional sampling: constraint Gram matrix is ill-conditioned (condition number " << condition_ << ")";
    throw ConditioningError(msg.str());
  }
  gram_factor_.compute(gram_);

  // Cov(f(x), L_j f) at every lattice site. Depends only on the integer
  // displacement, so tabulate K over displacements once.
  const std::size_t total = grid.total_points();
  const int span_pts = 2 * n + 7;  // displacements in [-(n+3), n+3]
  const int off = n + 3;
  std::vector<double> ktab(ipow(static_cast<std::size_t>(span_pts), d));
  {
    std::array<int, 3> idx{};
    for (std::size_t f = 0; f < ktab.size(); ++f) {
      unflatten(f, d, span_pts, idx);
      for (int a = 0; a < d; ++a) x[a] = h * (idx[a] - off);
      ktab[f] = eval_kernel(K, x);
    }
  }
  cross_.assign(static_cast<std::size_t>(nc), std::vector<double>(total, 0.0));
  std::array<int, 3> idx{};
  for (std::size_t f = 0; f < total; ++f) {
    unflatten(f, d, n, idx);
    for (Eigen::Index j = 0; j < nc; ++j) {
      const Functional& fj = functionals_[j];
      double acc = 0.0;
      for (std::size_t b = 0; b < fj.weights.size(); ++b) {
        std::size_t t = 0;
        for (int a = 0; a < d; ++a)
          t = t * static_cast<std::size_t>(span_pts) +
              static_cast<std::size_t>(idx[a] - anchors[j][a] - fj.steps[b][a] + off);
        acc += fj.weights[b] * ktab[t];
      }
      cross_[j][f] = acc;
    }
  }
}

double ConditionalSampler::apply(const Functional& fn, std::span<const double> values) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < fn.offsets.size(); ++i) acc += fn.weights[i] * values[fn.offsets[i]];
  return acc;
}

FieldSample ConditionalSampler::sample(std::uint64_t seed) const {
  std::vector<double> v;
  v.reserve(constraints_.size());
  for (const auto& c : constraints_) v.push_back(c.value);
  return sample(v, seed);
}

FieldSample ConditionalSampler::sample(std::span<const double> values, std::uint64_t seed) const {
  if (values.size() != constraints_.size())
    throw InputError("conditional sampling: one target value per constraint is required");
  FieldSample g = embedding_.sample(seed);
  if (constraints_.empty()) return g;

  const auto nc = static_cast<Eigen::Index>(constraints_.size());
  Eigen::VectorXd r(nc);
  for (Eigen::Index j = 0; j < nc; ++j) r(j) = values[j] - apply(functionals_[j], g.values);
  const Eigen::VectorXd coef = gram_factor_.solve(r);
  for (Eigen::Index j = 0; j < nc; ++j) {
    const double cj = coef(j);
    const auto& col = cross_[j];
    for (std::size_t f = 0; f < g.values.size(); ++f) g.values[f] += cj * col[f];
  }
  // One refinement pass absorbs the roundoff of the solve.
  for (Eigen::Index j = 0; j < nc; ++j) r(j) = values[j] - apply(functionals_[j], g.values);
  const Eigen::VectorXd fix = gram_factor_.solve(r);
  for (Eigen::Index j = 0; j < nc; ++j) {
    const auto& col = cross_[j];
    for (std::size_t f = 0; f < g.values.size(); ++f) g.values[f] += fix(j) * col[f];
  }
  return g;
}

FieldSample sample_conditional_field(const KernelSpec& kernel, const GridSpec& grid,
                                     std::vector<JetConstraint> constraints, std::uint64_t seed) {
  return ConditionalSampler(kernel, grid, std::move(constraints)).sample(seed);
}

}  // namespace exlab
