#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "exlab/kernels.hpp"

namespace exlab {

/// Regular lattice covering Lambda_R = [-R/2, R/2]^d plus a padding margin.
///
/// Lattice index 0 sits at -R/2 - padding, so the box Lambda_R occupies
/// indices [pad_steps(), pad_steps() + box_steps()] on every axis.
struct GridSpec {
  int dimension = 2;
  double side_length = 32.0;
  double spacing = 0.25;
  double padding = 8.0;

  void validate() const;

  int box_steps() const;
  int pad_steps() const;
  int points_per_axis() const;
  std::size_t total_points() const;
  double coordinate(int index) const;
  /// Nearest lattice index of a coordinate (no bounds check).
  int nearest_index(double coordinate) const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Inclusive range of lattice indices per axis.
struct LatticeBox {
  int dimension = 2;
  std::array<int, 3> lo{};
  std::array<int, 3> hi{};

  int extent(int axis) const { return hi[axis] - lo[axis] + 1; }
  bool contains(std::span<const int> index) const;
};

/// The lattice box of Lambda_R itself.
LatticeBox central_box(const GridSpec& grid);
/// Box of side `side` (in correlation lengths) centred on a lattice index.
LatticeBox box_around(const GridSpec& grid, std::span<const int> center, double side);
/// True iff the box lies inside the simulated lattice.
bool box_within_grid(const GridSpec& grid, const LatticeBox& box);

/// One realization on the lattice, row-major with axis 0 slowest.
struct FieldSample {
  FieldSample(GridSpec grid, KernelSpec kernel, std::uint64_t seed, std::vector<double> values);

  GridSpec grid;
  KernelSpec kernel;
  std::uint64_t seed;
  std::optional<double> interpolation_t;
  std::vector<double> values;

  int n() const { return grid.points_per_axis(); }
  std::size_t index(std::span<const int> idx) const;
  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * n() + j]; }
  double at(int i, int j, int k) const {
    return values[(static_cast<std::size_t>(i) * n() + j) * n() + k];
  }
};

/// Exact lattice synthesis by circulant embedding of K on a torus.
///
/// The eigenvalues of the embedding are computed once; sample() is then a
/// pure function of the seed and may be called concurrently.
class CirculantEmbedding {
 public:
  CirculantEmbedding(KernelSpec kernel, GridSpec grid);
  ~CirculantEmbedding();
  CirculantEmbedding(CirculantEmbedding&&) noexcept;
  CirculantEmbedding& operator=(CirculantEmbedding&&) noexcept;

  FieldSample sample(std::uint64_t seed) const;

  const KernelSpec& kernel() const;
  const GridSpec& grid() const;
  /// Points per axis of the embedding torus.
  int torus_points() const;
  /// Most negative eigenvalue relative to the largest, before clipping.
  double min_eigenvalue_ratio() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

FieldSample sample_field(const KernelSpec& kernel, const GridSpec& grid, std::uint64_t seed);

inline constexpr int kDefaultPlaneWaves = 1024;

/// Random plane wave by superposition of n_waves plane waves with uniform
/// directions; d = 2 only.
FieldSample sample_rpw(const GridSpec& grid, int n_waves, std::uint64_t seed, double wave_number = 1.0);

/// t * base + sqrt(1 - t^2) * copy.
FieldSample make_interpolation(const FieldSample& base, const FieldSample& copy, double t);

/// Discrete jet at a lattice point: 4th-order central differences.
struct Jet {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

Jet jet_extraction(const FieldSample& sample, std::span<const int> index);

/// One linear constraint on a lattice point: d^alpha f(point) = value with
/// |alpha| <= 1, where derivatives use the same stencils as jet_extraction.
struct JetConstraint {
  std::vector<double> point;
  std::vector<int> alpha;
  double value = 0.0;
};

/// Conditional (kriged) sampling by the residual method. The constraint
/// geometry is factored once; sample() may be called concurrently.
class ConditionalSampler {
 public:
  ConditionalSampler(KernelSpec kernel, GridSpec grid, std::vector<JetConstraint> constraints);

  /// Uses the values stored in the constraints.
  FieldSample sample(std::uint64_t seed) const;
  FieldSample sample(std::span<const double> values, std::uint64_t seed) const;

  const std::vector<JetConstraint>& constraints() const { return constraints_; }
  /// Condition number of the constraint Gram matrix.
  double gram_condition() const { return condition_; }

 private:
  struct Functional {
    std::vector<std::size_t> offsets;
    std::vector<double> weights;
    std::vector<std::array<int, 3>> steps;
  };

  double apply(const Functional& fn, std::span<const double> values) const;

  CirculantEmbedding embedding_;
  std::vector<JetConstraint> constraints_;
  std::vector<Functional> functionals_;
  Eigen::MatrixXd gram_;
  Eigen::LDLT<Eigen::MatrixXd> gram_factor_;
  std::vector<std::vector<double>> cross_;  // Cov(f(x), L_j f) over the lattice
  double condition_ = 1.0;
};

FieldSample sample_conditional_field(const KernelSpec& kernel, const GridSpec& grid,
                                     std::vector<JetConstraint> constraints, std::uint64_t seed);

/// Flat little-endian dump: "EXLB", u32 version, u32 d, u32 points per
/// axis (d times), f64 spacing, u64 seed, then the values as f64.
struct RawField {
  int dimension = 0;
  std::vector<std::uint32_t> dims;
  double spacing = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> values;
};

inline constexpr std::uint32_t kFieldFileVersion = 1;

void write_field_binary(const std::filesystem::path& path, const FieldSample& sample);
RawField read_field_binary(const std::filesystem::path& path);

}  // namespace exlab
