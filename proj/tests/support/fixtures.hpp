#pragma once

// Synthetic fields and brute-force oracles shared by the unit and acceptance
// tests. The oracles are deliberately naive (BFS flood fill on the raw array)
// so that they share no code with the library's union-find counting.

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "exlab/field.hpp"
#include "exlab/topology.hpp"

namespace exlab::testing {

inline GridSpec planar_grid(double side, double h = 0.25, double padding = 2.0) {
  GridSpec g;
  g.dimension = 2;
  g.side_length = side;
  g.spacing = h;
  g.padding = padding;
  return g;
}

/// Samples f(x, y) on every lattice site (x along axis 0).
inline FieldSample synthetic(const GridSpec& grid, const std::function<double(double, double)>& f) {
  const int n = grid.points_per_axis();
  std::vector<double> v(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(i) * n + j] = f(grid.coordinate(i), grid.coordinate(j));
  return FieldSample(grid, KernelSpec::bargmann_fock(2), 0, std::move(v));
}

/// Box of the given side centred on the lattice point nearest (cx, cy).
inline LatticeBox box_at(const GridSpec& grid, double cx, double cy, double side) {
  const int c[2] = {grid.nearest_index(cx), grid.nearest_index(cy)};
  return box_around(grid, c, side);
}

struct Raster {
  int rows = 0, cols = 0;
  std::vector<double> v;
  double at(int i, int j) const { return v[static_cast<std::size_t>(i) * cols + j]; }
};

inline Raster raster(const FieldSample& s, const LatticeBox& b) {
  Raster r;
  r.rows = b.extent(0);
  r.cols = b.extent(1);
  for (int i = b.lo[0]; i <= b.hi[0]; ++i)
    for (int j = b.lo[1]; j <= b.hi[1]; ++j) r.v.push_back(s.at(i, j));
  return r;
}

/// Face-connected components of {inside(i, j)} that avoid the outer layer.
inline long flood_components(int rows, int cols, const std::function<bool(int, int)>& inside) {
  std::vector<char> seen(static_cast<std::size_t>(rows) * cols, 0);
  long kept = 0;
  for (int i0 = 0; i0 < rows; ++i0)
    for (int j0 = 0; j0 < cols; ++j0) {
      if (seen[static_cast<std::size_t>(i0) * cols + j0] || !inside(i0, j0)) continue;
      bool touches = false;
      std::deque<std::pair<int, int>> q{{i0, j0}};
      seen[static_cast<std::size_t>(i0) * cols + j0] = 1;
      while (!q.empty()) {
        auto [i, j] = q.front();
        q.pop_front();
        if (i == 0 || j == 0 || i == rows - 1 || j == cols - 1) touches = true;
        const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int a = i + di[k], b = j + dj[k];
          if (a < 0 || b < 0 || a >= rows || b >= cols) continue;
          auto& s = seen[static_cast<std::size_t>(a) * cols + b];
          if (s || !inside(a, b)) continue;
          s = 1;
          q.emplace_back(a, b);
        }
      }
      if (!touches) ++kept;
    }
  return kept;
}

inline long oracle_excursions(const Raster& r, double level) {
  return flood_components(r.rows, r.cols, [&](int i, int j) { return r.at(i, j) >= level; });
}

/// Bounded components of the complement {f < level}: the holes.
inline long oracle_holes(const Raster& r, double level) {
  return flood_components(r.rows, r.cols, [&](int i, int j) { return r.at(i, j) < level; });
}

/// Contour oracle for fixtures without ambiguous (saddle) cells: in the plane
/// each closed level curve bounds exactly one face of the excursion/complement
/// decomposition other than the unbounded one, so the curves are the interior
/// excursion components plus the holes.
inline long oracle_contours(const Raster& r, double level) { return oracle_excursions(r, level) + oracle_holes(r, level); }

/// True if any cell of the raster has the four-corner checkerboard pattern.
inline bool has_saddle_cell(const Raster& r, double level) {
  for (int i = 0; i + 1 < r.rows; ++i)
    for (int j = 0; j + 1 < r.cols; ++j) {
      const bool a = r.at(i, j) > level, b = r.at(i, j + 1) > level;
      const bool c = r.at(i + 1, j + 1) > level, d = r.at(i + 1, j) > level;
      if (a == c && b == d && a != b) return true;
    }
  return false;
}

// The fixtures of the topology examples.

inline double gauss_bump(double x, double y, double cx = 0.0, double cy = 0.0, double s = 1.0) {
  const double dx = x - cx, dy = y - cy;
  return std::exp(-(dx * dx + dy * dy) / s);
}

/// Two lobes at (+-2, 0) joined through a saddle at the origin, rotated by `angle`.
inline std::function<double(double, double)> two_lobes(double angle = 0.0) {
  return [angle](double x, double y) {
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = c * x + s * y, w = -s * x + c * y;
    return gauss_bump(u, w, 2.0, 0.0) + gauss_bump(u, w, -2.0, 0.0);
  };
}

/// Ring of radius 3: a local minimum at the origin inside one filled component.
inline double ring(double x, double y) {
  const double r = std::hypot(x, y);
  return std::exp(-(r - 3.0) * (r - 3.0));
}

}  // namespace exlab::testing
