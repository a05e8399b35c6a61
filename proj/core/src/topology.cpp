#include "exlab/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "exlab/error.hpp"

namespace exlab {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent_[a] = b;
  }

 private:
  std::vector<std::size_t> parent_;
};

void check_array(const GridArray& a) {
  if (a.dimension != 2 && a.dimension != 3) throw InputError("component counting: dimension must be 2 or 3");
  for (int ax = 0; ax < a.dimension; ++ax)
    if (a.extent[ax] < 1) throw InputError("component counting: empty box");
  if (a.values.size() != a.size()) throw InputError("component counting: value count does not match extents");
  if (!a.boundary.empty() && a.boundary.size() != a.size())
    throw InputError("component counting: boundary mask does not match extents");
}

// Moves the level off every lattice value so that no site lies on the level set.
double nudge_level(const std::vector<double>& values, double level) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    if (std::find(values.begin(), values.end(), level) == values.end()) return level;
    level += 1e-12 * std::max(1.0, std::abs(level));
  }
  throw InputError("level counting: could not move the level off the lattice values");
}

}  // namespace

std::string_view to_string(Star star) { return star == Star::ES ? "ES" : "LS"; }

Star parse_star(std::string_view name) {
  if (name == "ES" || name == "es") return Star::ES;
  if (name == "LS" || name == "ls") return Star::LS;
  throw InputError("unknown component type '" + std::string(name) + "' (expected ES or LS)");
}

std::string_view to_string(PivotalClass cls) {
  switch (cls) {
    case PivotalClass::Plus: return "plus";
    case PivotalClass::Minus: return "minus";
    case PivotalClass::Zero: return "zero";
    case PivotalClass::Unresolved: return "unresolved";
  }
  return "unresolved";
}

std::size_t GridArray::size() const {
  std::size_t s = 1;
  for (int a = 0; a < dimension; ++a) s *= static_cast<std::size_t>(extent[a]);
  return s;
}

GridArray extract_box(const FieldSample& sample, const LatticeBox& box) {
  if (box.dimension != sample.grid.dimension) throw InputError("box dimension does not match the sample");
  for (int a = 0; a < box.dimension; ++a)
    if (box.hi[a] < box.lo[a]) throw InputError("box has negative extent");
  if (!box_within_grid(sample.grid, box)) throw RangeError("box exceeds the simulated region");

  GridArray out;
  out.dimension = box.dimension;
  for (int a = 0; a < box.dimension; ++a) out.extent[a] = box.extent(a);
  out.values.resize(out.size());
  const auto n = static_cast<std::size_t>(sample.n());
  std::size_t k = 0;
  if (box.dimension == 2) {
    for (int i = box.lo[0]; i <= box.hi[0]; ++i) {
      const double* row = sample.values.data() + static_cast<std::size_t>(i) * n;
      for (int j = box.lo[1]; j <= box.hi[1]; ++j) out.values[k++] = row[j];
    }
  } else {
    for (int i = box.lo[0]; i <= box.hi[0]; ++i)
      for (int j = box.lo[1]; j <= box.hi[1]; ++j) {
        const double* row = sample.values.data() + (static_cast<std::size_t>(i) * n + j) * n;
        for (int l = box.lo[2]; l <= box.hi[2]; ++l) out.values[k++] = row[l];
      }
  }
  return out;
}

std::pair<long, long> count_excursion_array(const GridArray& a, double level) {
  check_array(a);
  const int d = a.dimension;
  const std::size_t total = a.size();
  std::array<std::size_t, 3> stride{};
  stride[d - 1] = 1;
  for (int ax = d - 2; ax >= 0; --ax) stride[ax] = stride[ax + 1] * static_cast<std::size_t>(a.extent[ax + 1]);

  DisjointSets sets(total);
  std::array<int, 3> idx{};
  for (std::size_t f = 0; f < total; ++f) {
    if (a.values[f] >= level) {
      for (int ax = 0; ax < d; ++ax)
        if (idx[ax] > 0 && a.values[f - stride[ax]] >= level) sets.unite(f, f - stride[ax]);
    }
    for (int ax = d - 1; ax >= 0; --ax) {
      if (++idx[ax] < a.extent[ax]) break;
      idx[ax] = 0;
    }
  }

  std::vector<signed char> state(total, 0);  // per root: 1 interior, 2 touching
  idx = {};
  for (std::size_t f = 0; f < total; ++f) {
    if (a.values[f] >= level) {
      bool edge = false;
      for (int ax = 0; ax < d; ++ax) edge = edge || idx[ax] == 0 || idx[ax] == a.extent[ax] - 1;
      edge = edge || (!a.boundary.empty() && a.boundary[f]);
      auto& s = state[sets.find(f)];
      if (edge) s = 2;
      else if (s == 0) s = 1;
    }
    for (int ax = d - 1; ax >= 0; --ax) {
      if (++idx[ax] < a.extent[ax]) break;
      idx[ax] = 0;
    }
  }
  long kept = 0;
  long touching = 0;
  for (signed char s : state) {
    if (s == 1) ++kept;
    else if (s == 2) ++touching;
  }
  return {kept, touching};
}

long count_level_array(const GridArray& a, double level) {
  check_array(a);
  if (a.dimension != 2) throw UnsupportedError("level-set counting is implemented for d = 2 only");
  const int e0 = a.extent[0];
  const int e1 = a.extent[1];
  if (e0 < 2 || e1 < 2) return 0;
  const double ell = nudge_level(a.values, level);

  auto above = [&](int i, int j) { return a.values[static_cast<std::size_t>(i) * e1 + j] > ell; };
  auto value = [&](int i, int j) { return a.values[static_cast<std::size_t>(i) * e1 + j]; };
  // Edge ids: horizontal (i,j)-(i,j+1) first, then vertical (i,j)-(i+1,j).
  const std::size_t n_h = static_cast<std::size_t>(e0) * (e1 - 1);
  auto h_edge = [&](int i, int j) { return static_cast<std::size_t>(i) * (e1 - 1) + j; };
  auto v_edge = [&](int i, int j) { return n_h + static_cast<std::size_t>(i) * e1 + j; };
  const std::size_t n_edges = n_h + static_cast<std::size_t>(e0 - 1) * e1;

  DisjointSets sets(n_edges);
  for (int i = 0; i + 1 < e0; ++i) {
    for (int j = 0; j + 1 < e1; ++j) {
      const bool sa = above(i, j), sb = above(i, j + 1), sc = above(i + 1, j + 1), sd = above(i + 1, j);
      const std::size_t top = h_edge(i, j), right = v_edge(i, j + 1), bottom = h_edge(i + 1, j),
                        left = v_edge(i, j);
      const bool ct = sa != sb, cr = sb != sc, cb = sd != sc, cl = sa != sd;
      const int crossings = ct + cr + cb + cl;
      if (crossings == 2) {
        std::array<std::size_t, 2> e{};
        int k = 0;
        if (ct) e[k++] = top;
        if (cr) e[k++] = right;
        if (cb) e[k++] = bottom;
        if (cl) e[k++] = left;
        sets.unite(e[0], e[1]);
      } else if (crossings == 4) {
        const double centre = 0.25 * (value(i, j) + value(i, j + 1) + value(i + 1, j + 1) + value(i + 1, j));
        if ((centre > ell) == sa) {
          // a and c joined through the centre: segments cut off b and d.
          sets.unite(top, right);
          sets.unite(bottom, left);
        } else {
          sets.unite(top, left);
          sets.unite(right, bottom);
        }
      }
    }
  }

  std::vector<signed char> state(n_edges, 0);
  auto visit = [&](std::size_t e, bool edge) {
    auto& s = state[sets.find(e)];
    if (edge) s = 2;
    else if (s == 0) s = 1;
  };
  auto on_layer = [&](int i, int j) {
    return i == 0 || j == 0 || i == e0 - 1 || j == e1 - 1 ||
           (!a.boundary.empty() && a.boundary[static_cast<std::size_t>(i) * e1 + j]);
  };
  for (int i = 0; i < e0; ++i)
    for (int j = 0; j + 1 < e1; ++j)
      if (above(i, j) != above(i, j + 1)) visit(h_edge(i, j), on_layer(i, j) || on_layer(i, j + 1));
  for (int i = 0; i + 1 < e0; ++i)
    for (int j = 0; j < e1; ++j)
      if (above(i, j) != above(i + 1, j)) visit(v_edge(i, j), on_layer(i, j) || on_layer(i + 1, j));
  return static_cast<long>(std::count(state.begin(), state.end(), 1));
}

long count_star_array(const GridArray& a, Star star, double level) {
  return star == Star::ES ? count_excursion_array(a, level).first : count_level_array(a, level);
}

ComponentCount count_excursion_components(const FieldSample& sample, double level, const LatticeBox& box) {
  const GridArray a = extract_box(sample, box);
  ComponentCount c;
  c.box = box;
  c.level = level;
  std::tie(c.n_excursion, c.n_boundary_touching) = count_excursion_array(a, level);
  return c;
}

long count_level_components(const FieldSample& sample, double level, const LatticeBox& box) {
  if (sample.grid.dimension != 2) throw UnsupportedError("level-set counting is implemented for d = 2 only");
  return count_level_array(extract_box(sample, box), level);
}

ComponentCount count_components(const FieldSample& sample, double level, const LatticeBox& box) {
  const GridArray a = extract_box(sample, box);
  ComponentCount c;
  c.box = box;
  c.level = level;
  std::tie(c.n_excursion, c.n_boundary_touching) = count_excursion_array(a, level);
  if (a.dimension == 2) c.n_level = count_level_array(a, level);
  return c;
}

}  // namespace exlab
