#pragma once

// Connected components of {a > 0} and {a < 0}, their delta-interiors, volume
// fractions and gap statistics along rays.

#include <algorithm>
#include <array>
#include <filesystem>
#include <numeric>
#include <optional>
#include <vector>

#include "fhl/common.hpp"
#include "fhl/csv.hpp"
#include "fhl/env_media.hpp"
#include "fhl/grid.hpp"

namespace fhl {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n = 0) : parent_(n), size_(n, 1) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

struct ComponentInfo {
  int id = 0;
  int sign = 0;  // +1 for a component of {a > 0}, -1 for {a < 0}
  std::size_t cells = 0;
  bool spans_x = false;
  bool spans_y = false;
  double max_abs_a = 0.0;
  double delta0 = 0.0;  // U^delta is connected for every delta < delta0
  int parent = 0;       // originating component for a restricted labeling

  bool spanning() const { return spans_x || spans_y; }
};

struct ComponentLabeling {
  Grid<int> labels;  // 0 on {a = 0} (or on cells dropped by a restriction)
  std::vector<ComponentInfo> components;  // components[id - 1]
  std::vector<std::vector<int>> component_cells;
  double delta = 0.0;
  std::size_t delta0_min_piece = 1;
  // Only for restricted labelings: pieces_of_parent[id - 1] counts the pieces
  // the parent component id splits into.
  std::vector<int> pieces_of_parent;

  std::size_t count() const { return components.size(); }
  const ComponentInfo& info(int id) const {
    if (id < 1 || static_cast<std::size_t>(id) > components.size()) throw ParameterError("unknown component id");
    return components[static_cast<std::size_t>(id - 1)];
  }
  const std::vector<int>& cells(int id) const {
    info(id);
    return component_cells[static_cast<std::size_t>(id - 1)];
  }
  int label_at(int idx) const { return labels[static_cast<std::size_t>(idx)]; }
};

namespace detail {

inline void finish_components(ComponentLabeling& lab, const GridD& a) {
  const int rows = lab.labels.rows();
  const int cols = lab.labels.cols();
  lab.component_cells.assign(lab.components.size(), {});
  for (int idx = 0; idx < rows * cols; ++idx) {
    const int id = lab.labels[static_cast<std::size_t>(idx)];
    if (id == 0) continue;
    auto& info = lab.components[static_cast<std::size_t>(id - 1)];
    lab.component_cells[static_cast<std::size_t>(id - 1)].push_back(idx);
    ++info.cells;
    info.max_abs_a = std::max(info.max_abs_a, std::abs(a[static_cast<std::size_t>(idx)]));
  }
  std::vector<std::array<bool, 4>> faces(lab.components.size(), {false, false, false, false});
  for (int idx = 0; idx < rows * cols; ++idx) {
    const int id = lab.labels[static_cast<std::size_t>(idx)];
    if (id == 0) continue;
    const int r = idx / cols;
    const int c = idx % cols;
    auto& f = faces[static_cast<std::size_t>(id - 1)];
    if (c == 0) f[0] = true;
    if (c == cols - 1) f[1] = true;
    if (r == 0) f[2] = true;
    if (r == rows - 1) f[3] = true;
  }
  for (std::size_t k = 0; k < lab.components.size(); ++k) {
    lab.components[k].spans_x = cols > 1 && faces[k][0] && faces[k][1];
    lab.components[k].spans_y = rows > 1 && faces[k][2] && faces[k][3];
  }
}

// Groups cells by a key (sign or parent label) and labels 4-connected pieces.
// Ids are assigned in row-major order of first appearance.
template <class KeyFn>
ComponentLabeling label_by_key(const GridD& a, KeyFn key) {
  const int rows = a.rows();
  const int cols = a.cols();
  const auto n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  DisjointSets ds(n);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int i = r * cols + c;
      const int k = key(i);
      if (k == 0) continue;
      if (c + 1 < cols && key(i + 1) == k) ds.unite(static_cast<std::size_t>(i), static_cast<std::size_t>(i + 1));
      if (r + 1 < rows && key(i + cols) == k) ds.unite(static_cast<std::size_t>(i), static_cast<std::size_t>(i + cols));
    }
  ComponentLabeling lab;
  lab.labels = Grid<int>(rows, cols, a.h(), 0);
  std::vector<int> root_id(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (key(static_cast<int>(i)) == 0) continue;
    const std::size_t root = ds.find(i);
    if (root_id[root] == 0) {
      ComponentInfo info;
      info.id = static_cast<int>(lab.components.size()) + 1;
      info.sign = a[i] > 0.0 ? 1 : -1;
      lab.components.push_back(info);
      root_id[root] = info.id;
    }
    lab.labels[i] = root_id[root];
  }
  finish_components(lab, a);
  return lab;
}

// For every component, the smallest delta at which its delta-interior splits
// into two or more pieces of at least `min_piece` nodes. Smaller islands are
// ignored; they are sampling debris of the a = 0 set and the box edge.
inline void compute_delta0(ComponentLabeling& lab, const GridD& a, std::size_t min_piece) {
  const int cols = a.cols();
  const int rows = a.rows();
  min_piece = std::max<std::size_t>(min_piece, 1);
  std::vector<int> order;
  order.reserve(a.size());
  for (int i = 0; i < static_cast<int>(a.size()); ++i)
    if (lab.labels[static_cast<std::size_t>(i)] != 0) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
    return std::abs(a[static_cast<std::size_t>(x)]) > std::abs(a[static_cast<std::size_t>(y)]);
  });
  const std::size_t m = lab.components.size();
  std::vector<long> big(m, 0);  // pieces holding at least min_piece nodes
  std::vector<char> was_split(m, 0);
  std::vector<int> stamp(m, -1);
  std::vector<std::size_t> touched;
  std::vector<char> added(a.size(), 0);
  std::vector<std::size_t> parent(a.size()), size(a.size(), 1);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (auto& info : lab.components) info.delta0 = info.max_abs_a;
  std::size_t pos = 0;
  int group = 0;
  while (pos < order.size()) {
    const double level = std::abs(a[static_cast<std::size_t>(order[pos])]);
    touched.clear();
    while (pos < order.size() && std::abs(a[static_cast<std::size_t>(order[pos])]) == level) {
      const int i = order[pos++];
      const int id = lab.labels[static_cast<std::size_t>(i)];
      const auto k = static_cast<std::size_t>(id - 1);
      if (stamp[k] != group) {
        stamp[k] = group;
        touched.push_back(k);
      }
      added[static_cast<std::size_t>(i)] = 1;
      if (min_piece == 1) ++big[k];
      const int r = i / cols;
      const int c = i % cols;
      const int nb[4][2] = {{r, c - 1}, {r, c + 1}, {r - 1, c}, {r + 1, c}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[0] >= rows || q[1] < 0 || q[1] >= cols) continue;
        const int j = q[0] * cols + q[1];
        if (!added[static_cast<std::size_t>(j)] || lab.labels[static_cast<std::size_t>(j)] != id) continue;
        std::size_t x = find(static_cast<std::size_t>(i));
        std::size_t y = find(static_cast<std::size_t>(j));
        if (x == y) continue;
        const bool bx = size[x] >= min_piece;
        const bool by = size[y] >= min_piece;
        if (size[x] < size[y]) std::swap(x, y);
        parent[y] = x;
        size[x] += size[y];
        big[k] += (size[x] >= min_piece ? 1 : 0) - (bx ? 1 : 0) - (by ? 1 : 0);
      }
    }
    for (std::size_t k : touched) {
      if (big[k] > 1) {
        was_split[k] = 1;
      } else if (was_split[k]) {
        lab.components[k].delta0 = level;
        was_split[k] = 0;
      }
    }
    ++group;
  }
}

}  // namespace detail

/// Nodes in one unit cube; the default island size ignored by delta0.
inline std::size_t unit_cube_nodes(double cell_h) {
  const auto n = static_cast<std::size_t>(std::lround(1.0 / cell_h));
  return n * n;
}

/// Union-find labeling of {a > 0} and {a < 0} with 4-connectivity on the box;
/// delta0 ignores islands with fewer than `min_piece` nodes.
inline ComponentLabeling label_components(const EnvironmentSample& env, std::size_t min_piece) {
  const auto& a = env.a_field;
  auto lab = detail::label_by_key(a, [&](int i) {
    const double v = a[static_cast<std::size_t>(i)];
    return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0);
  });
  detail::compute_delta0(lab, a, min_piece);
  lab.delta0_min_piece = min_piece;
  return lab;
}

inline ComponentLabeling label_components(const EnvironmentSample& env) {
  return label_components(env, unit_cube_nodes(env.cell_h));
}

/// Restriction of a labeling to {|a| > delta}. Each restricted piece records
/// its parent; pieces_of_parent tells whether a parent stayed connected.
inline ComponentLabeling delta_sublevel(const ComponentLabeling& lab, const EnvironmentSample& env, double delta) {
  if (!(delta >= 0.0)) throw ParameterError("delta must be nonnegative");
  const auto& a = env.a_field;
  auto out = detail::label_by_key(a, [&](int i) {
    const int id = lab.labels[static_cast<std::size_t>(i)];
    return (id != 0 && std::abs(a[static_cast<std::size_t>(i)]) > delta) ? id : 0;
  });
  out.delta = delta;
  out.pieces_of_parent.assign(lab.components.size(), 0);
  for (auto& info : out.components) {
    const int first = out.component_cells[static_cast<std::size_t>(info.id - 1)].front();
    info.parent = lab.labels[static_cast<std::size_t>(first)];
    info.delta0 = lab.info(info.parent).delta0;
    ++out.pieces_of_parent[static_cast<std::size_t>(info.parent - 1)];
  }
  return out;
}

/// True when the delta-interior of component `id` is a single 4-connected piece.
inline bool sublevel_connected(const ComponentLabeling& restricted, int parent_id) {
  if (parent_id < 1 || static_cast<std::size_t>(parent_id) > restricted.pieces_of_parent.size())
    throw ParameterError("unknown parent component");
  return restricted.pieces_of_parent[static_cast<std::size_t>(parent_id - 1)] == 1;
}

/// Largest spanning component of the given sign, or 0 if none spans.
inline int spanning_component(const ComponentLabeling& lab, int sign = 1) {
  int best = 0;
  std::size_t best_cells = 0;
  for (const auto& info : lab.components)
    if (info.sign == sign && info.spanning() && info.cells > best_cells) {
      best = info.id;
      best_cells = info.cells;
    }
  return best;
}

struct VolumeFractions {
  std::vector<double> theta;  // theta[id - 1]
  double theta0 = 0.0;
  std::vector<std::size_t> counts;
  std::size_t zero_count = 0;
  std::size_t total = 0;

  double of(int id) const { return theta.at(static_cast<std::size_t>(id - 1)); }
  /// Component ids whose fraction is at least `floor`.
  std::vector<int> retained(double floor) const {
    std::vector<int> ids;
    for (std::size_t k = 0; k < theta.size(); ++k)
      if (theta[k] >= floor) ids.push_back(static_cast<int>(k) + 1);
    return ids;
  }
  double dropped_fraction(double floor) const {
    std::size_t dropped = 0;
    for (std::size_t k = 0; k < theta.size(); ++k)
      if (theta[k] < floor) dropped += counts[k];
    return static_cast<double>(dropped) / static_cast<double>(total);
  }
};

inline VolumeFractions estimate_theta(const ComponentLabeling& lab) {
  VolumeFractions vf;
  vf.total = lab.labels.size();
  vf.counts.assign(lab.components.size(), 0);
  for (int id : lab.labels.values()) {
    if (id == 0)
      ++vf.zero_count;
    else
      ++vf.counts[static_cast<std::size_t>(id - 1)];
  }
  std::size_t sum = vf.zero_count;
  for (auto c : vf.counts) sum += c;
  if (sum != vf.total) throw NumericalError("volume fractions do not partition the box");
  const auto total = static_cast<double>(vf.total);
  vf.theta0 = static_cast<double>(vf.zero_count) / total;
  vf.theta.reserve(vf.counts.size());
  for (auto c : vf.counts) vf.theta.push_back(static_cast<double>(c) / total);
  return vf;
}

// ---------------------------------------------------------------------------
// Rays

/// Grid square with lower-left node (sr, sc) met by a ray on [t_in, t_out].
struct SquareHit {
  int sr = 0;
  int sc = 0;
  double t_in = 0.0;
  double t_out = 0.0;
};

/// Supercover traversal: every grid square the segment origin + t*dir,
/// t in [0, t_max], meets, including squares touched only at a corner.
/// Coordinates are physical; squares live in [0, (cols-1)h] x [0, (rows-1)h].
inline std::vector<SquareHit> ray_squares(int rows, int cols, double h, Vec2 origin, Vec2 dir, double t_max) {
  std::vector<SquareHit> out;
  if (rows < 2 || cols < 2) return out;
  const double nx = cols - 1;
  const double ny = rows - 1;
  double px = origin.x / h;
  double py = origin.y / h;
  if (px < 0 || py < 0 || px > nx || py > ny) throw DomainError("ray origin outside the box");
  const double dx = dir.x / h;
  const double dy = dir.y / h;
  // Exit parameter of the box.
  double t_box = t_max;
  if (dx > 0) t_box = std::min(t_box, (nx - px) / dx);
  if (dx < 0) t_box = std::min(t_box, -px / dx);
  if (dy > 0) t_box = std::min(t_box, (ny - py) / dy);
  if (dy < 0) t_box = std::min(t_box, -py / dy);
  const double eps = 1e-12;
  auto clamp_cell = [](double v, double hi) { return std::clamp(static_cast<int>(std::floor(v)), 0, static_cast<int>(hi) - 1); };
  int cx = dx < 0 ? clamp_cell(std::ceil(px - eps) - 1, nx) : clamp_cell(px + eps, nx);
  int cy = dy < 0 ? clamp_cell(std::ceil(py - eps) - 1, ny) : clamp_cell(py + eps, ny);
  if (dx == 0) cx = clamp_cell(px, nx);
  if (dy == 0) cy = clamp_cell(py, ny);
  const int stepx = dx > 0 ? 1 : -1;
  const int stepy = dy > 0 ? 1 : -1;
  auto next_x = [&](int c) { return dx == 0 ? kInf : ((dx > 0 ? c + 1 : c) - px) / dx; };
  auto next_y = [&](int r) { return dy == 0 ? kInf : ((dy > 0 ? r + 1 : r) - py) / dy; };
  double t = 0.0;
  while (true) {
    const double tx = next_x(cx);
    const double ty = next_y(cy);
    const double t_next = std::min({tx, ty, t_box});
    out.push_back({cy, cx, t, t_next});
    if (t_next >= t_box) break;
    const bool cross_x = tx <= t_next + eps * std::max(1.0, t_next);
    const bool cross_y = ty <= t_next + eps * std::max(1.0, t_next);
    if (cross_x && cross_y) {
      // Through a lattice vertex: the two side squares are met at one point.
      if (cx + stepx >= 0 && cx + stepx < nx) out.push_back({cy, cx + stepx, t_next, t_next});
      if (cy + stepy >= 0 && cy + stepy < ny) out.push_back({cy + stepy, cx, t_next, t_next});
      cx += stepx;
      cy += stepy;
    } else if (cross_x) {
      cx += stepx;
    } else {
      cy += stepy;
    }
    if (cx < 0 || cx >= nx || cy < 0 || cy >= ny) break;
    t = t_next;
  }
  return out;
}

/// Node membership in the delta-interior of component `id`.
inline std::vector<char> interior_mask(const ComponentLabeling& lab, const EnvironmentSample& env, int id,
                                       double delta) {
  std::vector<char> in(lab.labels.size(), 0);
  for (int idx : lab.cells(id))
    if (std::abs(env.a_field[static_cast<std::size_t>(idx)]) > delta) in[static_cast<std::size_t>(idx)] = 1;
  return in;
}

/// A square belongs to the delta-interior when its four corner nodes do.
inline bool square_inside(const std::vector<char>& in, int cols, int sr, int sc) {
  const int i = sr * cols + sc;
  return in[static_cast<std::size_t>(i)] && in[static_cast<std::size_t>(i + 1)] &&
         in[static_cast<std::size_t>(i + cols)] && in[static_cast<std::size_t>(i + cols + 1)];
}

/// Node nearest to `near` whose 3x3 neighbourhood lies in the
/// delta-interior of component `id`. Throws if none exists.
inline int anchor_node(const ComponentLabeling& lab, const EnvironmentSample& env, int id, double delta, Vec2 near) {
  const auto in = interior_mask(lab, env, id, delta);
  const int rows = env.rows();
  const int cols = env.cols();
  const double h = env.cell_h;
  int best = -1;
  double best_d = kInf;
  for (int idx : lab.cells(id)) {
    const int r = idx / cols;
    const int c = idx % cols;
    if (r < 1 || c < 1 || r + 1 >= rows || c + 1 >= cols) continue;
    bool ok = true;
    for (int dr = -1; dr <= 1 && ok; ++dr)
      for (int dc = -1; dc <= 1 && ok; ++dc) ok = in[static_cast<std::size_t>((r + dr) * cols + c + dc)] != 0;
    if (!ok) continue;
    const double d = norm(Vec2{c * h, r * h} - near);
    if (d < best_d) {
      best_d = d;
      best = idx;
    }
  }
  if (best < 0) throw StructuralError("component has no interior anchor at this delta");
  return best;
}

struct Gap {
  double s = 0.0;  // ray leaves U^delta
  double t = 0.0;  // ray re-enters U^delta
  double length() const { return t - s; }
};

struct GapStatistics {
  Vec2 origin;
  Vec2 direction;
  double delta = 0.0;
  double t_end = 0.0;      // where the traversal stopped (box edge or t_max)
  bool truncated = false;  // the last gap runs into the end of the ray
  std::vector<Gap> gaps;
  std::vector<double> ratios;

  /// Number of gaps strictly longer than k * unit, k = 0..k_max.
  std::vector<std::size_t> tail_counts(int k_max, double unit) const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(k_max) + 1, 0);
    for (const auto& g : gaps)
      for (int k = 0; k <= k_max; ++k)
        if (g.length() > k * unit) ++counts[static_cast<std::size_t>(k)];
    return counts;
  }
};

/// Maximal parameter intervals of a ray outside a node mask, using the
/// supercover of the ray.
inline GapStatistics gaps_along_ray(const std::vector<char>& in, int rows, int cols, double h, Vec2 origin,
                                    Vec2 direction, double t_max) {
  GapStatistics gs;
  gs.origin = origin;
  gs.direction = direction;
  const auto hits = ray_squares(rows, cols, h, origin, direction, t_max);
  bool open = false;
  Gap cur;
  for (const auto& hit : hits) {
    const bool good = square_inside(in, cols, hit.sr, hit.sc);
    if (!good) {
      if (!open) {
        open = true;
        cur.s = hit.t_in;
      }
      cur.t = std::max(cur.t, hit.t_out);
    } else if (open && hit.t_out > hit.t_in) {
      gs.gaps.push_back(cur);
      open = false;
      cur = Gap{};
    }
    gs.t_end = std::max(gs.t_end, hit.t_out);
  }
  if (open) {
    gs.gaps.push_back(cur);
    gs.truncated = true;
  }
  for (const auto& g : gs.gaps) gs.ratios.push_back(g.t > 0.0 ? g.s / g.t : 0.0);
  return gs;
}

/// Gaps of a ray outside the delta-interior of the spanning positive
/// component (or of `component_id` when given).
inline GapStatistics ray_gap_statistics(const ComponentLabeling& lab, const EnvironmentSample& env, Vec2 direction,
                                        double delta, std::optional<Vec2> origin = std::nullopt,
                                        std::optional<double> t_max = std::nullopt, int component_id = 0) {
  const double len = norm(direction);
  if (std::abs(len - 1.0) > 1e-9) throw ParameterError("ray direction must be a unit vector");
  int id = component_id;
  if (id == 0) {
    id = spanning_component(lab, 1);
    if (id == 0) id = spanning_component(lab, -1);
    if (id == 0) throw StructuralError("no spanning component: gap condition fails for bounded components");
  }
  const Vec2 centre{0.5 * (env.cols() - 1) * env.cell_h, 0.5 * (env.rows() - 1) * env.cell_h};
  const Vec2 o = origin ? *origin : env.a_field.position(anchor_node(lab, env, id, delta, centre));
  const auto in = interior_mask(lab, env, id, delta);
  auto gs = gaps_along_ray(in, env.rows(), env.cols(), env.cell_h, o, direction, t_max.value_or(kInf));
  gs.delta = delta;
  return gs;
}

inline void write_component_table(const std::filesystem::path& path, const ComponentLabeling& lab) {
  CsvWriter w(path);
  w.header({"id", "sign", "size", "spanning", "delta0"});
  for (const auto& c : lab.components) w.row(c.id, c.sign, c.cells, c.spanning() ? 1 : 0, c.delta0);
}

inline void write_gap_table(const std::filesystem::path& path, const GapStatistics& gs) {
  CsvWriter w(path);
  w.header({"j", "s_j", "t_j", "ratio"});
  for (std::size_t j = 0; j < gs.gaps.size(); ++j) w.row(j + 1, gs.gaps[j].s, gs.gaps[j].t, gs.ratios[j]);
}

}  // namespace fhl
