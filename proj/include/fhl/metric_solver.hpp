#pragma once

// Maximal subsolution of the metric problem a|Dm| = mu on one component,
// realized as the minimal travel time from a point source.

#include <algorithm>
#include <queue>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fhl/common.hpp"
#include "fhl/env_media.hpp"
#include "fhl/grid.hpp"
#include "fhl/topology.hpp"

namespace fhl {

enum class MetricMethod { dijkstra8, fmm };

inline std::string to_string(MetricMethod m) { return m == MetricMethod::dijkstra8 ? "dijkstra8" : "fmm"; }

inline MetricMethod parse_metric_method(const std::string& s) {
  if (s == "dijkstra8" || s == "dijkstra") return MetricMethod::dijkstra8;
  if (s == "fmm") return MetricMethod::fmm;
  throw ParameterError("unknown metric method: " + s);
}

struct MetricOptions {
  double delta_floor = 1e-6;  // nodes with |a| <= delta_floor are left out
  int fmm_init_radius = 6;    // cells around the source initialised exactly
};

struct TravelTimeField {
  int component_id = 0;
  int sign = 1;
  int source = 0;
  double mu = 1.0;
  MetricMethod method = MetricMethod::dijkstra8;
  GridD values;  // +inf outside the component or where unreachable

  double at(int idx) const { return values[static_cast<std::size_t>(idx)]; }
  bool reachable(int idx) const { return std::isfinite(at(idx)); }
  /// Values with the sign convention of the component: negative components
  /// carry the metric of the concave problem, i.e. the negated travel time.
  GridD signed_values() const {
    GridD out = values;
    if (sign < 0)
      for (auto& v : out.values()) v = -v;
    return out;
  }
};

namespace detail {

struct MetricSetup {
  std::vector<char> allowed;
  std::vector<double> speed;  // |a| on allowed nodes
  int sign = 1;
};

inline MetricSetup metric_setup(const EnvironmentSample& env, const ComponentLabeling& lab, int id, int z, double mu,
                                const MetricOptions& opt) {
  if (!(mu > 0.0)) throw ParameterError("metric level mu must be positive");
  const auto& info = lab.info(id);
  if (z < 0 || static_cast<std::size_t>(z) >= env.a_field.size()) throw DomainError("source outside the grid");
  if (env.a_field[static_cast<std::size_t>(z)] == 0.0) throw DomainError("source lies on {a = 0}");
  if (lab.label_at(z) != id) throw DomainError("source not inside the component");
  if (std::abs(env.a_field[static_cast<std::size_t>(z)]) <= opt.delta_floor)
    throw DomainError("source speed below the exclusion floor");
  MetricSetup s;
  s.sign = info.sign;
  s.allowed.assign(env.a_field.size(), 0);
  s.speed.assign(env.a_field.size(), 0.0);
  for (int idx : lab.cells(id)) {
    const double v = std::abs(env.a_field[static_cast<std::size_t>(idx)]);
    if (v > opt.delta_floor) {
      s.allowed[static_cast<std::size_t>(idx)] = 1;
      s.speed[static_cast<std::size_t>(idx)] = v;
    }
  }
  return s;
}

using QueueItem = std::pair<double, int>;
using MinQueue = std::priority_queue<QueueItem, std::vector<QueueItem>, std::greater<>>;

}  // namespace detail

/// Shortest path on the 8-neighbour graph with edge cost mu*|edge|/speed,
/// speed the mean of the endpoint speeds. Diagonal steps need both
/// orthogonal neighbours inside the component.
inline TravelTimeField solve_metric_dijkstra(const EnvironmentSample& env, const ComponentLabeling& lab, int id, int z,
                                             double mu, const MetricOptions& opt = {}) {
  const auto setup = detail::metric_setup(env, lab, id, z, mu, opt);
  const int rows = env.rows();
  const int cols = env.cols();
  const double h = env.cell_h;
  const double diag = h * std::sqrt(2.0);
  TravelTimeField f;
  f.component_id = id;
  f.sign = setup.sign;
  f.source = z;
  f.mu = mu;
  f.method = MetricMethod::dijkstra8;
  f.values = GridD(rows, cols, h, kInf);
  std::vector<char> done(env.a_field.size(), 0);
  detail::MinQueue pq;
  f.values[static_cast<std::size_t>(z)] = 0.0;
  pq.emplace(0.0, z);
  const int dr[8] = {0, 0, -1, 1, -1, -1, 1, 1};
  const int dc[8] = {-1, 1, 0, 0, -1, 1, -1, 1};
  auto ok = [&](int r, int c) {
    return r >= 0 && r < rows && c >= 0 && c < cols && setup.allowed[static_cast<std::size_t>(r * cols + c)];
  };
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    pq.pop();
    if (done[static_cast<std::size_t>(u)]) continue;
    done[static_cast<std::size_t>(u)] = 1;
    const int r = u / cols;
    const int c = u % cols;
    const double su = setup.speed[static_cast<std::size_t>(u)];
    for (int k = 0; k < 8; ++k) {
      const int rr = r + dr[k];
      const int cc = c + dc[k];
      if (!ok(rr, cc)) continue;
      if (k >= 4 && (!ok(r, cc) || !ok(rr, c))) continue;
      const int v = rr * cols + cc;
      if (done[static_cast<std::size_t>(v)]) continue;
      const double len = k >= 4 ? diag : h;
      const double nd = d + mu * len / (0.5 * (su + setup.speed[static_cast<std::size_t>(v)]));
      if (nd < f.values[static_cast<std::size_t>(v)]) {
        f.values[static_cast<std::size_t>(v)] = nd;
        pq.emplace(nd, v);
      }
    }
  }
  return f;
}

/// First-order fast marching for |Dm| = mu/|a| on the component. Nodes in a
/// small disc around the source are initialised with the straight-segment
/// travel time.
inline TravelTimeField solve_metric_fmm(const EnvironmentSample& env, const ComponentLabeling& lab, int id, int z,
                                        double mu, const MetricOptions& opt = {}) {
  const auto setup = detail::metric_setup(env, lab, id, z, mu, opt);
  const int rows = env.rows();
  const int cols = env.cols();
  const double h = env.cell_h;
  TravelTimeField f;
  f.component_id = id;
  f.sign = setup.sign;
  f.source = z;
  f.mu = mu;
  f.method = MetricMethod::fmm;
  f.values = GridD(rows, cols, h, kInf);
  auto ok = [&](int r, int c) {
    return r >= 0 && r < rows && c >= 0 && c < cols && setup.allowed[static_cast<std::size_t>(r * cols + c)];
  };
  const int zr = z / cols;
  const int zc = z % cols;
  // Largest disc radius (in cells) fully inside the allowed set.
  int radius = std::max(opt.fmm_init_radius, 0);
  for (; radius > 0; --radius) {
    bool inside = true;
    for (int dr = -radius; dr <= radius && inside; ++dr)
      for (int dc = -radius; dc <= radius && inside; ++dc) {
        if (dr * dr + dc * dc > radius * radius) continue;
        if (rows == 1 && dr != 0) continue;
        if (!ok(zr + dr, zc + dc)) inside = false;
      }
    if (inside) break;
  }
  std::vector<char> known(env.a_field.size(), 0);
  const double sz = setup.speed[static_cast<std::size_t>(z)];
  std::vector<int> seeds;
  for (int dr = -radius; dr <= radius; ++dr)
    for (int dc = -radius; dc <= radius; ++dc) {
      if (dr * dr + dc * dc > radius * radius) continue;
      if (rows == 1 && dr != 0) continue;
      const int v = (zr + dr) * cols + (zc + dc);
      const double sv = setup.speed[static_cast<std::size_t>(v)];
      const double dist = h * std::sqrt(static_cast<double>(dr * dr + dc * dc));
      f.values[static_cast<std::size_t>(v)] = mu * dist * 0.5 * (1.0 / sv + 1.0 / sz);
      known[static_cast<std::size_t>(v)] = 1;
      seeds.push_back(v);
    }
  if (seeds.empty()) {
    f.values[static_cast<std::size_t>(z)] = 0.0;
    known[static_cast<std::size_t>(z)] = 1;
    seeds.push_back(z);
  }
  auto update = [&](int r, int c) {
    const double slow = mu / setup.speed[static_cast<std::size_t>(r * cols + c)];
    auto known_val = [&](int rr, int cc) {
      return ok(rr, cc) && known[static_cast<std::size_t>(rr * cols + cc)] ? f.values[static_cast<std::size_t>(rr * cols + cc)]
                                                                            : kInf;
    };
    const double tx = std::min(known_val(r, c - 1), known_val(r, c + 1));
    const double ty = std::min(known_val(r - 1, c), known_val(r + 1, c));
    const double hf = h * slow;
    const double lo = std::min(tx, ty);
    const double hi = std::max(tx, ty);
    if (!std::isfinite(hi) || hi - lo >= hf) return lo + hf;
    const double diff = hi - lo;
    return 0.5 * (lo + hi + std::sqrt(2.0 * hf * hf - diff * diff));
  };
  detail::MinQueue pq;
  const int dr4[4] = {0, 0, -1, 1};
  const int dc4[4] = {-1, 1, 0, 0};
  auto push_neighbours = [&](int u) {
    const int r = u / cols;
    const int c = u % cols;
    for (int k = 0; k < 4; ++k) {
      const int rr = r + dr4[k];
      const int cc = c + dc4[k];
      if (!ok(rr, cc)) continue;
      const int v = rr * cols + cc;
      if (known[static_cast<std::size_t>(v)]) continue;
      const double t = update(rr, cc);
      if (t < f.values[static_cast<std::size_t>(v)]) {
        f.values[static_cast<std::size_t>(v)] = t;
        pq.emplace(t, v);
      }
    }
  };
  for (int s : seeds) push_neighbours(s);
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    pq.pop();
    if (known[static_cast<std::size_t>(u)] || d > f.values[static_cast<std::size_t>(u)]) continue;
    known[static_cast<std::size_t>(u)] = 1;
    push_neighbours(u);
  }
  return f;
}

inline TravelTimeField solve_metric(MetricMethod method, const EnvironmentSample& env, const ComponentLabeling& lab,
                                    int id, int z, double mu, const MetricOptions& opt = {}) {
  return method == MetricMethod::fmm ? solve_metric_fmm(env, lab, id, z, mu, opt)
                                     : solve_metric_dijkstra(env, lab, id, z, mu, opt);
}

struct MetricReport {
  double symmetry_defect = 0.0;  // max |m(y,z) - m(z,y)| over source pairs
  double triangle_defect = -kInf;  // max m(x,z) - m(x,y) - m(y,z)
  std::size_t triples = 0;
  double lipschitz_bound = 0.0;       // mu/delta + eta
  double lipschitz_local = 0.0;       // max |dm|/|dx| over neighbouring nodes in U^delta
  double lipschitz_local_excess = -kInf;  // max |dm| - bound*|dx| - 2h*mu/delta, neighbours
  double lipschitz_global = 0.0;      // same ratio over random far pairs in U^delta
  double lipschitz_global_excess = -kInf;
  double log_bound_defect = kInf;     // min m(y) - (mu/L)|log a(y) - log a(z)|
  double log_bound_rel_defect = kInf; // same divided by m(y)
  double pde_residual_max = 0.0;      // max | |a||Dm|_upwind - mu | / mu
  double pde_residual_mean = 0.0;
};

/// Godunov upwind |Dm| at node (r, c), using only finite neighbours.
inline double upwind_gradient_norm(const GridD& m, int r, int c) {
  const double v = m(r, c);
  auto val = [&](int rr, int cc) { return m.inside(rr, cc) ? m(rr, cc) : kInf; };
  const double h = m.h();
  auto part = [&](double lo_nb, double hi_nb) {
    const double dm = std::isfinite(lo_nb) ? (v - lo_nb) / h : 0.0;   // backward
    const double dp = std::isfinite(hi_nb) ? (hi_nb - v) / h : 0.0;   // forward
    const double g = std::max({dm, -dp, 0.0});
    return g * g;
  };
  return std::sqrt(part(val(r, c - 1), val(r, c + 1)) + part(val(r - 1, c), val(r + 1, c)));
}

/// Structural checks on a family of travel-time fields of the same component
/// computed with the same method and mu from different sources.
inline MetricReport verify_metric_properties(const std::vector<TravelTimeField>& fields, const EnvironmentSample& env,
                                             const ComponentLabeling& lab, double delta, double eta,
                                             std::size_t sampled_points = 100, std::uint64_t seed = 1,
                                             int residual_skip_radius = 8) {
  if (fields.empty()) throw ParameterError("verify_metric_properties needs at least one field");
  MetricReport rep;
  const double mu = fields.front().mu;
  const int id = fields.front().component_id;
  const double h = env.cell_h;
  const int cols = env.cols();
  const int rows = env.rows();
  for (const auto& f : fields)
    if (f.mu != mu || f.component_id != id || f.method != fields.front().method)
      throw ParameterError("fields must share mu, component and method");
  for (std::size_t i = 0; i < fields.size(); ++i)
    for (std::size_t j = i + 1; j < fields.size(); ++j) {
      const double a = fields[i].at(fields[j].source);
      const double b = fields[j].at(fields[i].source);
      if (std::isfinite(a) && std::isfinite(b)) rep.symmetry_defect = std::max(rep.symmetry_defect, std::abs(a - b));
    }
  std::vector<int> reach;
  for (int idx : lab.cells(id))
    if (fields.front().reachable(idx)) reach.push_back(idx);
  std::mt19937_64 rng(seed);
  if (!reach.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, reach.size() - 1);
    for (std::size_t s = 0; s < sampled_points; ++s) {
      const int x = reach[pick(rng)];
      for (std::size_t i = 0; i < fields.size(); ++i)
        for (std::size_t j = 0; j < fields.size(); ++j) {
          if (i == j) continue;
          const double mxz = fields[j].at(x);
          const double mxy = fields[i].at(x);
          const double myz = fields[j].at(fields[i].source);
          if (!std::isfinite(mxz) || !std::isfinite(mxy) || !std::isfinite(myz)) continue;
          rep.triangle_defect = std::max(rep.triangle_defect, mxz - mxy - myz);
          ++rep.triples;
        }
    }
  }

  const auto& f0 = fields.front();
  const auto in = interior_mask(lab, env, id, delta);
  rep.lipschitz_bound = mu / delta + eta;
  const double slack = 2.0 * h * mu / delta;
  std::vector<int> interior;
  for (int idx : reach)
    if (in[static_cast<std::size_t>(idx)]) interior.push_back(idx);
  for (int idx : interior) {
    const int r = idx / cols;
    const int c = idx % cols;
    const int nb[4][2] = {{r, c + 1}, {r + 1, c}, {r + 1, c + 1}, {r + 1, c - 1}};
    for (const auto& q : nb) {
      if (q[0] >= rows || q[1] < 0 || q[1] >= cols) continue;
      const int j = q[0] * cols + q[1];
      if (!in[static_cast<std::size_t>(j)] || !f0.reachable(j)) continue;
      const double dist = (q[0] != r && q[1] != c) ? h * std::sqrt(2.0) : h;
      const double dm = std::abs(f0.at(idx) - f0.at(j));
      rep.lipschitz_local = std::max(rep.lipschitz_local, dm / dist);
      rep.lipschitz_local_excess = std::max(rep.lipschitz_local_excess, dm - rep.lipschitz_bound * dist - slack);
    }
  }
  if (interior.size() >= 2) {
    std::uniform_int_distribution<std::size_t> pick(0, interior.size() - 1);
    for (std::size_t s = 0; s < sampled_points * 10; ++s) {
      const int x = interior[pick(rng)];
      const int y = interior[pick(rng)];
      if (x == y) continue;
      const double dist = norm(env.a_field.position(x) - env.a_field.position(y));
      const double dm = std::abs(f0.at(x) - f0.at(y));
      rep.lipschitz_global = std::max(rep.lipschitz_global, dm / dist);
      rep.lipschitz_global_excess = std::max(rep.lipschitz_global_excess, dm - rep.lipschitz_bound * dist - slack);
    }
  }

  const double az = std::abs(env.a_field[static_cast<std::size_t>(f0.source)]);
  double res_sum = 0.0;
  std::size_t res_n = 0;
  for (int idx : reach) {
    const double m = f0.at(idx);
    const double ay = std::abs(env.a_field[static_cast<std::size_t>(idx)]);
    const double lower = mu / env.lipschitz_L * std::abs(std::log(ay) - std::log(az));
    const double defect = m - lower;
    rep.log_bound_defect = std::min(rep.log_bound_defect, defect);
    if (m > 0.0) rep.log_bound_rel_defect = std::min(rep.log_bound_rel_defect, defect / m);
    const int r = idx / cols;
    const int c = idx % cols;
    const int sr = f0.source / cols;
    const int sc = f0.source % cols;
    bool full = (r - sr) * (r - sr) + (c - sc) * (c - sc) > residual_skip_radius * residual_skip_radius;
    const int nb4[4][2] = {{r, c - 1}, {r, c + 1}, {r - 1, c}, {r + 1, c}};
    for (const auto& q : nb4) {
      if (!env.a_field.inside(q[0], q[1])) {
        if (rows > 1 || q[0] == r) full = false;
        continue;
      }
      if (!f0.reachable(q[0] * cols + q[1])) full = false;
    }
    if (!full) continue;
    const double res = std::abs(ay * upwind_gradient_norm(f0.values, r, c) - mu) / mu;
    rep.pde_residual_max = std::max(rep.pde_residual_max, res);
    res_sum += res;
    ++res_n;
  }
  if (res_n) rep.pde_residual_mean = res_sum / static_cast<double>(res_n);
  return rep;
}

}  // namespace fhl
