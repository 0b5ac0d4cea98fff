#pragma once

// Effective Hamiltonian as the support function of the Wulff set
// K = {m1 <= 1}, built from the averaged metric on a fan of directions.

#include <algorithm>
#include <filesystem>
#include <random>
#include <vector>

#include "fhl/common.hpp"
#include "fhl/csv.hpp"
#include "fhl/ergodic_averaging.hpp"
#include "fhl/metric_solver.hpp"
#include "fhl/topology.hpp"

namespace fhl {

/// Convex hull (counter-clockwise, collinear points dropped), Andrew's
/// monotone chain.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(hull[k - 1] - hull[k - 2], pts[i - 1] - hull[k - 2]) <= 0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

struct WulffSet {
  std::vector<Vec2> vertices;  // K, counter-clockwise
  std::vector<Vec2> polar;     // one per edge: the edge is {x : q . x = 1}

  /// Support function of K.
  double support(Vec2 p) const {
    double best = -kInf;
    for (const auto& v : vertices) best = std::max(best, dot(p, v));
    return best;
  }
  /// Gauge of K, i.e. the 1-homogeneous function whose unit sublevel set is K.
  double gauge(Vec2 y) const {
    double best = -kInf;
    for (const auto& q : polar) best = std::max(best, dot(y, q));
    return best;
  }
  bool empty() const { return vertices.empty(); }
};

inline WulffSet make_wulff(const std::vector<Vec2>& points) {
  WulffSet k;
  k.vertices = convex_hull(points);
  if (k.vertices.size() < 3) throw DataError("Wulff set is degenerate");
  const std::size_t n = k.vertices.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = k.vertices[i];
    const Vec2 b = k.vertices[(i + 1) % n];
    const double c = cross(a, b);
    if (!(c > 0.0)) throw DataError("Wulff set must contain the origin in its interior");
    const Vec2 d = b - a;
    k.polar.push_back(Vec2{d.y, -d.x} / c);
  }
  return k;
}

enum class HamiltonianSign { positive, negative, zero };

inline std::string to_string(HamiltonianSign s) {
  switch (s) {
    case HamiltonianSign::positive: return "positive";
    case HamiltonianSign::negative: return "negative";
    case HamiltonianSign::zero: return "zero";
  }
  return "zero";
}

struct EffectiveHamiltonian {
  int component_id = 0;
  HamiltonianSign sign = HamiltonianSign::zero;
  std::vector<Vec2> fan;            // unit directions
  std::vector<double> fan_mbar1;    // averaged metric at mu = 1 on the fan
  std::vector<Vec2> fan_points;     // fan[d] / fan_mbar1[d]
  WulffSet wulff;

  double operator()(Vec2 p) const {
    switch (sign) {
      case HamiltonianSign::zero: return 0.0;
      case HamiltonianSign::positive: return wulff.support(p);
      case HamiltonianSign::negative: return -wulff.support(p);
    }
    return 0.0;
  }
  bool is_zero() const { return sign == HamiltonianSign::zero; }
};

inline EffectiveHamiltonian zero_hamiltonian(int component_id = 0) {
  EffectiveHamiltonian h;
  h.component_id = component_id;
  h.sign = HamiltonianSign::zero;
  return h;
}

/// H(p) = max over fan directions y of p.y / m1(y), reflected for negative
/// components.
inline EffectiveHamiltonian effective_from_profile(const std::vector<Vec2>& fan, const std::vector<double>& mbar1,
                                                   int sign = 1, int component_id = 0) {
  if (fan.size() != mbar1.size() || fan.size() < 3) throw DataError("fan and profile must match and hold >= 3 entries");
  EffectiveHamiltonian h;
  h.component_id = component_id;
  h.sign = sign < 0 ? HamiltonianSign::negative : HamiltonianSign::positive;
  h.fan = fan;
  h.fan_mbar1 = mbar1;
  for (std::size_t d = 0; d < fan.size(); ++d) {
    if (!(mbar1[d] > 0.0) || !std::isfinite(mbar1[d])) throw DataError("averaged metric must be positive and finite");
    h.fan_points.push_back(fan[d] / mbar1[d]);
  }
  h.wulff = make_wulff(h.fan_points);
  return h;
}

inline EffectiveHamiltonian effective_from_mbar(const AveragedMetric& avg, int component_id = 0) {
  return effective_from_profile(avg.directions, avg.mbar1, avg.sign, component_id);
}

/// Bounded components homogenize to H = 0; only spanning ones accept data.
inline EffectiveHamiltonian effective_from_mbar(const AveragedMetric& avg, const ComponentInfo& component) {
  if (!component.spanning()) throw StructuralError("bounded component: use the zero Hamiltonian");
  return effective_from_mbar(avg, component.id);
}

struct MetricProfile {
  std::vector<Vec2> directions;
  std::vector<double> values;  // averaged metric at level mu
  double mu = 1.0;
  bool unbounded = false;      // H == 0: the constraint set is the whole plane
};

/// m_mu(y) = sup{y.q : H(q) <= mu} = mu * gauge_K(y).
inline MetricProfile mbar_from_effective(const EffectiveHamiltonian& h, const std::vector<Vec2>& directions,
                                         double mu = 1.0) {
  MetricProfile out;
  out.directions = directions;
  out.mu = mu;
  if (h.is_zero()) {
    out.unbounded = true;
    out.values.assign(directions.size(), kInf);
    return out;
  }
  for (const auto& y : directions) out.values.push_back(mu * h.wulff.gauge(y));
  return out;
}

struct Subgradient {
  Vec2 direction;
  std::size_t index = 0;
  double value = 0.0;             // H(p)
  double equality_gap = 0.0;      // |p.y* - m_{H(p)}(y*)|
  double max_violation = -kInf;   // max over fan of p.y - m_{H(p)}(y)
};

/// Maximising fan direction of p.y / m1(y); ties go to the lowest index.
inline Subgradient subgradient_direction(const EffectiveHamiltonian& h, Vec2 p) {
  if (h.is_zero()) throw DomainError("subgradient undefined for a zero Hamiltonian");
  Subgradient s;
  double best = -kInf;
  for (std::size_t d = 0; d < h.fan.size(); ++d) {
    const double v = dot(p, h.fan[d]) / h.fan_mbar1[d];
    if (v > best) {
      best = v;
      s.index = d;
    }
  }
  if (!(best > 0.0)) throw DomainError("subgradient undefined where H(p) = 0");
  s.direction = h.fan[s.index];
  s.value = best;
  s.equality_gap = std::abs(dot(p, s.direction) - best * h.fan_mbar1[s.index]);
  for (std::size_t d = 0; d < h.fan.size(); ++d)
    s.max_violation = std::max(s.max_violation, dot(p, h.fan[d]) - best * h.fan_mbar1[d]);
  return s;
}

struct ConvexityReport {
  double at_zero = 0.0;
  double homogeneity = 0.0;  // max |H(2p) - 2H(p)|
  double convexity = -kInf;  // max H((p+q)/2) - (H(p)+H(q))/2
  double sign_violation = 0.0;
  double scale = 0.0;        // max |H| over the sample, for relative tolerances
};

inline ConvexityReport verify_convex_homogeneous(const EffectiveHamiltonian& h, std::size_t pairs = 100,
                                                 std::uint64_t seed = 7) {
  ConvexityReport r;
  r.at_zero = h(Vec2{0.0, 0.0});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const double sgn = h.sign == HamiltonianSign::negative ? -1.0 : 1.0;
  for (std::size_t i = 0; i < pairs; ++i) {
    const Vec2 p{u(rng), u(rng)};
    const Vec2 q{u(rng), u(rng)};
    const double hp = h(p), hq = h(q);
    r.scale = std::max({r.scale, std::abs(hp), std::abs(hq)});
    r.homogeneity = std::max(r.homogeneity, std::abs(h(p * 2.0) - 2.0 * hp));
    // Convex for the positive case, concave for the negative one.
    r.convexity = std::max(r.convexity, sgn * (h((p + q) * 0.5) - 0.5 * (hp + hq)));
    r.sign_violation = std::max(r.sign_violation, -sgn * hp);
  }
  return r;
}

/// min over reachable nodes y with |y - z| >= r_min (and, optionally, within
/// `half_angle` of `direction`) of (m_mu(y, z) - p.(y - z)) / |y - z|.
inline double sublinearity_statistic(const TravelTimeField& field, const EnvironmentSample& env, Vec2 p, double r_min,
                                     std::optional<Vec2> direction = std::nullopt, double half_angle = 0.1) {
  const Vec2 z = env.a_field.position(field.source);
  double best = kInf;
  for (std::size_t i = 0; i < field.values.size(); ++i) {
    if (!std::isfinite(field.values[i])) continue;
    const Vec2 d = env.a_field.position(static_cast<int>(i)) - z;
    const double len = norm(d);
    if (len < r_min) continue;
    if (direction && dot(d, *direction) < std::cos(half_angle) * len) continue;
    best = std::min(best, (field.values[i] - dot(p, d)) / len);
  }
  return best;
}

inline void write_effective_csv(const std::filesystem::path& path, const EffectiveHamiltonian& h,
                                const std::vector<double>& angles) {
  CsvWriter w(path);
  w.header({"angle", "mbar1", "wulff_x", "wulff_y", "hbar_unit_p"});
  for (std::size_t d = 0; d < h.fan.size(); ++d) {
    const double ang = d < angles.size() ? angles[d] : std::atan2(h.fan[d].y, h.fan[d].x);
    w.row(ang, h.fan_mbar1[d], h.fan_points[d].x, h.fan_points[d].y, h(h.fan[d]));
  }
}

inline void write_hbar_grid_csv(const std::filesystem::path& path, const EffectiveHamiltonian& h, int n, double pmax) {
  CsvWriter w(path);
  w.header({"px", "py", "hbar"});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Vec2 p{-pmax + 2.0 * pmax * j / (n - 1), -pmax + 2.0 * pmax * i / (n - 1)};
      w.row(p.x, p.y, h(p));
    }
}

inline void write_polygon_csv(const std::filesystem::path& path, const WulffSet& k) {
  CsvWriter w(path);
  w.header({"vertex", "x", "y", "polar_x", "polar_y"});
  for (std::size_t i = 0; i < k.vertices.size(); ++i)
    w.row(i, k.vertices[i].x, k.vertices[i].y, k.polar[i].x, k.polar[i].y);
}

}  // namespace fhl
