#pragma once

// Level-set evolution u_t + a(x/eps)|Du| = 0, the discounted stationary
// problem w + a(x/eps)|p + Dw| = 0, and the effective equation
// u_t + H(Du) = 0 by finite differences and by the Hopf-Lax formula.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fhl/common.hpp"
#include "fhl/csv.hpp"
#include "fhl/effective_h.hpp"
#include "fhl/env_media.hpp"
#include "fhl/grid.hpp"

namespace fhl {

enum class Boundary { periodic, extrapolate };

inline Boundary parse_boundary(const std::string& s) {
  if (s == "periodic") return Boundary::periodic;
  if (s == "extrapolate" || s == "extrapolating") return Boundary::extrapolate;
  throw ParameterError("unknown boundary mode: " + s);
}

inline constexpr double kMaxCfl = 0.45;

struct EvolutionConfig {
  double cfl = kMaxCfl;
  Boundary boundary = Boundary::periodic;
  double T = 0.5;
  int snapshots = 1;  // stored at T*k/snapshots, k = 0..snapshots
  double dt = 0.0;    // 0 picks the CFL step
};

/// Macro-scale node lattice: node (r, c) sits at origin + (c, r) * hx.
struct MacroFrame {
  int rows = 0;
  int cols = 0;
  double hx = 1.0;
  Vec2 origin;

  Vec2 x(int idx) const { return origin + Vec2{static_cast<double>(idx % cols), static_cast<double>(idx / cols)} * hx; }
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// Frame of the oscillatory problem at scale eps on a sample: macro
/// x = eps * (y - box centre), so node spacing is eps * cell_h.
inline MacroFrame frame_for(const EnvironmentSample& env, double eps) {
  MacroFrame f;
  f.rows = env.rows();
  f.cols = env.cols();
  f.hx = eps * env.cell_h;
  f.origin = Vec2{-0.5 * (env.cols() - 1), -0.5 * (env.rows() - 1)} * f.hx;
  return f;
}

/// Square frame of half-width `half` centred at the origin with spacing hx.
inline MacroFrame centred_frame(double half, double hx) {
  MacroFrame f;
  const int n = 2 * static_cast<int>(std::ceil(half / hx)) + 1;
  f.rows = f.cols = n;
  f.hx = hx;
  f.origin = Vec2{-0.5 * (n - 1), -0.5 * (n - 1)} * hx;
  return f;
}

struct InitialData {
  enum class Kind { cone, bump, plane, custom };
  Kind kind = Kind::cone;
  Vec2 center;
  double width = 0.5;  // bump length scale
  Vec2 slope;          // plane data p.x
  std::function<double(Vec2)> fn;

  static InitialData cone(Vec2 c = {}) { return {Kind::cone, c, 0.5, {}, {}}; }
  static InitialData bump(Vec2 c = {}, double w = 0.5) { return {Kind::bump, c, w, {}, {}}; }
  static InitialData plane(Vec2 p) { return {Kind::plane, {}, 0.5, p, {}}; }
  static InitialData custom(std::function<double(Vec2)> f) { return {Kind::custom, {}, 0.5, {}, std::move(f)}; }

  bool radial() const { return kind == Kind::cone || kind == Kind::bump; }
  /// Radial profile f with u0(x) = f(|x - center|), nondecreasing.
  double profile(double r) const {
    if (kind == Kind::cone) return r;
    return 1.0 - std::exp(-r * r / (width * width));
  }
  double operator()(Vec2 x) const {
    switch (kind) {
      case Kind::cone:
      case Kind::bump: return profile(norm(x - center));
      case Kind::plane: return dot(slope, x);
      case Kind::custom: return fn(x);
    }
    return 0.0;
  }
};

inline std::string to_string(InitialData::Kind k) {
  switch (k) {
    case InitialData::Kind::cone: return "cone";
    case InitialData::Kind::bump: return "bump";
    case InitialData::Kind::plane: return "plane";
    case InitialData::Kind::custom: return "custom";
  }
  return "custom";
}

inline GridD sample_initial(const InitialData& u0, const MacroFrame& f) {
  GridD g(f.rows, f.cols, f.hx);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = u0(f.x(static_cast<int>(i)));
  return g;
}

struct GridFunction {
  GridD values;
  double t = 0.0;
  double epsilon = 1.0;
  double cfl = 0.0;
  MacroFrame frame;
};

struct Trajectory {
  std::vector<GridFunction> snapshots;
  double dt = 0.0;
  std::size_t steps = 0;
  std::vector<std::string> warnings;

  const GridFunction& final() const { return snapshots.back(); }
};

namespace detail {

// One-sided differences at node (r, c) along both axes.
struct Differences {
  double xm, xp, ym, yp;
};

inline Differences differences(const GridD& u, int r, int c, Boundary bc) {
  const int rows = u.rows();
  const int cols = u.cols();
  const double h = u.h();
  const double v = u(r, c);
  auto at = [&](int rr, int cc) -> double {
    if (bc == Boundary::periodic) return u((rr + rows) % rows, (cc + cols) % cols);
    // Linear extrapolation through the boundary node.
    if (cc < 0) return cols > 1 ? 2.0 * u(rr, 0) - u(rr, 1) : u(rr, 0);
    if (cc >= cols) return cols > 1 ? 2.0 * u(rr, cols - 1) - u(rr, cols - 2) : u(rr, cols - 1);
    if (rr < 0) return rows > 1 ? 2.0 * u(0, cc) - u(1, cc) : u(0, cc);
    if (rr >= rows) return rows > 1 ? 2.0 * u(rows - 1, cc) - u(rows - 2, cc) : u(rows - 1, cc);
    return u(rr, cc);
  };
  Differences d{};
  d.xm = (v - at(r, c - 1)) / h;
  d.xp = (at(r, c + 1) - v) / h;
  if (rows > 1) {
    d.ym = (v - at(r - 1, c)) / h;
    d.yp = (at(r + 1, c) - v) / h;
  } else {
    d.ym = d.yp = 0.0;
  }
  return d;
}

// Godunov |p| for an expanding front (a > 0) and a contracting one (a < 0).
inline double godunov_norm_expanding(double xm, double xp, double ym, double yp) {
  const double gx = std::max({xm, -xp, 0.0});
  const double gy = std::max({ym, -yp, 0.0});
  return std::sqrt(gx * gx + gy * gy);
}

inline double godunov_norm_contracting(double xm, double xp, double ym, double yp) {
  const double gx = std::max({-xm, xp, 0.0});
  const double gy = std::max({-ym, yp, 0.0});
  return std::sqrt(gx * gx + gy * gy);
}

// a * |p + Du| with sign-aware upwinding.
inline double level_set_flux(double a, double px, double py, const Differences& d) {
  if (a > 0.0) return a * godunov_norm_expanding(px + d.xm, px + d.xp, py + d.ym, py + d.yp);
  if (a < 0.0) return a * godunov_norm_contracting(px + d.xm, px + d.xp, py + d.ym, py + d.yp);
  return 0.0;
}

inline std::vector<double> snapshot_times(const EvolutionConfig& cfg) {
  if (cfg.snapshots < 1) throw ConfigurationError("need at least one snapshot");
  std::vector<double> t;
  for (int k = 0; k <= cfg.snapshots; ++k) t.push_back(cfg.T * k / cfg.snapshots);
  return t;
}

// Time loop shared by the schemes: `step(u, dt)` advances in place.
inline Trajectory march(GridD u, const MacroFrame& frame, double eps, double dt_cfl, const EvolutionConfig& cfg,
                        const std::function<void(GridD&, double)>& step) {
  if (!(cfg.T >= 0.0)) throw ConfigurationError("final time must be nonnegative");
  if (!(cfg.cfl > 0.0) || cfg.cfl > kMaxCfl) throw ConfigurationError("CFL number must lie in (0, 0.45]");
  double dt_max = dt_cfl;
  if (cfg.dt > 0.0) {
    if (cfg.dt > dt_cfl * (1.0 + 1e-12)) throw ConfigurationError("time step violates the CFL bound");
    dt_max = cfg.dt;
  }
  Trajectory tr;
  const auto times = snapshot_times(cfg);
  tr.snapshots.push_back({u, 0.0, eps, cfg.cfl, frame});
  double used_dt = 0.0;
  for (std::size_t k = 1; k < times.size(); ++k) {
    const double span = times[k] - times[k - 1];
    std::size_t n = 0;
    double dt = 0.0;
    if (span > 0.0) {
      n = std::isfinite(dt_max) ? static_cast<std::size_t>(std::ceil(span / dt_max - 1e-12)) : 1;
      n = std::max<std::size_t>(n, 1);
      dt = span / static_cast<double>(n);
    }
    for (std::size_t s = 0; s < n; ++s) step(u, dt);
    tr.steps += n;
    used_dt = std::max(used_dt, dt);
    tr.snapshots.push_back({u, times[k], eps, cfg.cfl, frame});
  }
  tr.dt = used_dt;
  return tr;
}

}  // namespace detail

/// Explicit monotone scheme for u_t + a(x/eps)|Du| = 0 on the sample's
/// lattice at macro spacing eps * cell_h.
inline Trajectory solve_oscillatory(const EnvironmentSample& env, const GridD& u0, double eps,
                                    const EvolutionConfig& cfg) {
  if (!(eps > 0.0 && eps <= 1.0)) throw ParameterError("epsilon must lie in (0, 1]");
  if (u0.rows() != env.rows() || u0.cols() != env.cols()) throw ParameterError("initial data does not match the sample");
  const auto frame = frame_for(env, eps);
  const double amax = env.max_abs_a();
  const double dt_cfl = amax > 0.0 ? cfg.cfl * frame.hx / (std::sqrt(2.0) * amax) : kInf;
  GridD start(frame.rows, frame.cols, frame.hx);
  start.storage() = u0.storage();
  const auto& a = env.a_field;
  GridD next = start;
  auto tr = detail::march(start, frame, eps, dt_cfl, cfg, [&](GridD& u, double dt) {
    for (int r = 0; r < u.rows(); ++r)
      for (int c = 0; c < u.cols(); ++c) {
        const double av = a(r, c);
        if (av == 0.0) {
          next(r, c) = u(r, c);
          continue;
        }
        const auto d = detail::differences(u, r, c, cfg.boundary);
        next(r, c) = u(r, c) - dt * detail::level_set_flux(av, 0.0, 0.0, d);
      }
    std::swap(u.storage(), next.storage());
  });
  const double cells_per_cube = 1.0 / env.cell_h;
  if (cells_per_cube < 8.0) tr.warnings.push_back("under-resolved: fewer than 8 cells per eps-cube");
  return tr;
}

inline Trajectory solve_oscillatory(const EnvironmentSample& env, const InitialData& u0, double eps,
                                    const EvolutionConfig& cfg) {
  return solve_oscillatory(env, sample_initial(u0, frame_for(env, eps)), eps, cfg);
}

struct StationaryOptions {
  double tolerance = 1e-8;
  std::size_t max_iterations = 2000000;
};

struct StationaryResult {
  GridFunction w;
  std::size_t iterations = 0;
  double residual = 0.0;  // max |w + a|p + Dw|| at the returned iterate
  double tau = 0.0;
};

/// Discounted problem w + a(x/eps)|p + Dw| = 0 by the pseudo-time iteration
/// w <- w - tau (w + a G(p + Dw)), a sup-norm contraction with factor 1 - tau.
inline StationaryResult solve_stationary(const EnvironmentSample& env, Vec2 p, double eps, const EvolutionConfig& cfg,
                                         const StationaryOptions& opt = {}) {
  if (!(eps > 0.0 && eps <= 1.0)) throw ParameterError("epsilon must lie in (0, 1]");
  const auto frame = frame_for(env, eps);
  const double amax = env.max_abs_a();
  const double dims = env.rows() > 1 ? std::sqrt(2.0) : 1.0;
  StationaryResult res;
  res.tau = 1.0 / (1.0 + dims * amax / frame.hx);
  GridD w(frame.rows, frame.cols, frame.hx, 0.0);
  GridD next = w;
  const auto& a = env.a_field;
  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    double worst = 0.0;
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) {
        const auto d = detail::differences(w, r, c, cfg.boundary);
        const double resid = w(r, c) + detail::level_set_flux(a(r, c), p.x, p.y, d);
        worst = std::max(worst, std::abs(resid));
        next(r, c) = w(r, c) - res.tau * resid;
      }
    res.residual = worst;
    if (worst < opt.tolerance) break;
    std::swap(w.storage(), next.storage());
  }
  if (res.residual >= opt.tolerance) throw NumericalError("stationary iteration did not converge");
  res.w = {w, 0.0, eps, res.tau, frame};
  return res;
}

/// Monotone upwind scheme for u_t + H(Du) = 0 with H the support function
/// of the Wulff polygon: max over vertices v of the upwind v.Du.
inline Trajectory solve_effective_fd(const EffectiveHamiltonian& H, const GridD& u0, const MacroFrame& frame,
                                     const EvolutionConfig& cfg) {
  if (u0.rows() != frame.rows || u0.cols() != frame.cols) throw ParameterError("initial data does not match the frame");
  GridD start(frame.rows, frame.cols, frame.hx);
  start.storage() = u0.storage();
  if (H.is_zero()) {
    return detail::march(start, frame, 1.0, kInf, cfg, [](GridD&, double) {});
  }
  double vmax = 0.0;
  for (const auto& v : H.wulff.vertices) vmax = std::max(vmax, norm(v));
  const double dt_cfl = cfg.cfl * frame.hx / (std::sqrt(2.0) * vmax);
  const bool concave = H.sign == HamiltonianSign::negative;
  const auto& verts = H.wulff.vertices;
  GridD next = start;
  return detail::march(start, frame, 1.0, dt_cfl, cfg, [&](GridD& u, double dt) {
    for (int r = 0; r < u.rows(); ++r)
      for (int c = 0; c < u.cols(); ++c) {
        const auto d = detail::differences(u, r, c, cfg.boundary);
        double best = concave ? kInf : -kInf;
        for (const auto& v0 : verts) {
          const Vec2 v = concave ? -v0 : v0;
          const double val = std::max(v.x, 0.0) * d.xm + std::min(v.x, 0.0) * d.xp + std::max(v.y, 0.0) * d.ym +
                             std::min(v.y, 0.0) * d.yp;
          best = concave ? std::min(best, val) : std::max(best, val);
        }
        next(r, c) = u(r, c) - dt * best;
      }
    std::swap(u.storage(), next.storage());
  });
}

/// Euclidean distance from x to the convex polygon with the given
/// counter-clockwise vertices (0 inside).
inline double distance_to_polygon(Vec2 x, const std::vector<Vec2>& poly) {
  bool inside = true;
  double best = kInf;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[(i + 1) % n];
    if (cross(b - a, x - a) < 0.0) inside = false;
    const Vec2 ab = b - a;
    const double len2 = dot(ab, ab);
    const double s = len2 > 0.0 ? std::clamp(dot(x - a, ab) / len2, 0.0, 1.0) : 0.0;
    best = std::min(best, norm(x - (a + ab * s)));
  }
  return inside ? 0.0 : best;
}

/// Hopf-Lax value min over v in tK of u(x - v) by sampling vertices and
/// `per_edge` points on every edge of tK (max over -K in the concave case).
inline double hopf_lax_sampled(const std::function<double(Vec2)>& u, const EffectiveHamiltonian& H, Vec2 x, double t,
                               int per_edge = 32) {
  if (H.is_zero() || t == 0.0) return u(x);
  const bool concave = H.sign == HamiltonianSign::negative;
  const auto& verts = H.wulff.vertices;
  double best = concave ? -kInf : kInf;
  for (std::size_t i = 0; i < verts.size(); ++i) {
    const Vec2 a = verts[i];
    const Vec2 b = verts[(i + 1) % verts.size()];
    for (int k = 0; k < per_edge; ++k) {
      const Vec2 v = a + (b - a) * (static_cast<double>(k) / per_edge);
      const double val = concave ? u(x + v * t) : u(x - v * t);
      best = concave ? std::max(best, val) : std::min(best, val);
    }
  }
  return best;
}

/// Exact-in-time Hopf-Lax solution of u_t + H(Du) = 0.
inline GridFunction solve_effective_hopflax(const EffectiveHamiltonian& H, const InitialData& u0,
                                            const MacroFrame& frame, double t) {
  if (!(t >= 0.0)) throw ParameterError("time must be nonnegative");
  GridFunction out;
  out.t = t;
  out.frame = frame;
  out.values = GridD(frame.rows, frame.cols, frame.hx);
  const bool concave = H.sign == HamiltonianSign::negative;
  std::vector<Vec2> tk;
  for (const auto& v : H.wulff.vertices) tk.push_back(v * t);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const Vec2 x = frame.x(static_cast<int>(i));
    double val;
    if (H.is_zero() || t == 0.0) {
      val = u0(x);
    } else if (u0.kind == InitialData::Kind::plane) {
      val = dot(u0.slope, x) - t * H(u0.slope);
    } else if (u0.radial()) {
      const Vec2 d = x - u0.center;
      if (!concave) {
        val = u0.profile(distance_to_polygon(d, tk));
      } else {
        double far = 0.0;
        for (const auto& v : tk) far = std::max(far, norm(d + v));
        val = u0.profile(far);
      }
    } else {
      val = hopf_lax_sampled([&](Vec2 y) { return u0(y); }, H, x, t);
    }
    out.values[i] = val;
  }
  return out;
}

struct Segment {
  Vec2 a, b;
};

/// Marching-squares segments of the level set {u = level}.
inline std::vector<Segment> level_contour(const GridD& u, const MacroFrame& frame, double level = 0.0) {
  std::vector<Segment> segs;
  auto lerp = [&](Vec2 p, Vec2 q, double vp, double vq) {
    const double s = (level - vp) / (vq - vp);
    return p + (q - p) * s;
  };
  for (int r = 0; r + 1 < u.rows(); ++r)
    for (int c = 0; c + 1 < u.cols(); ++c) {
      const Vec2 p[4] = {frame.x(r * u.cols() + c), frame.x(r * u.cols() + c + 1), frame.x((r + 1) * u.cols() + c + 1),
                         frame.x((r + 1) * u.cols() + c)};
      const double v[4] = {u(r, c), u(r, c + 1), u(r + 1, c + 1), u(r + 1, c)};
      std::vector<Vec2> cuts;
      for (int e = 0; e < 4; ++e) {
        const int f = (e + 1) % 4;
        if ((v[e] < level) != (v[f] < level)) cuts.push_back(lerp(p[e], p[f], v[e], v[f]));
      }
      if (cuts.size() == 2) segs.push_back({cuts[0], cuts[1]});
      if (cuts.size() == 4) {
        segs.push_back({cuts[0], cuts[1]});
        segs.push_back({cuts[2], cuts[3]});
      }
    }
  return segs;
}

inline void write_contour_csv(const std::filesystem::path& path, const std::vector<Segment>& segs) {
  CsvWriter w(path);
  w.header({"x0", "y0", "x1", "y1"});
  for (const auto& s : segs) w.row(s.a.x, s.a.y, s.b.x, s.b.y);
}

}  // namespace fhl
