#pragma once

// Averaged metric by subadditive ray averaging: travel times along rays from
// an interior source, interpolated linearly across excursions out of U^delta,
// divided by t and extrapolated in 1/t.

#include <functional>
#include <optional>
#include <vector>

#include "fhl/common.hpp"
#include "fhl/csv.hpp"
#include "fhl/env_media.hpp"
#include "fhl/metric_solver.hpp"
#include "fhl/topology.hpp"

namespace fhl {

/// Position of parameter t on a ray relative to its gaps.
struct RayBracket {
  double t_lo = 0.0;  // last exit from U^delta at or before t
  double t_hi = 0.0;  // first re-entry at or after t
  double alpha = 0.0; // t = (1 - alpha) t_lo + alpha t_hi
  bool inside = true;
  bool truncated = false;  // no re-entry before the end of the traversal
};

inline RayBracket bracket_on_ray(const GapStatistics& gs, double t) {
  RayBracket b;
  b.t_lo = b.t_hi = t;
  if (t > gs.t_end) {
    b.truncated = true;
    b.inside = false;
    return b;
  }
  for (const auto& g : gs.gaps) {
    if (t > g.s && t < g.t) {
      b.inside = false;
      b.t_lo = g.s;
      b.t_hi = g.t;
      b.alpha = (t - g.s) / (g.t - g.s);
      b.truncated = gs.truncated && &g == &gs.gaps.back();
      return b;
    }
    if (g.s > t) break;
  }
  return b;
}

/// Linear interpolation across a gap: (1 - alpha) m(t_lo) + alpha m(t_hi).
inline double interpolate_gap(double m_lo, double m_hi, double alpha) { return (1.0 - alpha) * m_lo + alpha * m_hi; }

/// Bilinear value of a nodal field at point x, read from a grid square that
/// contains x and whose four corners are in `in` and finite. Returns NaN when
/// no such square exists.
inline double field_at_point(const GridD& m, const std::vector<char>& in, Vec2 x) {
  const double h = m.h();
  const double cx = x.x / h;
  const double ry = x.y / h;
  const double tol = 1e-9;
  const int c_lo = static_cast<int>(std::floor(cx - tol));
  const int c_hi = static_cast<int>(std::floor(cx + tol));
  const int r_lo = static_cast<int>(std::floor(ry - tol));
  const int r_hi = static_cast<int>(std::floor(ry + tol));
  const int cols = m.cols();
  for (int sr = r_lo; sr <= r_hi; ++sr)
    for (int sc = c_lo; sc <= c_hi; ++sc) {
      if (sr < 0 || sc < 0 || sr + 1 >= m.rows() || sc + 1 >= cols) continue;
      if (!square_inside(in, cols, sr, sc)) continue;
      const double v00 = m(sr, sc), v01 = m(sr, sc + 1), v10 = m(sr + 1, sc), v11 = m(sr + 1, sc + 1);
      if (!std::isfinite(v00) || !std::isfinite(v01) || !std::isfinite(v10) || !std::isfinite(v11)) continue;
      const double fx = std::clamp(cx - sc, 0.0, 1.0);
      const double fy = std::clamp(ry - sr, 0.0, 1.0);
      return (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
    }
  return std::numeric_limits<double>::quiet_NaN();
}

struct RayValue {
  double value = std::numeric_limits<double>::quiet_NaN();
  RayBracket bracket;
  bool usable() const { return !bracket.truncated && std::isfinite(value); }
};

/// Extended travel time at origin + t*direction: the raw field inside
/// U^delta, the linear gap interpolation outside it.
inline RayValue ray_travel_time(const TravelTimeField& field, const std::vector<char>& in, const GapStatistics& gs,
                                double t) {
  RayValue rv;
  rv.bracket = bracket_on_ray(gs, t);
  if (rv.bracket.truncated) return rv;
  auto at = [&](double s) { return field_at_point(field.values, in, gs.origin + gs.direction * s); };
  if (rv.bracket.inside) {
    rv.value = at(t);
  } else {
    rv.value = interpolate_gap(at(rv.bracket.t_lo), at(rv.bracket.t_hi), rv.bracket.alpha);
  }
  return rv;
}

/// First parameter at which the ray enters the closed delta-interior
/// (the shifted origin used when the origin itself lies outside).
inline std::optional<double> shifted_origin(const GapStatistics& gs) {
  if (gs.gaps.empty() || gs.gaps.front().s > 0.0) return 0.0;
  if (gs.truncated && gs.gaps.size() == 1) return std::nullopt;
  return gs.gaps.front().t;
}

/// Two-point extension m~(t y, s y): bilinear in the gap parameters of both
/// arguments. `m(a, b)` returns the metric between ray parameters a and b,
/// both inside the closed delta-interior.
inline double bilinear_ray_extension(const std::function<double(double, double)>& m, const GapStatistics& gs, double t,
                                     double s) {
  const auto bt = bracket_on_ray(gs, t);
  const auto bs = bracket_on_ray(gs, s);
  if (bt.truncated || bs.truncated) throw DomainError("ray parameter beyond the last re-entry");
  const double a = bt.alpha;
  const double b = bs.alpha;
  return (1 - a) * ((1 - b) * m(bt.t_lo, bs.t_lo) + b * m(bt.t_lo, bs.t_hi)) +
         a * ((1 - b) * m(bt.t_hi, bs.t_lo) + b * m(bt.t_hi, bs.t_hi));
}

struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double intercept_se = 0.0;
  std::size_t n = 0;
};

/// Least squares y = intercept + slope * x.
inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  f.n = x.size();
  if (x.size() != y.size() || x.size() < 2) throw InsufficientDataError("line fit needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, sx2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    sx2 += x[i] * x[i];
  }
  if (sxx <= 0.0) throw InsufficientDataError("line fit needs distinct abscissae");
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (x.size() > 2) {
    double ss = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      ss += r * r;
    }
    f.intercept_se = std::sqrt(ss / (n - 2.0) * sx2 / (n * sxx));
  }
  return f;
}

struct AveragingOptions {
  int directions = 64;
  std::vector<double> t_grid{8.0, 16.0, 32.0};
  double delta = 0.0;  // 0 selects 0.1 * max a over the ensemble
  double eta = 0.05;
  double mu = 1.0;
  int sign = 1;  // average the spanning component of this sign
  MetricMethod method = MetricMethod::fmm;
  MetricOptions metric;
  bool half_delta_diagnostic = true;
  int threads = 1;
};

struct AveragedMetric {
  std::vector<double> angles;
  std::vector<Vec2> directions;
  std::vector<double> mbar1;       // time per unit length at mu = 1
  std::vector<double> ci;          // ensemble standard error (or fit error for one sample)
  std::vector<double> mbar1_half;  // same at delta/2
  std::vector<double> ci_half;
  std::vector<std::size_t> used;   // samples contributing per direction
  double delta = 0.0;
  double eta = 0.0;
  double mu = 1.0;
  int sign = 1;
  std::size_t samples = 0;
  std::vector<std::size_t> excluded;  // ensemble indices without a usable component
  std::vector<double> t_grid;

  std::size_t size() const { return mbar1.size(); }
  /// Averaged metric at level mu for fan direction k.
  double mbar_mu(std::size_t k) const { return mu * mbar1[k]; }
};

namespace detail {

struct SampleEstimate {
  bool ok = false;
  std::vector<double> a;        // intercept per direction, NaN when unusable
  std::vector<double> a_se;
  std::vector<double> a_half;
  std::vector<double> a_half_se;
};

inline std::vector<double> ray_extrapolate(const TravelTimeField& field, const std::vector<char>& in,
                                           const EnvironmentSample& env, Vec2 origin, const std::vector<Vec2>& dirs,
                                           const std::vector<double>& t_grid, std::vector<double>* se) {
  std::vector<double> out(dirs.size(), std::numeric_limits<double>::quiet_NaN());
  if (se) se->assign(dirs.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    const auto gs = gaps_along_ray(in, env.rows(), env.cols(), env.cell_h, origin, dirs[k], kInf);
    std::vector<double> xs, ys;
    for (double t : t_grid) {
      const auto rv = ray_travel_time(field, in, gs, t);
      if (!rv.usable()) continue;
      xs.push_back(1.0 / t);
      ys.push_back(rv.value / t);
    }
    if (xs.size() < 3) continue;
    const auto fit = fit_line(xs, ys);
    out[k] = fit.intercept;
    if (se) (*se)[k] = fit.intercept_se;
  }
  return out;
}

inline SampleEstimate estimate_one(const EnvironmentSample& env, const AveragingOptions& opt, double delta,
                                   const std::vector<Vec2>& dirs) {
  SampleEstimate est;
  const auto lab = label_components(env);
  const int sid = spanning_component(lab, opt.sign);
  if (sid == 0) return est;
  if (!(delta < lab.info(sid).delta0)) return est;
  const Vec2 centre{0.5 * (env.cols() - 1) * env.cell_h, 0.5 * (env.rows() - 1) * env.cell_h};
  int z = 0;
  try {
    z = anchor_node(lab, env, sid, delta, centre);
  } catch (const StructuralError&) {
    return est;
  }
  const auto field = solve_metric(opt.method, env, lab, sid, z, opt.mu, opt.metric);
  const Vec2 origin = env.a_field.position(z);
  const auto in = interior_mask(lab, env, sid, delta);
  est.a = ray_extrapolate(field, in, env, origin, dirs, opt.t_grid, &est.a_se);
  if (opt.half_delta_diagnostic) {
    const auto in_half = interior_mask(lab, env, sid, 0.5 * delta);
    est.a_half = ray_extrapolate(field, in_half, env, origin, dirs, opt.t_grid, &est.a_half_se);
  }
  est.ok = true;
  return est;
}

inline void reduce(const std::vector<SampleEstimate>& per, std::size_t k, bool half, double& mean, double& ci,
                   std::size_t& used) {
  std::vector<double> vals;
  double single_se = 0.0;
  for (const auto& e : per) {
    if (!e.ok) continue;
    const double v = half ? e.a_half[k] : e.a[k];
    if (!std::isfinite(v)) continue;
    vals.push_back(v);
    single_se = half ? e.a_half_se[k] : e.a_se[k];
  }
  used = vals.size();
  if (vals.empty()) throw InsufficientDataError("fewer than 3 usable radii in every sample for some direction");
  const auto ms = mean_stderr(vals);
  mean = ms.mean;
  ci = vals.size() > 1 ? ms.stderr_ : single_se;
}

}  // namespace detail

/// Averaged metric over an ensemble produced on demand by `make(i)`.
inline AveragedMetric estimate_mbar(std::size_t count, const std::function<EnvironmentSample(std::size_t)>& make,
                                    AveragingOptions opt) {
  if (count == 0) throw InsufficientDataError("empty ensemble");
  if (opt.t_grid.size() < 3) throw InsufficientDataError("fewer than 3 radii in the t grid");
  if (!(opt.mu > 0.0)) throw ParameterError("mu must be positive");
  for (double t : opt.t_grid)
    if (!(t > 0.0)) throw ParameterError("radii must be positive");
  const auto angles = fan_angles(opt.directions);
  std::vector<Vec2> dirs;
  for (double a : angles) dirs.push_back(unit_from_angle(a));

  std::vector<detail::SampleEstimate> per(count);
  std::vector<double> max_a(count, 0.0);
  if (opt.delta <= 0.0) {
    // Default delta needs the ensemble maximum of a before any solve.
    parallel_for(count, opt.threads, [&](std::size_t i) { max_a[i] = make(i).max_abs_a(); });
    opt.delta = 0.1 * *std::max_element(max_a.begin(), max_a.end());
  }
  parallel_for(count, opt.threads, [&](std::size_t i) { per[i] = detail::estimate_one(make(i), opt, opt.delta, dirs); });

  AveragedMetric out;
  out.angles = angles;
  out.directions = dirs;
  out.delta = opt.delta;
  out.eta = opt.eta;
  out.mu = opt.mu;
  out.sign = opt.sign;
  out.t_grid = opt.t_grid;
  for (std::size_t i = 0; i < count; ++i) {
    if (per[i].ok)
      ++out.samples;
    else
      out.excluded.push_back(i);
  }
  if (out.samples == 0) throw InsufficientDataError("no sample has a usable spanning component");
  const std::size_t D = dirs.size();
  out.mbar1.resize(D);
  out.ci.resize(D);
  out.used.resize(D);
  for (std::size_t k = 0; k < D; ++k) {
    double m = 0, c = 0;
    detail::reduce(per, k, false, m, c, out.used[k]);
    out.mbar1[k] = m / opt.mu;
    out.ci[k] = c / opt.mu;
  }
  if (opt.half_delta_diagnostic) {
    out.mbar1_half.resize(D);
    out.ci_half.resize(D);
    for (std::size_t k = 0; k < D; ++k) {
      double m = 0, c = 0;
      std::size_t u = 0;
      detail::reduce(per, k, true, m, c, u);
      out.mbar1_half[k] = m / opt.mu;
      out.ci_half[k] = c / opt.mu;
    }
  }
  return out;
}

inline AveragedMetric estimate_mbar(const std::vector<EnvironmentSample>& ensemble, const AveragingOptions& opt) {
  return estimate_mbar(ensemble.size(), [&](std::size_t i) { return ensemble[i]; }, opt);
}

struct BoundaryLiminfReport {
  double liminf_est = kInf;  // min of m(x)/t over near-boundary nodes along the ray
  double mbar_est = 0.0;
  double defect = 0.0;       // max(0, mbar_est - liminf_est) - tolerance
  std::size_t nodes = 0;     // near-boundary nodes examined
};

/// Liminf of m/t up to the boundary along one ray: nodes of the component
/// with |a| <= delta met by the supercover beyond t_min.
inline BoundaryLiminfReport boundary_liminf_check(const TravelTimeField& field, const ComponentLabeling& lab,
                                                  const EnvironmentSample& env, Vec2 direction, double delta,
                                                  double mbar_est, double t_min, double tolerance,
                                                  double t_max = kInf) {
  if (spanning_component(lab, field.sign) == 0) throw StructuralError("no spanning component: statistic undefined");
  BoundaryLiminfReport rep;
  rep.mbar_est = mbar_est;
  const Vec2 origin = env.a_field.position(field.source);
  const auto hits = ray_squares(env.rows(), env.cols(), env.cell_h, origin, direction, t_max);
  const int cols = env.cols();
  std::vector<char> seen(env.a_field.size(), 0);
  for (const auto& hit : hits) {
    const int base = hit.sr * cols + hit.sc;
    for (int idx : {base, base + 1, base + cols, base + cols + 1}) {
      if (seen[static_cast<std::size_t>(idx)]) continue;
      seen[static_cast<std::size_t>(idx)] = 1;
      if (lab.label_at(idx) != field.component_id || !field.reachable(idx)) continue;
      if (std::abs(env.a_field[static_cast<std::size_t>(idx)]) > delta) continue;
      const double t = dot(env.a_field.position(idx) - origin, direction);
      if (t < t_min) continue;
      ++rep.nodes;
      rep.liminf_est = std::min(rep.liminf_est, field.at(idx) / (t * field.mu));
    }
  }
  if (rep.nodes == 0) {
    rep.defect = 0.0;
    return rep;
  }
  rep.defect = std::max(0.0, mbar_est - rep.liminf_est) - tolerance;
  return rep;
}

struct AveragedChecks {
  double delta_stability = -kInf;  // max |m(d) - m(d/2)| - 2 (ci + ci_half)
  double convexity = -kInf;        // max midpoint defect minus 2 ci
  double lipschitz = -kInf;        // max adjacent difference minus bound and 2 ci
  double lower_bound = kInf;       // min mbar1 - 2 (speed cap)
};

/// Property checks on the averaged profile; each entry is <= 0 when the
/// property holds within the statistical allowance.
inline AveragedChecks check_averaged_metric(const AveragedMetric& avg) {
  AveragedChecks c;
  const std::size_t D = avg.size();
  for (std::size_t k = 0; k < D; ++k) {
    c.lower_bound = std::min(c.lower_bound, avg.mbar1[k] - 1.0 / kSpeedCap);
    if (!avg.mbar1_half.empty())
      c.delta_stability = std::max(c.delta_stability, std::abs(avg.mbar1[k] - avg.mbar1_half[k]) -
                                                          2.0 * (avg.ci[k] + avg.ci_half[k]));
    const std::size_t k1 = (k + 1) % D;
    const double step = norm(avg.directions[k] - avg.directions[k1]);
    c.lipschitz = std::max(c.lipschitz, std::abs(avg.mbar1[k] - avg.mbar1[k1]) - (1.0 / avg.delta + avg.eta) * step -
                                            2.0 * std::max(avg.ci[k], avg.ci[k1]));
    for (std::size_t j = 1; 4 * j < D; ++j) {
      const std::size_t mid = (k + j) % D;
      const std::size_t far = (k + 2 * j) % D;
      const double shrink = dot(avg.directions[k] + avg.directions[far], avg.directions[mid]) * 0.5;
      const double lhs = shrink * avg.mbar1[mid];
      const double rhs = 0.5 * (avg.mbar1[k] + avg.mbar1[far]);
      const double allowance = 2.0 * std::max({avg.ci[k], avg.ci[mid], avg.ci[far]});
      c.convexity = std::max(c.convexity, lhs - rhs - allowance);
    }
  }
  return c;
}

inline void write_averaged_csv(const std::filesystem::path& path, const AveragedMetric& avg) {
  CsvWriter w(path);
  w.header({"angle", "mbar1", "ci", "delta", "mbar1_half_delta", "ci_half_delta", "samples"});
  for (std::size_t k = 0; k < avg.size(); ++k)
    w.row(avg.angles[k], avg.mbar1[k], avg.ci[k], avg.delta, avg.mbar1_half.empty() ? kInf : avg.mbar1_half[k],
          avg.ci_half.empty() ? kInf : avg.ci_half[k], avg.used[k]);
}

}  // namespace fhl
