#pragma once

// End-to-end homogenization experiments: local-uniform errors on component
// interiors, weak pairings against a fixed Gaussian bank, the discounted
// stationary problem, and the config-driven pipeline tying them together.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fhl/common.hpp"
#include "fhl/config.hpp"
#include "fhl/csv.hpp"
#include "fhl/effective_h.hpp"
#include "fhl/env_media.hpp"
#include "fhl/ergodic_averaging.hpp"
#include "fhl/hj_evolution.hpp"
#include "fhl/topology.hpp"

namespace fhl {

struct StageError : Error {
  std::string stage;
  StageError(std::string s, const std::string& what) : Error(s + ": " + what), stage(std::move(s)) {}
};

// ---------------------------------------------------------------------------
// Test-function bank

inline constexpr int kTestBankVersion = 1;

/// Normalized Gaussian bump (unit mass on the plane).
struct TestFunction {
  Vec2 centre;
  double width = 0.1;
  double operator()(Vec2 x) const {
    const Vec2 d = x - centre;
    return std::exp(-dot(d, d) / (2.0 * width * width)) / (2.0 * kPi * width * width);
  }
};

/// Version 1: three centres times two widths.
inline std::vector<TestFunction> test_function_bank() {
  const Vec2 centres[3] = {{0.0, 0.0}, {0.25, 0.1}, {-0.2, -0.2}};
  const double widths[2] = {0.08, 0.16};
  std::vector<TestFunction> bank;
  for (double w : widths)
    for (const auto& c : centres) bank.push_back({c, w});
  return bank;
}

// ---------------------------------------------------------------------------
// Shared plumbing

struct LabOptions {
  double R = 0.5;  // macro ball B_R centred at the origin
  double T = 0.5;
  int time_samples = 10;
  double delta = 0.0;  // 0 picks 0.1 max|a|
  double margin = 0.1;
  double cfl = kMaxCfl;
  Boundary boundary = Boundary::extrapolate;
  double liminf_tolerance = 0.05;
  int threads = 1;
};

/// Macro half-width of the computational window: B_R plus the distance
/// information can travel by time T, plus a margin.
inline double window_half_width(const LabOptions& o) { return o.R + kSpeedCap * o.T + o.margin; }

struct Window {
  int r0 = 0;
  int c0 = 0;
  int size = 0;
};

/// Square window of the sample centred at its middle node, wide enough for
/// the macro half-width at scale eps.
inline Window centred_window(const EnvironmentSample& env, double half_macro, double eps) {
  const int half = static_cast<int>(std::ceil(half_macro / (eps * env.cell_h) - 1e-9));
  const int rc = env.rows() / 2;
  const int cc = env.cols() / 2;
  if (rc - half < 0 || cc - half < 0 || rc + half >= env.rows() || cc + half >= env.cols())
    throw ParameterError("sample too small for epsilon " + format_double(eps));
  return {rc - half, cc - half, 2 * half + 1};
}

/// Box side (unit cubes, even, a multiple of `unit`) that fits every window.
inline int required_box_cubes(double half_macro, double eps_min, double cell_h, double unit = 1.0) {
  const double half_nodes = std::ceil(half_macro / (eps_min * cell_h) - 1e-9);
  const double side = (2.0 * half_nodes + 2.0) * cell_h;
  const double block = 2.0 * unit;
  return static_cast<int>(std::ceil(side / block - 1e-9) * block);
}

inline void check_epsilons(const std::vector<double>& eps) {
  if (eps.empty()) throw ParameterError("no epsilons given");
  for (std::size_t k = 0; k < eps.size(); ++k) {
    if (!(eps[k] > 0.0 && eps[k] <= 1.0)) throw ParameterError("epsilon must lie in (0, 1]");
    if (k > 0 && !(eps[k] < eps[k - 1])) throw ParameterError("epsilons must be strictly decreasing");
  }
}

inline bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t k = 1; k < v.size(); ++k)
    if (!(v[k] < v[k - 1])) return false;
  return true;
}

/// Effective Hamiltonians of the spanning components; bounded ones are zero.
struct ComponentHamiltonians {
  std::optional<EffectiveHamiltonian> positive;
  std::optional<EffectiveHamiltonian> negative;

  const EffectiveHamiltonian* spanning(int sign) const {
    const auto& h = sign > 0 ? positive : negative;
    return h ? &*h : nullptr;
  }
};

// Per-node homogenized values for one frame and time, by component class.
class HomogenizedCache {
 public:
  HomogenizedCache(const ComponentHamiltonians& hs, const InitialData& u0, const MacroFrame& f, double t)
      : hs_(hs), u0_(u0), frame_(f), t_(t) {}

  // 0: bounded or a = 0, 1: positive spanning, 2: negative spanning.
  const GridD& values(int cls) {
    auto& slot = cache_[cls];
    if (!slot) {
      const EffectiveHamiltonian* h = cls == 1 ? hs_.spanning(1) : cls == 2 ? hs_.spanning(-1) : nullptr;
      if (cls != 0 && !h) throw StructuralError("spanning component without an effective Hamiltonian");
      slot = h ? solve_effective_hopflax(*h, u0_, frame_, t_).values : sample_initial(u0_, frame_);
    }
    return *slot;
  }

 private:
  const ComponentHamiltonians& hs_;
  const InitialData& u0_;
  MacroFrame frame_;
  double t_;
  std::optional<GridD> cache_[3];
};

inline int component_class(const ComponentLabeling& lab, int id) {
  if (id == 0) return 0;
  const auto& c = lab.info(id);
  if (!c.spanning()) return 0;
  return c.sign > 0 ? 1 : 2;
}

// ---------------------------------------------------------------------------
// Local-uniform convergence

struct ComponentError {
  int component_id = 0;
  int sign = 0;
  bool spanning = false;
  std::size_t nodes = 0;      // nodes of U^delta inside B_R
  double sup_error = 0.0;     // sup over U^delta cap B_R and time samples
  double liminf_stat = kInf;  // inf over U cap B_R of (u_eps - ubar), positive spanning only
};

struct LocalUniformRow {
  double epsilon = 0.0;
  double sup_error = 0.0;  // max over components
  double liminf_stat = kInf;
  bool liminf_ok = true;
  std::vector<ComponentError> components;
  std::vector<std::string> warnings;
};

/// Evolves u0 at every eps on windows of `env` centred at its middle node and
/// compares with the per-component homogenized solutions.
inline std::vector<LocalUniformRow> local_uniform_test(const EnvironmentSample& env, const ComponentLabeling& lab,
                                                       const ComponentHamiltonians& hs, const InitialData& u0,
                                                       const std::vector<double>& epsilons, const LabOptions& opt) {
  check_epsilons(epsilons);
  const double delta = opt.delta > 0.0 ? opt.delta : 0.1 * env.max_abs_a();
  std::vector<LocalUniformRow> rows;
  for (double eps : epsilons) {
    const auto win = centred_window(env, window_half_width(opt), eps);
    const auto sub = crop_sample(env, win.r0, win.c0, win.size, win.size);
    EvolutionConfig cfg;
    cfg.T = opt.T;
    cfg.snapshots = opt.time_samples;
    cfg.cfl = opt.cfl;
    cfg.boundary = opt.boundary;
    const auto tr = solve_oscillatory(sub, u0, eps, cfg);
    LocalUniformRow row;
    row.epsilon = eps;
    row.warnings = tr.warnings;
    std::map<int, ComponentError> per;
    for (const auto& snap : tr.snapshots) {
      HomogenizedCache cache(hs, u0, snap.frame, snap.t);
      for (int r = 0; r < win.size; ++r)
        for (int c = 0; c < win.size; ++c) {
          const int local = r * win.size + c;
          if (norm(snap.frame.x(local)) > opt.R) continue;
          const int big = (r + win.r0) * env.cols() + (c + win.c0);
          const int id = lab.label_at(big);
          if (id == 0) continue;
          const int cls = component_class(lab, id);
          const double diff = snap.values[static_cast<std::size_t>(local)] - cache.values(cls)[static_cast<std::size_t>(local)];
          auto& ce = per[id];
          if (ce.component_id == 0) {
            const auto& info = lab.info(id);
            ce.component_id = id;
            ce.sign = info.sign;
            ce.spanning = info.spanning();
          }
          if (cls == 1) ce.liminf_stat = std::min(ce.liminf_stat, diff);
          if (std::abs(env.a_field[static_cast<std::size_t>(big)]) <= delta) continue;
          if (snap.t == 0.0) ++ce.nodes;
          ce.sup_error = std::max(ce.sup_error, std::abs(diff));
        }
    }
    for (auto& [id, ce] : per) {
      row.sup_error = std::max(row.sup_error, ce.sup_error);
      if (ce.spanning && ce.sign > 0) row.liminf_stat = std::min(row.liminf_stat, ce.liminf_stat);
      row.components.push_back(ce);
    }
    row.liminf_ok = !(row.liminf_stat < -opt.liminf_tolerance);
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Weak-* convergence

/// Ensemble volume fractions by class: zero set, bounded components (all
/// homogenize to u0), and the spanning component of each sign.
struct ThetaSummary {
  double zero = 0.0;
  double bounded = 0.0;
  double positive = 0.0;
  double negative = 0.0;
  double dropped = 0.0;  // spanning mass below the floor, folded into u0
  double sum() const { return zero + bounded + positive + negative; }
};

inline ThetaSummary theta_of(const ComponentLabeling& lab, double floor = 1e-3) {
  const auto vf = estimate_theta(lab);
  ThetaSummary t;
  t.zero = vf.theta0;
  for (std::size_t k = 0; k < vf.theta.size(); ++k) {
    const auto& c = lab.components[k];
    if (c.spanning() && vf.theta[k] >= floor)
      (c.sign > 0 ? t.positive : t.negative) += vf.theta[k];
    else
      t.bounded += vf.theta[k];
    if (c.spanning() && vf.theta[k] < floor) t.dropped += vf.theta[k];
  }
  return t;
}

struct WeakRow {
  double epsilon = 0.0;
  std::vector<double> mean_abs;  // per test function: mean over seeds of |pairing|
  std::vector<double> mean;      // signed mean
  std::vector<double> stderr_;   // standard error of |pairing|
  double max_abs = 0.0;          // max over the bank of mean_abs
  std::vector<std::vector<double>> per_seed;
};

struct WeakResult {
  std::vector<WeakRow> rows;
  ThetaSummary theta;
  std::vector<TestFunction> bank;
  std::vector<bool> decreasing;  // per test function
  bool all_decreasing = false;
  bool max_decreasing = false;  // bank maximum, a weak distance
  std::vector<std::string> warnings;
};

/// Space-time pairing of (u_eps - ubar) with phi over B_R x (0, T), trapezoid
/// rule in time.
inline double pairing(const Trajectory& tr, const std::vector<GridD>& ubar, const TestFunction& phi, double R) {
  const std::size_t n = tr.snapshots.size();
  if (n < 2) throw ParameterError("pairing needs at least two time samples");
  const double dt = tr.snapshots.back().t / static_cast<double>(n - 1);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto& s = tr.snapshots[j];
    double I = 0.0;
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      const Vec2 x = s.frame.x(static_cast<int>(i));
      if (norm(x) > R) continue;
      I += (s.values[i] - ubar[j][i]) * phi(x);
    }
    const double w = (j == 0 || j + 1 == n) ? 0.5 : 1.0;
    total += w * dt * I * s.frame.hx * s.frame.hx;
  }
  return total;
}

/// Pairings of u_eps - (theta0 u0 + sum theta_i ubar_i) for every sample of
/// the ensemble; thetas come from the ensemble mean.
inline WeakResult weak_star_test(const std::vector<EnvironmentSample>& ensemble, const ThetaSummary& theta,
                                 const ComponentHamiltonians& hs, const InitialData& u0,
                                 const std::vector<double>& epsilons, const std::vector<TestFunction>& bank,
                                 const LabOptions& opt) {
  check_epsilons(epsilons);
  if (ensemble.empty()) throw InsufficientDataError("empty ensemble");
  if (std::abs(theta.sum() - 1.0) > 1e-9) throw NumericalError("volume fractions do not sum to one");
  if ((theta.positive > 0.0 && !hs.positive) || (theta.negative > 0.0 && !hs.negative))
    throw StructuralError("spanning class without an effective Hamiltonian");
  WeakResult res;
  res.theta = theta;
  res.bank = bank;
  if (theta.dropped > 0.05) res.warnings.push_back("components below the theta floor hold more than 5% of the volume");
  const std::size_t S = ensemble.size();
  const std::size_t F = bank.size();
  for (double eps : epsilons) {
    WeakRow row;
    row.epsilon = eps;
    row.per_seed.assign(S, std::vector<double>(F, 0.0));
    std::vector<std::vector<std::string>> warn(S);
    parallel_for(S, opt.threads, [&](std::size_t s) {
      const auto& env = ensemble[s];
      const auto win = centred_window(env, window_half_width(opt), eps);
      const auto sub = crop_sample(env, win.r0, win.c0, win.size, win.size);
      EvolutionConfig cfg;
      cfg.T = opt.T;
      cfg.snapshots = opt.time_samples;
      cfg.cfl = opt.cfl;
      cfg.boundary = opt.boundary;
      const auto tr = solve_oscillatory(sub, u0, eps, cfg);
      warn[s] = tr.warnings;
      std::vector<GridD> ubar;
      for (const auto& snap : tr.snapshots) {
        GridD blend = sample_initial(u0, snap.frame);
        const double w0 = theta.zero + theta.bounded;
        for (auto& v : blend.storage()) v *= w0;
        for (int sign : {1, -1}) {
          const double th = sign > 0 ? theta.positive : theta.negative;
          if (th == 0.0) continue;
          const auto part = solve_effective_hopflax(*hs.spanning(sign), u0, snap.frame, snap.t).values;
          for (std::size_t i = 0; i < blend.size(); ++i) blend[i] += th * part[i];
        }
        ubar.push_back(std::move(blend));
      }
      for (std::size_t f = 0; f < F; ++f) row.per_seed[s][f] = pairing(tr, ubar, bank[f], opt.R);
    });
    for (const auto& w : warn)
      for (const auto& msg : w)
        if (std::find(res.warnings.begin(), res.warnings.end(), msg) == res.warnings.end()) res.warnings.push_back(msg);
    for (std::size_t f = 0; f < F; ++f) {
      std::vector<double> absv, sv;
      for (std::size_t s = 0; s < S; ++s) {
        absv.push_back(std::abs(row.per_seed[s][f]));
        sv.push_back(row.per_seed[s][f]);
      }
      const auto ms = mean_stderr(absv);
      row.mean_abs.push_back(ms.mean);
      row.stderr_.push_back(ms.stderr_);
      row.mean.push_back(mean_stderr(sv).mean);
      row.max_abs = std::max(row.max_abs, ms.mean);
    }
    res.rows.push_back(std::move(row));
  }
  res.all_decreasing = true;
  for (std::size_t f = 0; f < F; ++f) {
    std::vector<double> seq;
    for (const auto& r : res.rows) seq.push_back(r.mean_abs[f]);
    res.decreasing.push_back(strictly_decreasing(seq));
    res.all_decreasing = res.all_decreasing && res.decreasing.back();
  }
  std::vector<double> maxima;
  for (const auto& r : res.rows) maxima.push_back(r.max_abs);
  res.max_decreasing = strictly_decreasing(maxima);
  return res;
}

// ---------------------------------------------------------------------------
// Stationary problem

struct StationaryRow {
  double epsilon = 0.0;
  Vec2 p;
  double hbar = 0.0;
  std::size_t nodes = 0;
  double sup_error = 0.0;   // sup over U^delta cap B_R of |w + H(p)|
  double mean_error = 0.0;
  double sup_norm = 0.0;    // max |w| over the whole box
  double bound = 0.0;       // max|a| |p|
  bool bound_ok = false;
  std::size_t iterations = 0;
};

/// Solves the discounted problem on the whole (periodic) sample for each p
/// and eps, measuring the distance to -H(p) on the spanning interior.
inline std::vector<StationaryRow> stationary_test(const EnvironmentSample& env, const ComponentLabeling& lab,
                                                  const EffectiveHamiltonian& h, const std::vector<Vec2>& ps,
                                                  const std::vector<double>& epsilons, double R, double delta,
                                                  const StationaryOptions& sopt = {}) {
  check_epsilons(epsilons);
  const int sign = h.sign == HamiltonianSign::negative ? -1 : 1;
  const int sid = spanning_component(lab, sign);
  if (sid == 0) throw StructuralError("no spanning component of the requested sign");
  if (delta <= 0.0) delta = 0.1 * env.max_abs_a();
  EvolutionConfig cfg;
  cfg.boundary = env.periodic ? Boundary::periodic : Boundary::extrapolate;
  std::vector<StationaryRow> rows;
  for (const Vec2 p : ps) {
    for (double eps : epsilons) {
      const auto frame = frame_for(env, eps);
      if (-frame.origin.x < R || -frame.origin.y < R) throw ParameterError("sample too small for B_R at this epsilon");
      const auto res = solve_stationary(env, p, eps, cfg, sopt);
      StationaryRow row;
      row.epsilon = eps;
      row.p = p;
      row.hbar = h(p);
      row.iterations = res.iterations;
      row.bound = env.max_abs_a() * norm(p);
      double sum = 0.0;
      for (std::size_t i = 0; i < res.w.values.size(); ++i) {
        const double w = res.w.values[i];
        row.sup_norm = std::max(row.sup_norm, std::abs(w));
        if (lab.label_at(static_cast<int>(i)) != sid || std::abs(env.a_field[i]) <= delta) continue;
        if (norm(frame.x(static_cast<int>(i))) > R) continue;
        const double e = std::abs(w + row.hbar);
        row.sup_error = std::max(row.sup_error, e);
        sum += e;
        ++row.nodes;
      }
      row.mean_error = row.nodes ? sum / static_cast<double>(row.nodes) : 0.0;
      row.bound_ok = row.sup_norm <= row.bound;
      rows.push_back(row);
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Pipeline

struct MediumSpec {
  MediumKind kind = MediumKind::site_percolation;
  double p = 0.7;
  double radius = 0.3;
  double radius_max = 0.0;
  double intensity = 0.5;
  double period = 1.0;
  double cell_h = 0.125;
};

inline MediumKind parse_medium_kind(const std::string& s) {
  if (s == "site_percolation" || s == "percolation") return MediumKind::site_percolation;
  if (s == "poisson_cloud") return MediumKind::poisson_cloud;
  if (s == "checkerboard") return MediumKind::checkerboard;
  if (s == "isolated_obstacles" || s == "obstacles") return MediumKind::isolated_obstacles;
  throw ConfigurationError("unknown medium type: " + s);
}

/// Sample of side `box` unit cubes.
inline EnvironmentSample generate_medium(const MediumSpec& m, int box, std::uint64_t seed) {
  const int n = static_cast<int>(std::lround(box / m.cell_h));
  switch (m.kind) {
    case MediumKind::site_percolation: return gen_site_percolation(m.p, n, m.cell_h, seed);
    case MediumKind::checkerboard: return gen_checkerboard(m.period, n, m.cell_h);
    case MediumKind::isolated_obstacles: return gen_isolated_obstacles(m.p, m.radius, n, m.cell_h, seed);
    case MediumKind::poisson_cloud: return gen_poisson_cloud(m.intensity, m.radius, box, m.cell_h, seed, m.radius_max);
    case MediumKind::custom: break;
  }
  throw ConfigurationError("medium type cannot be generated");
}

inline const ConfigSchema& experiment_schema() {
  static const ConfigSchema schema{
      {"experiment", {"name", "seeds", "seed", "threads", "tests", "write_snapshots"}},
      {"medium", {"type", "p", "radius", "radius_max", "intensity", "period", "cell_h"}},
      {"averaging", {"samples", "seed", "box", "cell_h", "directions", "t_grid", "delta", "eta", "method"}},
      {"evolution", {"epsilons", "T", "R", "snapshots", "cfl", "initial", "bump_width", "boundary", "delta", "margin",
                     "liminf_tolerance", "theta_floor"}},
      {"stationary", {"p", "box", "seed", "epsilons", "R", "delta", "tolerance"}},
  };
  return schema;
}

struct ExperimentSpec {
  std::string name = "experiment";
  std::size_t seeds = 1;
  std::uint64_t seed = 1;
  int threads = 1;
  bool local_uniform = true;
  bool weak = true;
  bool stationary = false;
  bool write_snapshots = false;
  MediumSpec medium;
  std::size_t avg_samples = 20;
  std::uint64_t avg_seed = 1000;
  int avg_box = 136;
  double avg_cell_h = 0.0;  // 0: same as the medium
  AveragingOptions averaging;
  std::vector<double> epsilons{0.25, 0.125, 0.0625};
  LabOptions lab;
  InitialData u0 = InitialData::cone();
  double theta_floor = 1e-3;
  std::vector<Vec2> stat_p{{1.0, 0.0}, {0.0, 1.0}, {std::sqrt(0.5), std::sqrt(0.5)}};
  int stat_box = 32;
  std::uint64_t stat_seed = 999;
  std::vector<double> stat_epsilons{0.25, 0.125, 0.0625};
  double stat_R = 0.5;
  double stat_delta = 0.0;
  StationaryOptions stat_opt;
};

inline ExperimentSpec experiment_from_config(const Config& c) {
  ExperimentSpec e;
  e.name = c.get("experiment", "name", e.name);
  e.seeds = static_cast<std::size_t>(c.get_int("experiment", "seeds", static_cast<long>(e.seeds)));
  e.seed = static_cast<std::uint64_t>(c.get_int("experiment", "seed", static_cast<long>(e.seed)));
  e.threads = static_cast<int>(c.get_int("experiment", "threads", e.threads));
  e.write_snapshots = c.get_bool("experiment", "write_snapshots", false);
  if (c.has("experiment", "tests")) {
    const auto t = "," + c.require("experiment", "tests") + ",";
    auto has = [&](const std::string& k) { return t.find(k) != std::string::npos; };
    e.local_uniform = has("local_uniform");
    e.weak = has("weak");
    e.stationary = has("stationary");
    if (!e.local_uniform && !e.weak && !e.stationary) throw ConfigurationError("experiment.tests names no known test");
  }
  auto& m = e.medium;
  m.kind = parse_medium_kind(c.get("medium", "type", "site_percolation"));
  m.p = c.get_double("medium", "p", m.p);
  m.radius = c.get_double("medium", "radius", m.radius);
  m.radius_max = c.get_double("medium", "radius_max", m.radius_max);
  m.intensity = c.get_double("medium", "intensity", m.intensity);
  m.period = c.get_double("medium", "period", m.period);
  m.cell_h = c.get_double("medium", "cell_h", m.cell_h);
  e.avg_samples = static_cast<std::size_t>(c.get_int("averaging", "samples", static_cast<long>(e.avg_samples)));
  e.avg_seed = static_cast<std::uint64_t>(c.get_int("averaging", "seed", static_cast<long>(e.avg_seed)));
  e.avg_box = static_cast<int>(c.get_int("averaging", "box", e.avg_box));
  e.avg_cell_h = c.get_double("averaging", "cell_h", 0.0);
  e.averaging.directions = static_cast<int>(c.get_int("averaging", "directions", e.averaging.directions));
  e.averaging.t_grid = c.get_list("averaging", "t_grid", {16.0, 32.0, 64.0});
  e.averaging.delta = c.get_double("averaging", "delta", 0.0);
  e.averaging.eta = c.get_double("averaging", "eta", e.averaging.eta);
  e.averaging.method = parse_metric_method(c.get("averaging", "method", "fmm"));
  e.epsilons = c.get_list("evolution", "epsilons", e.epsilons);
  e.lab.T = c.get_double("evolution", "T", e.lab.T);
  e.lab.R = c.get_double("evolution", "R", e.lab.R);
  e.lab.time_samples = static_cast<int>(c.get_int("evolution", "snapshots", e.lab.time_samples));
  e.lab.cfl = c.get_double("evolution", "cfl", e.lab.cfl);
  e.lab.boundary = parse_boundary(c.get("evolution", "boundary", "extrapolate"));
  e.lab.delta = c.get_double("evolution", "delta", 0.0);
  e.lab.margin = c.get_double("evolution", "margin", e.lab.margin);
  e.lab.liminf_tolerance = c.get_double("evolution", "liminf_tolerance", e.lab.liminf_tolerance);
  e.theta_floor = c.get_double("evolution", "theta_floor", e.theta_floor);
  const auto init = c.get("evolution", "initial", "cone");
  if (init == "cone")
    e.u0 = InitialData::cone();
  else if (init == "bump")
    e.u0 = InitialData::bump({}, c.get_double("evolution", "bump_width", 0.5));
  else
    throw ConfigurationError("evolution.initial must be cone or bump");
  e.stat_p = c.get_vectors("stationary", "p", e.stat_p);
  e.stat_box = static_cast<int>(c.get_int("stationary", "box", e.stat_box));
  e.stat_seed = static_cast<std::uint64_t>(c.get_int("stationary", "seed", static_cast<long>(e.stat_seed)));
  e.stat_epsilons = c.get_list("stationary", "epsilons", e.stat_epsilons);
  e.stat_R = c.get_double("stationary", "R", e.stat_R);
  e.stat_delta = c.get_double("stationary", "delta", 0.0);
  e.stat_opt.tolerance = c.get_double("stationary", "tolerance", e.stat_opt.tolerance);
  if (e.seeds == 0) throw ConfigurationError("experiment.seeds must be positive");
  if (e.threads < 1) throw ConfigurationError("experiment.threads must be positive");
  e.averaging.threads = e.threads;
  e.lab.threads = e.threads;
  return e;
}

struct ConvergenceReport {
  std::string name;
  std::vector<double> epsilons;
  ThetaSummary theta;
  ComponentHamiltonians hamiltonians;
  std::vector<std::size_t> excluded_seeds;  // averaging samples without a usable spanning component
  // Local-uniform errors per epsilon, mean and max over seeds.
  std::vector<double> local_mean;
  std::vector<double> local_max;
  std::vector<double> local_liminf;
  bool local_decreasing = false;
  bool liminf_ok = true;
  std::optional<WeakResult> weak;
  std::vector<StationaryRow> stationary;
  bool stationary_decreasing = false;
  bool stationary_bound_ok = false;
  std::vector<std::string> warnings;
  double seconds = 0.0;
};

namespace detail {

template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

inline void add_warnings(std::vector<std::string>& into, const std::vector<std::string>& from) {
  for (const auto& w : from)
    if (std::find(into.begin(), into.end(), w) == into.end()) into.push_back(w);
}

}  // namespace detail

/// generate -> label -> metric/average -> effective H -> evolve -> compare,
/// writing CSV artifacts into `out` as each stage completes.
inline ConvergenceReport run_experiment(const ExperimentSpec& spec, const std::filesystem::path& out) {
  const auto start = std::chrono::steady_clock::now();
  std::filesystem::create_directories(out);
  ConvergenceReport rep;
  rep.name = spec.name;
  rep.epsilons = spec.epsilons;
  const bool evolve = spec.local_uniform || spec.weak;

  // generate + label the evolution ensemble
  std::vector<EnvironmentSample> ensemble;
  std::vector<ComponentLabeling> labels;
  if (evolve) {
    detail::stage("generate", [&] {
      check_epsilons(spec.epsilons);
      const double unit = spec.medium.kind == MediumKind::checkerboard ? spec.medium.period : 1.0;
      const int box = required_box_cubes(window_half_width(spec.lab), spec.epsilons.back(), spec.medium.cell_h, unit);
      ensemble.resize(spec.seeds);
      parallel_for(spec.seeds, spec.threads,
                   [&](std::size_t i) { ensemble[i] = generate_medium(spec.medium, box, spec.seed + i); });
      write_metadata_csv(out / "medium.csv", ensemble.front());
    });
    detail::stage("label", [&] {
      labels.resize(spec.seeds);
      parallel_for(spec.seeds, spec.threads, [&](std::size_t i) { labels[i] = label_components(ensemble[i]); });
      write_component_table(out / "components_seed0.csv", labels.front());
      CsvWriter w(out / "theta.csv");
      w.header({"seed", "theta_zero", "theta_bounded", "theta_positive", "theta_negative", "dropped", "components"});
      for (std::size_t i = 0; i < spec.seeds; ++i) {
        const auto t = theta_of(labels[i], spec.theta_floor);
        w.row(spec.seed + i, t.zero, t.bounded, t.positive, t.negative, t.dropped, labels[i].count());
        rep.theta.zero += t.zero / static_cast<double>(spec.seeds);
        rep.theta.bounded += t.bounded / static_cast<double>(spec.seeds);
        rep.theta.positive += t.positive / static_cast<double>(spec.seeds);
        rep.theta.negative += t.negative / static_cast<double>(spec.seeds);
        rep.theta.dropped += t.dropped / static_cast<double>(spec.seeds);
      }
      if (std::abs(rep.theta.sum() - 1.0) > 1e-9) throw NumericalError("volume fractions do not sum to one");
    });
  }

  // averaged metric and effective Hamiltonian per spanning sign
  bool need_pos = spec.stationary;
  bool need_neg = false;
  for (const auto& lab : labels) {
    need_pos = need_pos || spanning_component(lab, 1) != 0;
    need_neg = need_neg || spanning_component(lab, -1) != 0;
  }
  for (int sign : {1, -1}) {
    if (!(sign > 0 ? need_pos : need_neg)) continue;
    const std::string tag = sign > 0 ? "positive" : "negative";
    detail::stage("average", [&] {
      auto opt = spec.averaging;
      opt.sign = sign;
      auto medium = spec.medium;
      if (spec.avg_cell_h > 0.0) medium.cell_h = spec.avg_cell_h;
      const auto make = [&](std::size_t i) { return generate_medium(medium, spec.avg_box, spec.avg_seed + i); };
      AveragedMetric avg;
      try {
        avg = estimate_mbar(spec.avg_samples, make, opt);
      } catch (const InsufficientDataError& e) {
        rep.warnings.push_back("averaging (" + tag + "): " + e.what());
        return;
      }
      for (auto i : avg.excluded) rep.excluded_seeds.push_back(spec.avg_seed + i);
      write_averaged_csv(out / ("mbar_" + tag + ".csv"), avg);
      detail::stage("effective_h", [&] {
        auto h = effective_from_mbar(avg);
        write_effective_csv(out / ("effective_" + tag + ".csv"), h, avg.angles);
        write_polygon_csv(out / ("wulff_" + tag + ".csv"), h.wulff);
        (sign > 0 ? rep.hamiltonians.positive : rep.hamiltonians.negative) = std::move(h);
      });
    });
  }

  if (spec.local_uniform) {
    detail::stage("local_uniform", [&] {
      const std::size_t E = spec.epsilons.size();
      std::vector<std::vector<LocalUniformRow>> per(spec.seeds);
      parallel_for(spec.seeds, spec.threads, [&](std::size_t i) {
        per[i] = local_uniform_test(ensemble[i], labels[i], rep.hamiltonians, spec.u0, spec.epsilons, spec.lab);
      });
      rep.local_mean.assign(E, 0.0);
      rep.local_max.assign(E, 0.0);
      rep.local_liminf.assign(E, kInf);
      for (const auto& rows : per)
        for (std::size_t k = 0; k < E; ++k) {
          rep.local_mean[k] += rows[k].sup_error / static_cast<double>(spec.seeds);
          rep.local_max[k] = std::max(rep.local_max[k], rows[k].sup_error);
          rep.local_liminf[k] = std::min(rep.local_liminf[k], rows[k].liminf_stat);
          rep.liminf_ok = rep.liminf_ok && rows[k].liminf_ok;
          detail::add_warnings(rep.warnings, rows[k].warnings);
        }
      rep.local_decreasing = strictly_decreasing(rep.local_mean);
      CsvWriter w(out / "local_uniform.csv");
      w.header({"epsilon", "mean_sup_error", "max_sup_error", "min_liminf_stat", "seeds"});
      for (std::size_t k = 0; k < E; ++k)
        w.row(spec.epsilons[k], rep.local_mean[k], rep.local_max[k], rep.local_liminf[k], spec.seeds);
      CsvWriter d(out / "local_uniform_components_seed0.csv");
      d.header({"epsilon", "component", "sign", "spanning", "nodes", "sup_error", "liminf_stat"});
      for (const auto& row : per.front())
        for (const auto& c : row.components)
          d.row(row.epsilon, c.component_id, c.sign, c.spanning ? 1 : 0, c.nodes, c.sup_error, c.liminf_stat);
    });
  }

  if (spec.weak) {
    detail::stage("weak", [&] {
      rep.weak = weak_star_test(ensemble, rep.theta, rep.hamiltonians, spec.u0, spec.epsilons, test_function_bank(),
                                spec.lab);
      detail::add_warnings(rep.warnings, rep.weak->warnings);
      CsvWriter w(out / "weak.csv");
      w.header({"epsilon", "test_fn", "centre_x", "centre_y", "width", "mean_abs_pairing", "stderr", "mean_pairing"});
      for (const auto& row : rep.weak->rows)
        for (std::size_t f = 0; f < rep.weak->bank.size(); ++f) {
          const auto& phi = rep.weak->bank[f];
          w.row(row.epsilon, f, phi.centre.x, phi.centre.y, phi.width, row.mean_abs[f], row.stderr_[f], row.mean[f]);
        }
    });
  }

  if (evolve) {
    detail::stage("evolve", [&] {
      // Contours and optional snapshots of the first sample, for inspection.
      EvolutionConfig cfg;
      cfg.T = spec.lab.T;
      cfg.snapshots = spec.lab.time_samples;
      cfg.cfl = spec.lab.cfl;
      cfg.boundary = spec.lab.boundary;
      for (std::size_t k = 0; k < spec.epsilons.size(); ++k) {
        const double eps = spec.epsilons[k];
        const auto win = centred_window(ensemble.front(), window_half_width(spec.lab), eps);
        const auto sub = crop_sample(ensemble.front(), win.r0, win.c0, win.size, win.size);
        const auto tr = solve_oscillatory(sub, spec.u0, eps, cfg);
        const auto& fin = tr.final();
        GridD shifted = fin.values;
        for (auto& v : shifted.storage()) v -= 0.25;
        write_contour_csv(out / ("contour_eps" + std::to_string(k) + ".csv"), level_contour(shifted, fin.frame));
        if (spec.write_snapshots)
          for (std::size_t j = 0; j < tr.snapshots.size(); ++j)
            save_fhl1((out / ("u_eps" + std::to_string(k) + "_t" + std::to_string(j) + ".fhl")).string(),
                      tr.snapshots[j].values);
      }
    });
  }

  if (spec.stationary) {
    detail::stage("stationary", [&] {
      if (!rep.hamiltonians.positive) throw StructuralError("stationary test needs a positive spanning component");
      const auto env = generate_medium(spec.medium, spec.stat_box, spec.stat_seed);
      const auto lab = label_components(env);
      rep.stationary = stationary_test(env, lab, *rep.hamiltonians.positive, spec.stat_p, spec.stat_epsilons,
                                       spec.stat_R, spec.stat_delta, spec.stat_opt);
      CsvWriter w(out / "stationary.csv");
      w.header({"epsilon", "p_x", "p_y", "hbar", "nodes", "sup_error", "mean_error", "sup_norm", "bound", "bound_ok",
                "iterations"});
      rep.stationary_decreasing = true;
      rep.stationary_bound_ok = true;
      const std::size_t E = spec.stat_epsilons.size();
      for (std::size_t i = 0; i < rep.stationary.size(); ++i) {
        const auto& r = rep.stationary[i];
        w.row(r.epsilon, r.p.x, r.p.y, r.hbar, r.nodes, r.sup_error, r.mean_error, r.sup_norm, r.bound,
              r.bound_ok ? 1 : 0, r.iterations);
        rep.stationary_bound_ok = rep.stationary_bound_ok && r.bound_ok;
        if (i % E != 0 && !(r.sup_error < rep.stationary[i - 1].sup_error)) rep.stationary_decreasing = false;
      }
    });
  }

  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CsvWriter s(out / "summary.csv");
  s.header({"key", "value"});
  s.row("name", spec.name);
  s.row("seeds", spec.seeds);
  s.row("theta_zero", rep.theta.zero);
  s.row("theta_bounded", rep.theta.bounded);
  s.row("theta_positive", rep.theta.positive);
  s.row("theta_negative", rep.theta.negative);
  for (int sign : {1, -1}) {
    const auto* h = rep.hamiltonians.spanning(sign);
    const std::string tag = sign > 0 ? "positive" : "negative";
    s.row("hbar_" + tag + "_e1", h ? (*h)(Vec2{1, 0}) : 0.0);
    s.row("hbar_" + tag + "_e2", h ? (*h)(Vec2{0, 1}) : 0.0);
  }
  if (spec.local_uniform) {
    s.row("local_uniform_decreasing", rep.local_decreasing ? 1 : 0);
    s.row("liminf_ok", rep.liminf_ok ? 1 : 0);
  }
  if (rep.weak) {
    s.row("weak_decreasing", rep.weak->all_decreasing ? 1 : 0);
    s.row("weak_max_decreasing", rep.weak->max_decreasing ? 1 : 0);
    s.row("test_bank_version", kTestBankVersion);
  }
  if (spec.stationary) {
    s.row("stationary_decreasing", rep.stationary_decreasing ? 1 : 0);
    s.row("stationary_bound_ok", rep.stationary_bound_ok ? 1 : 0);
  }
  for (auto seed : rep.excluded_seeds) s.row("excluded_seed", seed);
  for (const auto& w : rep.warnings) s.row("warning", "\"" + w + "\"");
  return rep;
}

inline ConvergenceReport run_experiment(const std::string& config_file, const std::filesystem::path& out) {
  const auto spec = detail::stage("config", [&] { return experiment_from_config(Config::load(config_file, experiment_schema())); });
  return run_experiment(spec, out);
}

}  // namespace fhl
