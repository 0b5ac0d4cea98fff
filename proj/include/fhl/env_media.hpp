#pragma once

// Stationary random environments on a periodic box and the capped signed
// distance velocity a(x) = +-min(d(x, interface), 1/2).
//
// Samples live on the lattice h*Z^2: node (r, c) is the point (c*h, r*h) and
// the box [0, L)^2 with L = cols*h is a torus. Cube faces of the percolation
// and checkerboard media are lattice lines, so the phase interface passes
// through nodes and a == 0 exactly there.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "fhl/common.hpp"
#include "fhl/csv.hpp"
#include "fhl/grid.hpp"

namespace fhl {

enum class MediumKind { site_percolation, poisson_cloud, checkerboard, isolated_obstacles, custom };

inline std::string to_string(MediumKind k) {
  switch (k) {
    case MediumKind::site_percolation: return "site_percolation";
    case MediumKind::poisson_cloud: return "poisson_cloud";
    case MediumKind::checkerboard: return "checkerboard";
    case MediumKind::isolated_obstacles: return "isolated_obstacles";
    case MediumKind::custom: return "custom";
  }
  return "unknown";
}

struct MediumParams {
  MediumKind kind = MediumKind::custom;
  double p = 0.0;           // open (white) probability
  double intensity = 0.0;   // Poisson points per unit area
  double radius = 0.0;      // ball radius, or lower end of the uniform radius law
  double radius_max = 0.0;  // > radius selects radius ~ U[radius, radius_max]
  double period = 0.0;      // checkerboard square side
  std::size_t point_count = 0;
  std::size_t cube_count = 0;
  std::size_t open_cubes = 0;
  std::vector<Vec2> centers;
  std::vector<double> radii;
};

struct EnvironmentSample {
  double cell_h = 1.0;
  std::uint64_t seed = 0;
  MediumParams params;
  Grid<std::uint8_t> obstacle_mask;  // 1 on the closed obstacle region F
  GridD a_field;
  double lipschitz_L = 1.0;
  bool periodic = true;

  int rows() const { return a_field.rows(); }
  int cols() const { return a_field.cols(); }
  int grid_size() const { return a_field.cols(); }
  double box_width() const { return cols() * cell_h; }
  double box_height() const { return rows() * cell_h; }
  double max_abs_a() const {
    double m = 0.0;
    for (double v : a_field.values()) m = std::max(m, std::abs(v));
    return m;
  }
  /// Smallest translation that maps the law of the medium to itself.
  double cube_size() const {
    switch (params.kind) {
      case MediumKind::site_percolation:
      case MediumKind::isolated_obstacles: return 1.0;
      case MediumKind::checkerboard: return params.period;
      default: return cell_h;
    }
  }
};

namespace detail {

inline int cells_per_unit(double cell_h) {
  if (!(cell_h > 0.0)) throw ParameterError("cell_h must be positive");
  const double inv = 1.0 / cell_h;
  const long n = std::lround(inv);
  if (n < 1 || std::abs(inv - static_cast<double>(n)) > 1e-9 * inv)
    throw ParameterError("1/cell_h must be a positive integer");
  return static_cast<int>(n);
}

inline int wrap(int i, int n) {
  const int m = i % n;
  return m < 0 ? m + n : m;
}

// Squared lattice distance (in node units) from node coordinate v to the
// closed interval [lo, hi].
inline long gap(long v, long lo, long hi) {
  if (v < lo) return lo - v;
  if (v > hi) return v - hi;
  return 0;
}

/// Capped signed distance for a periodic pattern of closed squares of side
/// `cells` nodes, `white[ky * k + kx]` true for open squares.
inline void paint_cube_pattern(EnvironmentSample& env, const std::vector<std::uint8_t>& white, int k, int cells) {
  const int rows = env.rows();
  const int cols = env.cols();
  const double h = env.cell_h;
  const double cube_len = cells * h;
  const int reach = static_cast<int>(std::ceil(kSpeedCap / cube_len)) + 1;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int kx0 = c / cells;
      const int ky0 = r / cells;
      long best_black = std::numeric_limits<long>::max();
      long best_white = std::numeric_limits<long>::max();
      for (int dy = -reach; dy <= reach; ++dy) {
        for (int dx = -reach; dx <= reach; ++dx) {
          const long lox = static_cast<long>(kx0 + dx) * cells;
          const long loy = static_cast<long>(ky0 + dy) * cells;
          const long gx = gap(c, lox, lox + cells);
          const long gy = gap(r, loy, loy + cells);
          const long d2 = gx * gx + gy * gy;
          const bool is_white = white[static_cast<std::size_t>(wrap(ky0 + dy, k) * k + wrap(kx0 + dx, k))] != 0;
          if (is_white)
            best_white = std::min(best_white, d2);
          else
            best_black = std::min(best_black, d2);
        }
      }
      const double d_black = best_black == std::numeric_limits<long>::max()
                                 ? kInf
                                 : h * std::sqrt(static_cast<double>(best_black));
      const double d_white = best_white == std::numeric_limits<long>::max()
                                 ? kInf
                                 : h * std::sqrt(static_cast<double>(best_white));
      const bool in_obstacle = best_black == 0;
      env.obstacle_mask(r, c) = in_obstacle ? 1 : 0;
      env.a_field(r, c) = in_obstacle ? -std::min(d_white, kSpeedCap) : std::min(d_black, kSpeedCap);
    }
  }
}

struct Ball {
  Vec2 c;
  double r;
};

/// Exact distance from x (inside the union) to the boundary of the union of
/// `balls`, or `limit` if no boundary point lies closer than `limit`.
/// Candidates are radial projections onto each circle and pairwise circle
/// intersections that no other ball covers.
inline double distance_to_union_boundary(Vec2 x, const std::vector<Ball>& balls, double limit) {
  auto covered = [&](Vec2 q, std::size_t skip_a, std::size_t skip_b) {
    for (std::size_t j = 0; j < balls.size(); ++j) {
      if (j == skip_a || j == skip_b) continue;
      if (norm(q - balls[j].c) < balls[j].r * (1.0 - 1e-12)) return true;
    }
    return false;
  };
  double best = limit;
  const std::size_t none = balls.size();
  for (std::size_t i = 0; i < balls.size(); ++i) {
    const Vec2 d = x - balls[i].c;
    const double len = norm(d);
    const Vec2 dir = len > 0.0 ? d / len : Vec2{1.0, 0.0};
    const Vec2 q = balls[i].c + dir * balls[i].r;
    const double dist = std::abs(balls[i].r - len);
    if (dist < best && !covered(q, i, none)) best = dist;
  }
  for (std::size_t i = 0; i < balls.size(); ++i) {
    for (std::size_t j = i + 1; j < balls.size(); ++j) {
      const Vec2 d = balls[j].c - balls[i].c;
      const double D = norm(d);
      if (D <= 0.0 || D >= balls[i].r + balls[j].r || D <= std::abs(balls[i].r - balls[j].r)) continue;
      const double along = (D * D + balls[i].r * balls[i].r - balls[j].r * balls[j].r) / (2.0 * D);
      const double half = std::sqrt(std::max(balls[i].r * balls[i].r - along * along, 0.0));
      const Vec2 e = d / D;
      const Vec2 n{-e.y, e.x};
      const Vec2 base = balls[i].c + e * along;
      for (double s : {-1.0, 1.0}) {
        const Vec2 q = base + n * (s * half);
        const double dist = norm(q - x);
        if (dist < best && !covered(q, i, j)) best = dist;
      }
    }
  }
  return best;
}

/// Capped signed distance for a periodic union of closed balls. Distances are
/// shrunk by h/2 before capping so that no two 4-adjacent nodes carry
/// opposite nonzero signs; the map stays 1-Lipschitz.
inline void paint_balls(EnvironmentSample& env, const std::vector<Ball>& balls) {
  const int rows = env.rows();
  const int cols = env.cols();
  const double h = env.cell_h;
  const double W = env.box_width();
  const double H = env.box_height();
  const double shrink = 0.5 * h;
  double rmax = 0.0;
  for (const auto& b : balls) rmax = std::max(rmax, b.r);
  const double reach = rmax + kSpeedCap + shrink + h;
  const int nbx = std::max(1, static_cast<int>(W / 1.0));
  const int nby = std::max(1, static_cast<int>(H / 1.0));
  const double bw = W / nbx;
  const double bh = H / nby;
  std::vector<std::vector<std::size_t>> buckets(static_cast<std::size_t>(nbx * nby));
  for (std::size_t i = 0; i < balls.size(); ++i) {
    const int bx = std::min(nbx - 1, static_cast<int>(balls[i].c.x / bw));
    const int by = std::min(nby - 1, static_cast<int>(balls[i].c.y / bh));
    buckets[static_cast<std::size_t>(by * nbx + bx)].push_back(i);
  }
  const int mx = std::min(static_cast<int>(std::ceil(reach / bw)) + 1, (nbx - 1) / 2 + 1);
  const int my = std::min(static_cast<int>(std::ceil(reach / bh)) + 1, (nby - 1) / 2 + 1);
  std::vector<Ball> local;
  std::vector<char> seen_bucket(static_cast<std::size_t>(nbx * nby), 0);
  std::vector<std::size_t> touched;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const Vec2 x{c * h, r * h};
      local.clear();
      const int bx0 = std::min(nbx - 1, static_cast<int>(x.x / bw));
      const int by0 = std::min(nby - 1, static_cast<int>(x.y / bh));
      touched.clear();
      double d_out = kInf;
      for (int dy = -my; dy <= my; ++dy) {
        for (int dx = -mx; dx <= mx; ++dx) {
          const auto b = static_cast<std::size_t>(wrap(by0 + dy, nby) * nbx + wrap(bx0 + dx, nbx));
          if (seen_bucket[b]) continue;
          seen_bucket[b] = 1;
          touched.push_back(b);
          for (std::size_t i : buckets[b]) {
            Vec2 d = x - balls[i].c;
            d.x -= W * std::round(d.x / W);
            d.y -= H * std::round(d.y / H);
            const double len = norm(d);
            if (len < balls[i].r + reach) local.push_back({x - d, balls[i].r});
            d_out = std::min(d_out, len - balls[i].r);
          }
        }
      }
      for (auto b : touched) seen_bucket[b] = 0;
      if (d_out > 0.0) {
        env.obstacle_mask(r, c) = 0;
        env.a_field(r, c) = std::min(std::max(d_out - shrink, 0.0), kSpeedCap);
      } else {
        env.obstacle_mask(r, c) = 1;
        const double d_in = distance_to_union_boundary(x, local, kSpeedCap + shrink);
        env.a_field(r, c) = -std::min(std::max(d_in - shrink, 0.0), kSpeedCap);
      }
    }
  }
}

inline EnvironmentSample blank_sample(int grid_size, double cell_h, std::uint64_t seed, MediumKind kind) {
  if (grid_size < 2) throw ParameterError("grid_size must be at least 2");
  EnvironmentSample env;
  env.cell_h = cell_h;
  env.seed = seed;
  env.params.kind = kind;
  env.obstacle_mask = Grid<std::uint8_t>(grid_size, grid_size, cell_h, 0);
  env.a_field = GridD(grid_size, grid_size, cell_h, 0.0);
  return env;
}

}  // namespace detail

/// Bernoulli site percolation on unit cubes: each cube is open with
/// probability p, independently; black cubes form the obstacle F.
inline EnvironmentSample gen_site_percolation(double p, int grid_size, double cell_h, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("site percolation: p must lie in [0, 1]");
  const int n = detail::cells_per_unit(cell_h);
  if (grid_size < 2) throw ParameterError("grid_size must be at least 2");
  if (grid_size % n != 0) throw ParameterError("site percolation: box must hold a whole number of unit cubes");
  const int k = grid_size / n;
  auto env = detail::blank_sample(grid_size, cell_h, seed, MediumKind::site_percolation);
  env.params.p = p;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::uint8_t> white(static_cast<std::size_t>(k) * static_cast<std::size_t>(k));
  std::size_t open = 0;
  for (auto& w : white) {
    w = unif(rng) < p ? 1 : 0;
    open += w;
  }
  env.params.cube_count = white.size();
  env.params.open_cubes = open;
  detail::paint_cube_pattern(env, white, k, n);
  return env;
}

/// Deterministic checkerboard of squares of side `period`; the square with
/// lower-left corner at the origin is open.
inline EnvironmentSample gen_checkerboard(double period, int grid_size, double cell_h) {
  if (!(period > 0.0)) throw ParameterError("checkerboard: period must be positive");
  const double per_cells = period / cell_h;
  const long n = std::lround(per_cells);
  if (n < 1 || std::abs(per_cells - static_cast<double>(n)) > 1e-9 * per_cells)
    throw ParameterError("checkerboard: period must be a multiple of cell_h");
  if (grid_size < 2 || grid_size % n != 0) throw ParameterError("checkerboard: period must divide the box size");
  const int k = grid_size / static_cast<int>(n);
  if (k % 2 != 0) throw ParameterError("checkerboard: box must hold an even number of squares per side");
  auto env = detail::blank_sample(grid_size, cell_h, 0, MediumKind::checkerboard);
  env.params.period = period;
  std::vector<std::uint8_t> white(static_cast<std::size_t>(k) * static_cast<std::size_t>(k));
  for (int ky = 0; ky < k; ++ky)
    for (int kx = 0; kx < k; ++kx) white[static_cast<std::size_t>(ky * k + kx)] = (kx + ky) % 2 == 0 ? 1 : 0;
  env.params.cube_count = white.size();
  env.params.open_cubes = white.size() / 2;
  detail::paint_cube_pattern(env, white, k, static_cast<int>(n));
  return env;
}

/// Union of the given closed balls on a periodic box.
inline EnvironmentSample gen_balls(const std::vector<Vec2>& centers, const std::vector<double>& radii, int grid_size,
                                   double cell_h, std::uint64_t seed = 0) {
  if (centers.size() != radii.size()) throw ParameterError("balls: centers and radii differ in length");
  auto env = detail::blank_sample(grid_size, cell_h, seed, MediumKind::custom);
  std::vector<detail::Ball> balls;
  balls.reserve(centers.size());
  const double L = env.box_width();
  for (std::size_t i = 0; i < centers.size(); ++i) {
    if (!(radii[i] > 0.0)) throw ParameterError("balls: radius must be positive");
    if (radii[i] + kSpeedCap + cell_h >= 0.5 * L) throw ParameterError("balls: radius too large for the box");
    Vec2 c{std::fmod(centers[i].x, L), std::fmod(centers[i].y, L)};
    if (c.x < 0) c.x += L;
    if (c.y < 0) c.y += L;
    balls.push_back({c, radii[i]});
  }
  env.params.centers = centers;
  env.params.radii = radii;
  env.params.point_count = centers.size();
  detail::paint_balls(env, balls);
  return env;
}

/// Boolean model: Poisson points of the given intensity on the box, each
/// carrying a closed ball. radius_max > radius draws radii uniformly.
inline EnvironmentSample gen_poisson_cloud(double intensity, double radius, double box_size, double cell_h,
                                           std::uint64_t seed, double radius_max = 0.0) {
  if (!(intensity > 0.0)) throw ParameterError("poisson cloud: intensity must be positive");
  if (!(box_size > 0.0)) throw ParameterError("poisson cloud: box size must be positive");
  const double rmax = std::max(radius, radius_max);
  if (!(radius > 0.0) || !(rmax < box_size / 4.0)) throw ParameterError("poisson cloud: need 0 < radius < box_size/4");
  const double cells = box_size / cell_h;
  const long grid_size = std::lround(cells);
  if (std::abs(cells - static_cast<double>(grid_size)) > 1e-9 * cells)
    throw ParameterError("poisson cloud: box_size must be a multiple of cell_h");
  const double expected = intensity * box_size * box_size;
  if (expected > 1e7) throw ResourceError("poisson cloud: expected point count exceeds 1e7");

  std::mt19937_64 rng(seed);
  std::poisson_distribution<long> count_law(expected);
  std::uniform_real_distribution<double> pos(0.0, box_size);
  std::uniform_real_distribution<double> rad(radius, rmax);
  const long count = count_law(rng);
  std::vector<Vec2> centers;
  std::vector<double> radii;
  centers.reserve(static_cast<std::size_t>(count));
  radii.reserve(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) {
    const double x = pos(rng);
    const double y = pos(rng);
    centers.push_back({x, y});
    radii.push_back(rmax > radius ? rad(rng) : radius);
  }
  auto env = gen_balls(centers, radii, static_cast<int>(grid_size), cell_h, seed);
  env.params.kind = MediumKind::poisson_cloud;
  env.params.intensity = intensity;
  env.params.radius = radius;
  env.params.radius_max = radius_max;
  return env;
}

/// Site percolation with isolated obstacles: each unit cube independently is
/// empty with probability p, otherwise it holds a ball of the given radius at
/// its centre (radius < 1/2, so the ball sits compactly inside the cube).
inline EnvironmentSample gen_isolated_obstacles(double p, double radius, int grid_size, double cell_h,
                                                std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("isolated obstacles: p must lie in [0, 1]");
  if (!(radius > 0.0 && radius < 0.5)) throw ParameterError("isolated obstacles: radius must lie in (0, 1/2)");
  const int n = detail::cells_per_unit(cell_h);
  if (grid_size < 2 || grid_size % n != 0) throw ParameterError("isolated obstacles: box must hold whole unit cubes");
  const int k = grid_size / n;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Vec2> centers;
  std::vector<double> radii;
  std::size_t open = 0;
  for (int ky = 0; ky < k; ++ky) {
    for (int kx = 0; kx < k; ++kx) {
      if (unif(rng) < p) {
        ++open;
        continue;
      }
      centers.push_back({kx + 0.5, ky + 0.5});
      radii.push_back(radius);
    }
  }
  auto env = gen_balls(centers, radii, grid_size, cell_h, seed);
  env.params.kind = MediumKind::isolated_obstacles;
  env.params.p = p;
  env.params.radius = radius;
  env.params.cube_count = static_cast<std::size_t>(k) * static_cast<std::size_t>(k);
  env.params.open_cubes = open;
  return env;
}

/// Wraps an arbitrary sampled velocity. The obstacle mask marks a < 0.
inline EnvironmentSample from_field(GridD a, bool periodic = false, double lipschitz_L = 1.0) {
  EnvironmentSample env;
  env.cell_h = a.h();
  env.params.kind = MediumKind::custom;
  env.obstacle_mask = Grid<std::uint8_t>(a.rows(), a.cols(), a.h(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) env.obstacle_mask[i] = a[i] < 0.0 ? 1 : 0;
  env.a_field = std::move(a);
  env.periodic = periodic;
  env.lipschitz_L = lipschitz_L;
  return env;
}

/// Periodic shift a'(x) = a(x + z mod box), z a multiple of the cube size.
inline EnvironmentSample translate_sample(const EnvironmentSample& env, Vec2 z) {
  const double cube = env.cube_size();
  auto whole = [&](double v) {
    const double q = v / cube;
    return std::abs(q - std::round(q)) <= 1e-9 * std::max(1.0, std::abs(q));
  };
  if (!whole(z.x) || !whole(z.y)) throw ParameterError("translate: shift must be a multiple of the cube size");
  const int sx = static_cast<int>(std::lround(z.x / env.cell_h));
  const int sy = static_cast<int>(std::lround(z.y / env.cell_h));
  EnvironmentSample out = env;
  const int rows = env.rows();
  const int cols = env.cols();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int rs = detail::wrap(r + sy, rows);
      const int cs = detail::wrap(c + sx, cols);
      out.a_field(r, c) = env.a_field(rs, cs);
      out.obstacle_mask(r, c) = env.obstacle_mask(rs, cs);
    }
  }
  return out;
}

/// Non-periodic window [r0, r0+rows) x [c0, c0+cols) of a sample.
inline EnvironmentSample crop_sample(const EnvironmentSample& env, int r0, int c0, int rows, int cols) {
  if (r0 < 0 || c0 < 0 || rows <= 0 || cols <= 0 || r0 + rows > env.rows() || c0 + cols > env.cols())
    throw ParameterError("crop: window outside the sample");
  EnvironmentSample out;
  out.cell_h = env.cell_h;
  out.seed = env.seed;
  out.params = env.params;
  out.lipschitz_L = env.lipschitz_L;
  out.periodic = false;
  out.a_field = GridD(rows, cols, env.cell_h);
  out.obstacle_mask = Grid<std::uint8_t>(rows, cols, env.cell_h);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      out.a_field(r, c) = env.a_field(r0 + r, c0 + c);
      out.obstacle_mask(r, c) = env.obstacle_mask(r0 + r, c0 + c);
    }
  return out;
}

/// Largest |a(x) - a(y)| / |x - y| over 4- and 8-neighbour node pairs
/// (wrapping when the sample is periodic).
inline double discrete_lipschitz(const EnvironmentSample& env) {
  const auto& a = env.a_field;
  const double h = env.cell_h;
  double worst = 0.0;
  const int offs[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c)
      for (const auto& o : offs) {
        int rr = r + o[0], cc = c + o[1];
        if (env.periodic) {
          rr = detail::wrap(rr, a.rows());
          cc = detail::wrap(cc, a.cols());
        } else if (!a.inside(rr, cc)) {
          continue;
        }
        const double dist = (o[0] != 0 && o[1] != 0) ? h * std::sqrt(2.0) : h;
        worst = std::max(worst, std::abs(a(r, c) - a(rr, cc)) / dist);
      }
  return worst;
}

/// Number of 4-adjacent node pairs where a > 0 on one side and a < 0 on the
/// other. Zero means the interface is resolved by a == 0 nodes.
inline std::size_t opposite_sign_contacts(const EnvironmentSample& env) {
  const auto& a = env.a_field;
  std::size_t count = 0;
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c) {
      const int nb[2][2] = {{r, c + 1}, {r + 1, c}};
      for (const auto& q : nb) {
        int rr = q[0], cc = q[1];
        if (env.periodic) {
          rr = detail::wrap(rr, a.rows());
          cc = detail::wrap(cc, a.cols());
        } else if (!a.inside(rr, cc)) {
          continue;
        }
        if (a(r, c) * a(rr, cc) < 0.0) ++count;
      }
    }
  return count;
}

inline void write_metadata_csv(const std::filesystem::path& path, const EnvironmentSample& env) {
  CsvWriter w(path);
  w.header({"key", "value"});
  w.row("kind", to_string(env.params.kind));
  w.row("seed", env.seed);
  w.row("rows", env.rows());
  w.row("cols", env.cols());
  w.row("cell_h", env.cell_h);
  w.row("periodic", env.periodic ? 1 : 0);
  w.row("p", env.params.p);
  w.row("intensity", env.params.intensity);
  w.row("radius", env.params.radius);
  w.row("radius_max", env.params.radius_max);
  w.row("period", env.params.period);
  w.row("point_count", env.params.point_count);
  w.row("cube_count", env.params.cube_count);
  w.row("open_cubes", env.params.open_cubes);
  w.row("lipschitz_L", env.lipschitz_L);
}

}  // namespace fhl
