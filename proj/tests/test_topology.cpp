#include <gtest/gtest.h>

#include <algorithm>
#include <deque>
#include <random>

#include "fhl/env_media.hpp"
#include "fhl/topology.hpp"

using namespace fhl;

namespace {

// Independent oracle: BFS over a predicate, returns the number of pieces and
// whether some piece touches two opposite faces.
struct BfsResult {
  int pieces = 0;
  bool spanning = false;
  std::vector<std::size_t> sizes;
  int pieces_at_least(std::size_t n) const {
    return static_cast<int>(std::count_if(sizes.begin(), sizes.end(), [&](std::size_t s) { return s >= n; }));
  }
};

template <class Pred>
BfsResult bfs_pieces(int rows, int cols, Pred in) {
  std::vector<int> seen(static_cast<std::size_t>(rows * cols), 0);
  BfsResult res;
  for (int s = 0; s < rows * cols; ++s) {
    if (!in(s) || seen[static_cast<std::size_t>(s)]) continue;
    ++res.pieces;
    bool l = false, r = false, b = false, t = false;
    std::size_t count = 0;
    std::deque<int> q{s};
    seen[static_cast<std::size_t>(s)] = 1;
    while (!q.empty()) {
      const int u = q.front();
      q.pop_front();
      ++count;
      const int ur = u / cols, uc = u % cols;
      l |= uc == 0;
      r |= uc == cols - 1;
      b |= ur == 0;
      t |= ur == rows - 1;
      const int nb[4][2] = {{ur, uc - 1}, {ur, uc + 1}, {ur - 1, uc}, {ur + 1, uc}};
      for (const auto& n : nb) {
        if (n[0] < 0 || n[0] >= rows || n[1] < 0 || n[1] >= cols) continue;
        const int v = n[0] * cols + n[1];
        if (in(v) && !seen[static_cast<std::size_t>(v)]) {
          seen[static_cast<std::size_t>(v)] = 1;
          q.push_back(v);
        }
      }
    }
    res.spanning |= (l && r) || (b && t);
    res.sizes.push_back(count);
  }
  return res;
}

void expect_partition(const ComponentLabeling& lab, const EnvironmentSample& env) {
  std::size_t covered = 0;
  for (std::size_t i = 0; i < env.a_field.size(); ++i) {
    const double a = env.a_field[i];
    const int id = lab.labels[i];
    if (a == 0.0) {
      EXPECT_EQ(id, 0);
    } else {
      ASSERT_NE(id, 0);
      EXPECT_EQ(lab.info(id).sign, a > 0 ? 1 : -1);
    }
  }
  for (const auto& c : lab.components) {
    covered += c.cells;
    const auto& cells = lab.cells(c.id);
    EXPECT_EQ(cells.size(), c.cells);
    // Each label is a single 4-connected piece.
    auto bfs = bfs_pieces(env.rows(), env.cols(), [&](int i) { return lab.labels[static_cast<std::size_t>(i)] == c.id; });
    EXPECT_EQ(bfs.pieces, 1);
  }
  std::size_t nonzero = 0;
  for (double a : env.a_field.values()) nonzero += a != 0.0;
  EXPECT_EQ(covered, nonzero);
}

}  // namespace

TEST(Labeling, SingleBlackCubeInOpenSea) {
  auto open = gen_site_percolation(1.0, 40, 0.125, 0);
  // Paint one black cube by hand via the ball-free route: a pattern with one
  // black square is the percolation field of a 5x5 board with one black cube.
  std::vector<std::uint8_t> white(25, 1);
  white[12] = 0;
  detail::paint_cube_pattern(open, white, 5, 8);
  auto lab = label_components(open);
  int pos = 0, neg = 0;
  for (const auto& c : lab.components) (c.sign > 0 ? pos : neg)++;
  EXPECT_EQ(pos, 1);
  EXPECT_EQ(neg, 1);
  expect_partition(lab, open);
}

TEST(Labeling, CheckerboardTraps) {
  auto env = gen_checkerboard(1.0, 64, 0.125);
  auto lab = label_components(env);
  EXPECT_EQ(lab.count(), 64u);
  for (const auto& c : lab.components) EXPECT_FALSE(c.spanning());
  EXPECT_EQ(spanning_component(lab, 1), 0);
  expect_partition(lab, env);
}

TEST(Labeling, PercolationSpanningMatchesBfs) {
  auto env = gen_site_percolation(0.7, 64 * 4, 0.25, 42);
  auto lab = label_components(env);
  const int sid = spanning_component(lab, 1);
  ASSERT_NE(sid, 0);
  auto bfs = bfs_pieces(env.rows(), env.cols(), [&](int i) { return lab.labels[static_cast<std::size_t>(i)] == sid; });
  EXPECT_TRUE(bfs.spanning);
  // Oracle on the raw field: positive phase has a spanning BFS piece.
  auto raw = bfs_pieces(env.rows(), env.cols(), [&](int i) { return env.a_field[static_cast<std::size_t>(i)] > 0.0; });
  EXPECT_TRUE(raw.spanning);
  expect_partition(lab, env);
}

TEST(DeltaSublevel, ZeroDeltaAndCap) {
  auto env = gen_site_percolation(0.6, 64, 0.125, 8);
  auto lab = label_components(env);
  auto same = delta_sublevel(lab, env, 0.0);
  ASSERT_EQ(same.count(), lab.count());
  for (std::size_t i = 0; i < env.a_field.size(); ++i) EXPECT_EQ(same.labels[i] != 0, lab.labels[i] != 0);
  for (const auto& c : same.components) EXPECT_EQ(lab.cells(c.parent), same.cells(c.id));
  auto empty = delta_sublevel(lab, env, 0.5);
  EXPECT_EQ(empty.count(), 0u);
  EXPECT_THROW(delta_sublevel(lab, env, -0.1), ParameterError);
}

TEST(DeltaSublevel, SpanningStaysConnectedAtTenth) {
  for (std::uint64_t seed : {42u, 43u, 44u}) {
    auto env = gen_site_percolation(0.7, 64 * 4, 0.25, seed);
    auto lab = label_components(env);
    const int sid = spanning_component(lab, 1);
    ASSERT_NE(sid, 0);
    auto sub = delta_sublevel(lab, env, 0.1);
    EXPECT_TRUE(sublevel_connected(sub, sid));
    auto bfs = bfs_pieces(env.rows(), env.cols(), [&](int i) {
      return lab.labels[static_cast<std::size_t>(i)] == sid && std::abs(env.a_field[static_cast<std::size_t>(i)]) > 0.1;
    });
    EXPECT_EQ(bfs.pieces, 1);
  }
}

TEST(DeltaSublevel, Delta0IsTheSplittingThreshold) {
  auto env = gen_poisson_cloud(0.9, 0.3, 8.0, 0.125, 3);
  for (std::size_t island : {std::size_t{1}, unit_cube_nodes(env.cell_h)}) {
    auto lab = label_components(env, island);
    std::mt19937_64 rng(5);
    int checked = 0;
    for (const auto& c : lab.components) {
      if (c.cells < 20) continue;
      std::uniform_real_distribution<double> below(0.0, c.delta0);
      for (int k = 0; k < 3; ++k) {
        const double d = c.delta0 > 0 ? below(rng) * (1.0 - 1e-12) : 0.0;
        auto bfs = bfs_pieces(env.rows(), env.cols(), [&](int i) {
          return lab.labels[static_cast<std::size_t>(i)] == c.id && std::abs(env.a_field[static_cast<std::size_t>(i)]) > d;
        });
        EXPECT_LE(bfs.pieces_at_least(lab.delta0_min_piece), 1);
      }
      if (c.delta0 < c.max_abs_a) {
        // At delta0 itself the interior has split.
        auto bfs = bfs_pieces(env.rows(), env.cols(), [&](int i) {
          return lab.labels[static_cast<std::size_t>(i)] == c.id &&
                 std::abs(env.a_field[static_cast<std::size_t>(i)]) > c.delta0;
        });
        EXPECT_GE(bfs.pieces_at_least(lab.delta0_min_piece), 2);
      }
      ++checked;
    }
    EXPECT_GT(checked, 0);
  }
}

TEST(Theta, SumsToOneExactly) {
  auto env = gen_site_percolation(0.6, 64, 0.125, 4);
  auto lab = label_components(env);
  auto vf = estimate_theta(lab);
  std::size_t n = vf.zero_count;
  for (auto c : vf.counts) n += c;
  EXPECT_EQ(n, vf.total);
  double s = vf.theta0;
  for (double t : vf.theta) s += t;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Theta, AllOpenAndCheckerboardSymmetry) {
  auto open = gen_site_percolation(1.0, 32, 0.25, 0);
  auto vf = estimate_theta(label_components(open));
  ASSERT_EQ(vf.theta.size(), 1u);
  EXPECT_EQ(vf.theta[0], 1.0);
  EXPECT_EQ(vf.theta0, 0.0);
  auto cb = gen_checkerboard(1.0, 64, 0.125);
  auto lab = label_components(cb);
  auto f = estimate_theta(lab);
  double pos = 0, neg = 0;
  for (const auto& c : lab.components) (c.sign > 0 ? pos : neg) += f.of(c.id);
  EXPECT_NEAR(pos, neg, 2.0 * 64 / (64.0 * 64.0));
}

TEST(Theta, EnsembleStandardErrorSmall) {
  std::vector<double> thetas;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto env = gen_site_percolation(0.7, 64 * 2, 0.5, seed);
    auto lab = label_components(env);
    const int sid = spanning_component(lab, 1);
    thetas.push_back(sid ? estimate_theta(lab).of(sid) : 0.0);
  }
  EXPECT_LT(mean_stderr(thetas).stderr_, 0.02);
}

TEST(Spanning, FrequencyAtSevenTenths) {
  int spanning = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto env = gen_site_percolation(0.7, 64 * 2, 0.5, 1000 + seed);
    spanning += spanning_component(label_components(env), 1) != 0;
  }
  EXPECT_GE(spanning / 20.0, 0.95);
}

TEST(Rays, SupercoverIncludesCornerTouches) {
  auto hits = ray_squares(5, 5, 1.0, {0.0, 0.0}, {1 / std::sqrt(2.0), 1 / std::sqrt(2.0)}, kInf);
  // Diagonal through vertices: 4 squares on the diagonal plus 2 side squares
  // at each of the 3 interior vertices.
  EXPECT_EQ(hits.size(), 4u + 6u);
  auto axis = ray_squares(5, 5, 1.0, {0.0, 0.5}, {1.0, 0.0}, 2.5);
  ASSERT_EQ(axis.size(), 3u);
  EXPECT_DOUBLE_EQ(axis.back().t_out, 2.5);
}

TEST(Rays, AllOpenHasNoGaps) {
  auto env = gen_site_percolation(1.0, 64, 0.125, 0);
  auto lab = label_components(env);
  auto gs = ray_gap_statistics(lab, env, unit_from_angle(0.3), 0.1);
  EXPECT_TRUE(gs.gaps.empty());
}

TEST(Rays, CheckerboardHasNoSpanningComponent) {
  auto env = gen_checkerboard(1.0, 64, 0.125);
  auto lab = label_components(env);
  EXPECT_THROW(ray_gap_statistics(lab, env, {1.0, 0.0}, 0.1), StructuralError);
}

TEST(Rays, GapsAreOrderedAndDisjoint) {
  auto env = gen_site_percolation(0.7, 64 * 4, 0.25, 42);
  auto lab = label_components(env);
  for (double ang : {0.0, 0.4, 1.1}) {
    auto gs = ray_gap_statistics(lab, env, unit_from_angle(ang), 0.1);
    for (std::size_t j = 0; j < gs.gaps.size(); ++j) {
      EXPECT_LE(gs.gaps[j].s, gs.gaps[j].t);
      if (j) EXPECT_GT(gs.gaps[j].s, gs.gaps[j - 1].t);
    }
  }
}

TEST(Rays, PercolationGapTailDecays) {
  // Empirical frequency of gaps longer than k cubes, from axis rays over an
  // ensemble, bounded by F(1) p^(k-1) plus three multinomial standard errors.
  const double p = 0.7;
  std::vector<std::size_t> tail(6, 0);
  std::size_t total = 0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    auto env = gen_site_percolation(p, 64 * 4, 0.25, seed);
    auto lab = label_components(env);
    const int sid = spanning_component(lab, 1);
    if (!sid) continue;
    const auto in = interior_mask(lab, env, sid, 0.1);
    for (int row = 2; row < env.rows(); row += 4) {
      auto gs = gaps_along_ray(in, env.rows(), env.cols(), env.cell_h, {0.0, row * env.cell_h}, {1.0, 0.0}, kInf);
      auto counts = gs.tail_counts(5, 1.0);
      for (std::size_t k = 0; k < counts.size(); ++k) tail[k] += counts[k];
    }
  }
  total = tail[0];
  ASSERT_GT(total, 100u);
  const double f1 = static_cast<double>(tail[1]) / static_cast<double>(total);
  for (int k = 1; k <= 5; ++k) {
    const double fk = static_cast<double>(tail[static_cast<std::size_t>(k)]) / static_cast<double>(total);
    const double sigma = std::sqrt(std::max(fk * (1 - fk), 1.0 / static_cast<double>(total)) / static_cast<double>(total));
    EXPECT_LE(fk, f1 * std::pow(p, k - 1) + 3 * sigma) << "k=" << k;
  }
}
