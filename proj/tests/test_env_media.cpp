#include <gtest/gtest.h>

#include <sstream>

#include "fhl/env_media.hpp"
#include "fhl/topology.hpp"

using namespace fhl;

namespace {

void expect_structural_invariants(const EnvironmentSample& env) {
  EXPECT_LE(discrete_lipschitz(env), 1.0 + 1e-12);
  EXPECT_EQ(opposite_sign_contacts(env), 0u);
  for (std::size_t i = 0; i < env.a_field.size(); ++i) {
    const double a = env.a_field[i];
    ASSERT_LE(std::abs(a), kSpeedCap);
    if (a > 0) ASSERT_EQ(env.obstacle_mask[i], 0);
    if (a < 0) ASSERT_EQ(env.obstacle_mask[i], 1);
  }
}

}  // namespace

TEST(SitePercolation, AllOpenIsCapped) {
  auto env = gen_site_percolation(1.0, 32, 0.25, 3);
  for (auto m : env.obstacle_mask.values()) EXPECT_EQ(m, 0);
  for (double a : env.a_field.values()) EXPECT_EQ(a, 0.5);
}

TEST(SitePercolation, AllBlackIsOneNegativeComponent) {
  auto env = gen_site_percolation(0.0, 32, 0.25, 3);
  for (double a : env.a_field.values()) EXPECT_LE(a, 0.0);
  auto lab = label_components(env);
  ASSERT_EQ(lab.count(), 1u);
  EXPECT_EQ(lab.components[0].sign, -1);
}

TEST(SitePercolation, OpenFractionWithinBinomialBand) {
  const int cubes = 64;
  const int n = 4;
  auto env = gen_site_percolation(0.7, cubes * n, 1.0 / n, 42);
  // Independent count: a cube is open iff its centre node has a > 0.
  std::size_t open = 0;
  for (int ky = 0; ky < cubes; ++ky)
    for (int kx = 0; kx < cubes; ++kx) open += env.a_field(ky * n + n / 2, kx * n + n / 2) > 0.0 ? 1 : 0;
  EXPECT_EQ(open, env.params.open_cubes);
  const double frac = static_cast<double>(open) / (cubes * cubes);
  EXPECT_NEAR(frac, 0.7, 3.0 * std::sqrt(0.7 * 0.3 / (cubes * cubes)));
  expect_structural_invariants(env);
}

TEST(SitePercolation, DeterministicAndSeedSensitive) {
  auto a = gen_site_percolation(0.6, 64, 0.125, 11);
  auto b = gen_site_percolation(0.6, 64, 0.125, 11);
  auto c = gen_site_percolation(0.6, 64, 0.125, 12);
  EXPECT_TRUE(a.a_field == b.a_field);
  EXPECT_TRUE(a.obstacle_mask == b.obstacle_mask);
  EXPECT_FALSE(a.a_field == c.a_field);
}

TEST(SitePercolation, RejectsBadParameters) {
  EXPECT_THROW(gen_site_percolation(-0.1, 32, 0.25, 1), ParameterError);
  EXPECT_THROW(gen_site_percolation(1.5, 32, 0.25, 1), ParameterError);
  EXPECT_THROW(gen_site_percolation(0.5, 1, 0.25, 1), ParameterError);
  EXPECT_THROW(gen_site_percolation(0.5, 30, 0.25, 1), ParameterError);
  EXPECT_THROW(gen_site_percolation(0.5, 32, 0.3, 1), ParameterError);
}

TEST(SitePercolation, InterfaceNodesAreZero) {
  auto env = gen_site_percolation(0.5, 64, 0.125, 5);
  const int n = 8;
  // A node on a face shared by an open and a black cube must carry a == 0.
  for (int r = 0; r < env.rows(); r += n)
    for (int c = 0; c < env.cols(); ++c) {
      const double below = env.a_field((r - 1 + env.rows()) % env.rows(), c);
      const double above = env.a_field((r + 1) % env.rows(), c);
      if (below * above < 0.0) EXPECT_EQ(env.a_field(r, c), 0.0);
    }
  expect_structural_invariants(env);
}

TEST(PoissonCloud, EmptyCloudIsCapped) {
  auto env = gen_poisson_cloud(1e-9, 0.3, 8.0, 0.125, 1);
  ASSERT_EQ(env.params.point_count, 0u);
  for (double a : env.a_field.values()) EXPECT_EQ(a, 0.5);
}

TEST(PoissonCloud, SingleBallMinimumAtCentre) {
  const double h = 1.0 / 32;
  const double r = 0.3;
  auto env = gen_balls({{2.0, 2.0}}, {r}, 128, h);
  double best = kInf;
  int arg = -1;
  for (std::size_t i = 0; i < env.a_field.size(); ++i)
    if (env.a_field[i] < best) {
      best = env.a_field[i];
      arg = static_cast<int>(i);
    }
  EXPECT_EQ(env.a_field.position(arg), (Vec2{2.0, 2.0}));
  EXPECT_NEAR(best, -std::min(r, 0.5), h);
  expect_structural_invariants(env);
}

TEST(PoissonCloud, CountWithinPoissonBand) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const double lambda = 0.4;
    const double L = 16.0;
    auto env = gen_poisson_cloud(lambda, 0.35, L, 0.125, seed);
    const double mean = lambda * L * L;
    EXPECT_LE(std::abs(static_cast<double>(env.params.point_count) - mean), 3.0 * std::sqrt(mean));
    expect_structural_invariants(env);
  }
}

TEST(PoissonCloud, OverlappingBallsUseUnionBoundary) {
  const double h = 1.0 / 64;
  auto env = gen_balls({{2.0, 2.0}, {2.5, 2.0}}, {0.4, 0.4}, 256, h);
  // Midpoint between the centres: nearest boundary point of the union is a
  // circle intersection at distance sqrt(0.4^2 - 0.25^2).
  const double expected = std::sqrt(0.16 - 0.0625) - 0.5 * h;
  EXPECT_NEAR(env.a_field(128, 144), -expected, 1e-12);
  expect_structural_invariants(env);
}

TEST(PoissonCloud, RandomRadiiAndErrors) {
  auto env = gen_poisson_cloud(0.3, 0.2, 8.0, 0.125, 9, 0.45);
  for (double r : env.params.radii) {
    EXPECT_GE(r, 0.2);
    EXPECT_LE(r, 0.45);
  }
  expect_structural_invariants(env);
  EXPECT_THROW(gen_poisson_cloud(0.0, 0.2, 8.0, 0.125, 1), ParameterError);
  EXPECT_THROW(gen_poisson_cloud(0.1, 2.5, 8.0, 0.125, 1), ParameterError);
  EXPECT_THROW(gen_poisson_cloud(1e6, 0.1, 8.0, 0.125, 1), ResourceError);
}

TEST(Checkerboard, InradiusAndCorners) {
  auto env1 = gen_checkerboard(1.0, 64, 0.125);
  EXPECT_EQ(env1.a_field(4, 4), 0.5);
  EXPECT_EQ(env1.a_field(12, 4), -0.5);
  auto half = gen_checkerboard(0.5, 64, 0.125);
  EXPECT_EQ(half.a_field(2, 2), 0.25);
  for (int r = 0; r < 64; r += 8)
    for (int c = 0; c < 64; c += 8) EXPECT_EQ(env1.a_field(r, c), 0.0);
  expect_structural_invariants(env1);
  expect_structural_invariants(half);
}

TEST(Checkerboard, PeriodTwoIsDilation) {
  auto one = gen_checkerboard(1.0, 64, 0.125);
  auto two = gen_checkerboard(2.0, 128, 0.125);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) {
      const double a1 = one.a_field(r, c);
      const double s = a1 > 0 ? 1.0 : (a1 < 0 ? -1.0 : 0.0);
      EXPECT_EQ(two.a_field(2 * r, 2 * c), s * std::min(2.0 * std::abs(a1), 0.5));
    }
}

TEST(Checkerboard, RejectsNonDividingPeriod) {
  EXPECT_THROW(gen_checkerboard(0.3, 64, 0.125), ParameterError);
  EXPECT_THROW(gen_checkerboard(3.0, 64, 0.125), ParameterError);
  EXPECT_THROW(gen_checkerboard(1.0, 72, 0.125), ParameterError);
}

TEST(IsolatedObstacles, BallsSitInsideCubes) {
  auto env = gen_isolated_obstacles(0.6, 0.3, 128, 0.125, 4);
  EXPECT_EQ(env.params.point_count, env.params.cube_count - env.params.open_cubes);
  expect_structural_invariants(env);
  auto lab = label_components(env);
  EXPECT_NE(spanning_component(lab, 1), 0);
  for (const auto& c : lab.components)
    if (c.sign < 0) EXPECT_FALSE(c.spanning());
}

TEST(Translate, ZeroAndFullBoxAreIdentity) {
  auto env = gen_site_percolation(0.6, 64, 0.125, 2);
  EXPECT_TRUE(translate_sample(env, {0, 0}).a_field == env.a_field);
  EXPECT_TRUE(translate_sample(env, {8, 8}).a_field == env.a_field);
  EXPECT_TRUE(translate_sample(env, {-8, 16}).a_field == env.a_field);
}

TEST(Translate, ShiftsAndPreservesMean) {
  auto env = gen_site_percolation(0.6, 64, 0.125, 2);
  auto moved = translate_sample(env, {1, 3});
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) ASSERT_EQ(moved.a_field(r, c), env.a_field((r + 24) % 64, (c + 8) % 64));
  double s0 = 0, s1 = 0;
  for (double v : env.a_field.values()) s0 += v;
  for (double v : moved.a_field.values()) s1 += v;
  EXPECT_NEAR(s0, s1, 1e-9);
  EXPECT_THROW(translate_sample(env, {0.5, 0}), ParameterError);
}

TEST(Crop, WindowCopiesValues) {
  auto env = gen_site_percolation(0.6, 64, 0.125, 2);
  auto w = crop_sample(env, 8, 16, 20, 30);
  EXPECT_EQ(w.rows(), 20);
  EXPECT_EQ(w.cols(), 30);
  EXPECT_FALSE(w.periodic);
  EXPECT_EQ(w.a_field(3, 4), env.a_field(11, 20));
  EXPECT_THROW(crop_sample(env, 60, 0, 10, 10), ParameterError);
}

TEST(FhlFormat, RoundTripAndBadMagic) {
  GridD g(3, 4, 0.25);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = 0.1 * static_cast<double>(i) - 0.3;
  g[5] = kInf;
  std::stringstream ss;
  write_fhl1(ss, g);
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.size(), 4u + 4u + 4u + 8u + 12u * 8u);
  EXPECT_EQ(bytes.substr(0, 4), "FHL1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 3u);
  auto back = read_fhl1(ss);
  EXPECT_TRUE(back == g);
  std::stringstream bad("XXXX");
  EXPECT_THROW(read_fhl1(bad), FormatError);
}
