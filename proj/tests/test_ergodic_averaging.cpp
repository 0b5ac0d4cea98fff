#include <gtest/gtest.h>

#include "fhl/ergodic_averaging.hpp"

using namespace fhl;

namespace {

GapStatistics synthetic_gaps(std::vector<Gap> gaps, double t_end, bool truncated = false) {
  GapStatistics gs;
  gs.direction = {1.0, 0.0};
  gs.gaps = std::move(gaps);
  gs.t_end = t_end;
  gs.truncated = truncated;
  return gs;
}

AveragedMetric percolation_estimate() {
  static const AveragedMetric avg = [] {
    AveragingOptions opt;
    opt.t_grid = {16.0, 32.0, 64.0};
    return estimate_mbar(20, [](std::size_t i) { return gen_site_percolation(0.7, 136 * 4, 0.25, 100 + i); }, opt);
  }();
  return avg;
}

}  // namespace

TEST(RayExtension, LinearInterpolationAcrossGap) {
  auto gs = synthetic_gaps({{3.0, 5.0}}, 10.0);
  auto b = bracket_on_ray(gs, 4.0);
  EXPECT_FALSE(b.inside);
  EXPECT_EQ(b.t_lo, 3.0);
  EXPECT_EQ(b.t_hi, 5.0);
  EXPECT_EQ(b.alpha, 0.5);
  EXPECT_EQ(interpolate_gap(7.0, 11.0, b.alpha), 9.0);
  auto at_exit = bracket_on_ray(gs, 3.0);
  EXPECT_TRUE(at_exit.inside);
  EXPECT_EQ(at_exit.t_lo, 3.0);
  EXPECT_EQ(interpolate_gap(7.0, 11.0, 0.0), 7.0);
  EXPECT_TRUE(bracket_on_ray(gs, 6.0).inside);
  EXPECT_TRUE(bracket_on_ray(gs, 11.0).truncated);
  auto open_end = synthetic_gaps({{3.0, 5.0}, {8.0, 10.0}}, 10.0, true);
  EXPECT_TRUE(bracket_on_ray(open_end, 9.0).truncated);
  EXPECT_FALSE(bracket_on_ray(open_end, 4.0).truncated);
}

TEST(RayExtension, RawValueInsideInterior) {
  auto env = gen_site_percolation(1.0, 64, 0.125, 0);
  auto lab = label_components(env);
  const int z = 32 * 64 + 32;
  auto f = solve_metric_dijkstra(env, lab, 1, z, 1.0);
  auto in = interior_mask(lab, env, 1, 0.05);
  auto gs = gaps_along_ray(in, 64, 64, 0.125, env.a_field.position(z), {1.0, 0.0}, kInf);
  EXPECT_TRUE(gs.gaps.empty());
  auto rv = ray_travel_time(f, in, gs, 2.0);
  ASSERT_TRUE(rv.usable());
  EXPECT_DOUBLE_EQ(rv.value, f.at(32 * 64 + 48));
  // Between nodes the value is the bilinear interpolant.
  auto mid = ray_travel_time(f, in, gs, 2.0625);
  EXPECT_DOUBLE_EQ(mid.value, 0.5 * (f.at(32 * 64 + 48) + f.at(32 * 64 + 49)));
}

TEST(RayExtension, BilinearFormAndShiftedOrigin) {
  auto gs = synthetic_gaps({{0.0, 1.0}, {3.0, 5.0}}, 20.0);
  auto origin = shifted_origin(gs);
  ASSERT_TRUE(origin.has_value());
  EXPECT_EQ(*origin, 1.0);
  auto m = [](double a, double b) { return 2.0 * std::abs(a - b); };
  // Both arguments inside: the plain metric.
  EXPECT_DOUBLE_EQ(bilinear_ray_extension(m, gs, 8.0, 1.0), 14.0);
  // t = 4 in the gap [3, 5], s = 1 inside: mean of m(3,1) and m(5,1).
  EXPECT_DOUBLE_EQ(bilinear_ray_extension(m, gs, 4.0, 1.0), 0.5 * (4.0 + 8.0));
  // Linear in each argument separately.
  const double both = bilinear_ray_extension(m, gs, 4.0, 0.5);
  EXPECT_DOUBLE_EQ(both, 0.25 * (m(3, 0) + m(3, 1) + m(5, 0) + m(5, 1)));
  EXPECT_EQ(*shifted_origin(synthetic_gaps({{2.0, 3.0}}, 20.0)), 0.0);
}

TEST(LineFitTest, ExactOnLinearData) {
  auto f = fit_line({0.5, 0.25, 0.125}, {3.0, 2.5, 2.25});
  EXPECT_NEAR(f.intercept, 2.0, 1e-14);
  EXPECT_NEAR(f.slope, 2.0, 1e-14);
  EXPECT_NEAR(f.intercept_se, 0.0, 1e-12);
  EXPECT_THROW(fit_line({1.0}, {1.0}), InsufficientDataError);
}

TEST(EstimateMbar, ObstacleFreeIsTwo) {
  AveragingOptions opt;
  opt.t_grid = {8.0, 16.0, 32.0};
  auto avg = estimate_mbar(1, [](std::size_t) { return gen_site_percolation(1.0, 72 * 4, 0.25, 0); }, opt);
  ASSERT_EQ(avg.size(), 64u);
  for (std::size_t k = 0; k < avg.size(); ++k) {
    EXPECT_NEAR(avg.mbar1[k], 2.0, 0.02) << "direction " << k;
    EXPECT_LE(std::abs(avg.mbar1[k] - avg.mbar1_half[k]), 2 * (avg.ci[k] + avg.ci_half[k]) + 1e-12);
  }
  EXPECT_NEAR(avg.delta, 0.05, 1e-15);
}

TEST(EstimateMbar, MuScalesExactly) {
  auto make = [](std::size_t i) { return gen_site_percolation(0.75, 40 * 4, 0.25, 7 + i); };
  AveragingOptions opt;
  opt.t_grid = {4.0, 8.0, 16.0};
  opt.directions = 16;
  auto one = estimate_mbar(3, make, opt);
  opt.mu = 3.0;
  auto three = estimate_mbar(3, make, opt);
  for (std::size_t k = 0; k < one.size(); ++k) EXPECT_NEAR(three.mbar_mu(k), 3.0 * one.mbar_mu(k), 1e-12 * three.mbar_mu(k));
}

TEST(EstimateMbar, PercolationDetoursAndPrecision) {
  const auto avg = percolation_estimate();
  EXPECT_EQ(avg.samples, 20u);
  EXPECT_GT(avg.mbar1[0], 2.0);
  EXPECT_TRUE(std::isfinite(avg.mbar1[0]));
  EXPECT_LT(avg.ci[0] / avg.mbar1[0], 0.05);
  auto checks = check_averaged_metric(avg);
  EXPECT_LE(checks.delta_stability, 0.0);
  EXPECT_LE(checks.convexity, 0.0);
  EXPECT_LE(checks.lipschitz, 0.0);
  EXPECT_GT(checks.lower_bound, 0.0);
}

TEST(EstimateMbar, InsufficientData) {
  AveragingOptions opt;
  opt.t_grid = {4.0, 8.0};
  auto make = [](std::size_t) { return gen_site_percolation(1.0, 64, 0.25, 0); };
  EXPECT_THROW(estimate_mbar(1, make, opt), InsufficientDataError);
  opt.t_grid = {4.0, 8.0, 64.0};  // box of side 16 cannot hold the largest radius
  EXPECT_THROW(estimate_mbar(1, make, opt), InsufficientDataError);
  EXPECT_THROW(estimate_mbar(0, make, AveragingOptions{}), InsufficientDataError);
}

TEST(EstimateMbar, SamplesWithoutSpanningAreExcluded) {
  AveragingOptions opt;
  opt.t_grid = {2.0, 4.0, 6.0};
  opt.directions = 8;
  auto avg = estimate_mbar(2, [](std::size_t i) {
    return i == 0 ? gen_checkerboard(1.0, 16 * 4, 0.25) : gen_site_percolation(1.0, 16 * 4, 0.25, 0);
  }, opt);
  EXPECT_EQ(avg.samples, 1u);
  ASSERT_EQ(avg.excluded.size(), 1u);
  EXPECT_EQ(avg.excluded[0], 0u);
}

TEST(BoundaryLiminf, NoGapRayHasZeroDefect) {
  auto env = gen_site_percolation(1.0, 64, 0.25, 0);
  auto lab = label_components(env);
  auto f = solve_metric_fmm(env, lab, 1, 32 * 64 + 32, 1.0);
  auto rep = boundary_liminf_check(f, lab, env, {1.0, 0.0}, 0.05, 2.0, 2.0, 0.0);
  EXPECT_EQ(rep.nodes, 0u);
  EXPECT_EQ(rep.defect, 0.0);
}

TEST(BoundaryLiminf, CheckerboardIsStructuralFailure) {
  auto env = gen_checkerboard(1.0, 32, 0.125);
  auto lab = label_components(env);
  const int z = 4 * 32 + 4;
  auto f = solve_metric_fmm(env, lab, lab.label_at(z), z, 1.0);
  EXPECT_THROW(boundary_liminf_check(f, lab, env, {1.0, 0.0}, 0.05, 2.0, 1.0, 0.0), StructuralError);
}

TEST(BoundaryLiminf, PercolationRaysWithinTwoCi) {
  const auto avg = percolation_estimate();
  int ok = 0, total = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    auto env = gen_site_percolation(0.7, 136 * 4, 0.25, 100 + i);
    auto lab = label_components(env);
    const int sid = spanning_component(lab, 1);
    ASSERT_NE(sid, 0);
    const Vec2 centre{0.5 * (env.cols() - 1) * env.cell_h, 0.5 * (env.rows() - 1) * env.cell_h};
    const int z = anchor_node(lab, env, sid, avg.delta, centre);
    auto f = solve_metric_fmm(env, lab, sid, z, 1.0);
    for (std::size_t k = 0; k < avg.size(); k += 4) {
      auto rep = boundary_liminf_check(f, lab, env, avg.directions[k], avg.delta, avg.mbar1[k], 16.0, 0.0, 64.0);
      ++total;
      ok += rep.defect <= 2.0 * avg.ci[k];
    }
  }
  EXPECT_GE(ok, 0.9 * total);
}
