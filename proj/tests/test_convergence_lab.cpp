#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "fhl/convergence_lab.hpp"

using namespace fhl;
namespace fs = std::filesystem;

namespace {

EffectiveHamiltonian isotropic(double radius, int fan_size = 256) {
  std::vector<Vec2> dirs;
  for (double t : fan_angles(fan_size)) dirs.push_back(unit_from_angle(t));
  return effective_from_profile(dirs, std::vector<double>(dirs.size(), 1.0 / radius), 1);
}

EnvironmentSample constant_medium(const LabOptions& lab, double eps_min, double h, double a) {
  const int box = required_box_cubes(window_half_width(lab), eps_min, h);
  const int n = static_cast<int>(std::lround(box / h));
  return from_field(GridD(n, n, h, a), true);
}

Config parse(const std::string& text) {
  std::istringstream is(text);
  return Config::parse(is, experiment_schema(), "test.ini");
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

ExperimentSpec tiny_checkerboard() {
  ExperimentSpec s;
  s.name = "tiny";
  s.seeds = 2;
  s.weak = true;
  s.local_uniform = true;
  s.medium.kind = MediumKind::checkerboard;
  s.medium.period = 1.0;
  s.medium.cell_h = 0.25;
  s.epsilons = {0.5, 0.25};
  s.lab.time_samples = 4;
  return s;
}

}  // namespace

TEST(Config, ParsesSectionsListsAndVectors) {
  const auto c = parse(
      "# leading comment\n"
      "[experiment]\nname = demo  # trailing comment\nseeds = 3\n"
      "; full-line comment\n"
      "[evolution]\nepsilons = 0.25, 0.125\n"
      "[stationary]\np = 1, 0; 0.6, 0.8\n");
  EXPECT_EQ(c.get("experiment", "name", ""), "demo");
  EXPECT_EQ(c.get_int("experiment", "seeds", 0), 3);
  EXPECT_EQ(c.get_list("evolution", "epsilons", {}), (std::vector<double>{0.25, 0.125}));
  const auto ps = c.get_vectors("stationary", "p", {});
  ASSERT_EQ(ps.size(), 2u);
  EXPECT_DOUBLE_EQ(ps[1].y, 0.8);
  EXPECT_EQ(c.get_double("medium", "p", 0.42), 0.42);
}

TEST(Config, RejectsUnknownAndMisplacedKeysWithLineNumbers) {
  try {
    parse("[medium]\ntype = checkerboard\nporosity = 0.3\n");
    FAIL() << "unknown key accepted";
  } catch (const ConfigurationError& e) {
    EXPECT_NE(std::string(e.what()).find("test.ini:3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("porosity"), std::string::npos);
  }
  EXPECT_THROW(parse("[nonsense]\n"), ConfigurationError);
  EXPECT_THROW(parse("seeds = 3\n"), ConfigurationError);
  EXPECT_THROW(parse("[experiment]\nseeds = 3\nseeds = 4\n"), ConfigurationError);
  EXPECT_THROW(parse("[experiment]\nseeds\n"), ConfigurationError);
  EXPECT_THROW(parse("[experiment\n"), ConfigurationError);
}

TEST(Config, ExperimentValuesAreValidated) {
  EXPECT_THROW(experiment_from_config(parse("[experiment]\nseeds = 0\n")), ConfigurationError);
  EXPECT_THROW(experiment_from_config(parse("[evolution]\ninitial = square\n")), ConfigurationError);
  EXPECT_THROW(experiment_from_config(parse("[experiment]\ntests = nothing\n")), ConfigurationError);
  EXPECT_THROW(experiment_from_config(parse("[medium]\ntype = foam\n")), Error);
  const auto e = experiment_from_config(parse("[experiment]\ntests = weak\n[evolution]\nboundary = periodic\n"));
  EXPECT_TRUE(e.weak);
  EXPECT_FALSE(e.local_uniform);
  EXPECT_EQ(e.lab.boundary, Boundary::periodic);
}

TEST(Config, BundledExperimentsLoad) {
  for (const char* name : {"checkerboard_trapping.ini", "percolation_p07.ini", "obstacles.ini"}) {
    const auto path = fs::path(FHL_SOURCE_DIR) / "configs" / name;
    EXPECT_NO_THROW(experiment_from_config(Config::load(path.string(), experiment_schema()))) << name;
  }
}

TEST(Lab, EpsilonSequencesMustDecreaseInsideUnitInterval) {
  EXPECT_NO_THROW(check_epsilons({0.25, 0.125, 0.0625}));
  EXPECT_THROW(check_epsilons({}), ParameterError);
  EXPECT_THROW(check_epsilons({0.125, 0.25}), ParameterError);
  EXPECT_THROW(check_epsilons({0.25, 0.25}), ParameterError);
  EXPECT_THROW(check_epsilons({1.5, 0.5}), ParameterError);
  EXPECT_THROW(check_epsilons({0.5, 0.0}), ParameterError);
  EXPECT_TRUE(strictly_decreasing({3, 2, 1}));
  EXPECT_FALSE(strictly_decreasing({3, 3, 1}));
}

TEST(Lab, WindowMustFitTheSample) {
  LabOptions lab;
  const auto env = constant_medium(lab, 0.25, 0.125, 0.5);
  EXPECT_NO_THROW(centred_window(env, window_half_width(lab), 0.25));
  EXPECT_THROW(centred_window(env, window_half_width(lab), 0.0625), ParameterError);
}

TEST(Lab, TestBankHasUnitMassFunctions) {
  const auto bank = test_function_bank();
  ASSERT_EQ(bank.size(), 6u);
  for (const auto& phi : bank) {
    const double d = phi.width / 20;
    double mass = 0;
    for (double x = -8 * phi.width; x <= 8 * phi.width; x += d)
      for (double y = -8 * phi.width; y <= 8 * phi.width; y += d) mass += phi(phi.centre + Vec2{x, y}) * d * d;
    EXPECT_NEAR(mass, 1.0, 1e-3);
  }
}

TEST(Lab, ConstantSpeedLocalErrorWithinThreeCells) {
  LabOptions lab;
  lab.time_samples = 4;
  const std::vector<double> eps{0.25, 0.125};
  const double h = 0.125;
  const auto env = constant_medium(lab, eps.back(), h, 0.5);
  const auto labels = label_components(env);
  ASSERT_EQ(labels.count(), 1u);
  ComponentHamiltonians hs;
  hs.positive = isotropic(0.5);
  const auto rows = local_uniform_test(env, labels, hs, InitialData::cone(), eps, lab);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_LE(r.sup_error, 3 * r.epsilon * h) << r.epsilon;
    EXPECT_TRUE(r.liminf_ok);
  }
}

TEST(Lab, ConstantSpeedPairingWithinThreeCells) {
  LabOptions lab;
  lab.time_samples = 4;
  const std::vector<double> eps{0.25, 0.125};
  const double h = 0.125;
  const auto env = constant_medium(lab, eps.back(), h, 0.5);
  const auto theta = theta_of(label_components(env));
  EXPECT_DOUBLE_EQ(theta.positive, 1.0);
  ComponentHamiltonians hs;
  hs.positive = isotropic(0.5);
  const auto res = weak_star_test({env}, theta, hs, InitialData::cone(), eps, test_function_bank(), lab);
  for (const auto& r : res.rows)
    for (double v : r.mean_abs) EXPECT_LE(v, 3 * r.epsilon * h * lab.T) << r.epsilon;
}

TEST(Lab, WeakTestRejectsInconsistentInputs) {
  LabOptions lab;
  const auto env = constant_medium(lab, 0.25, 0.125, 0.5);
  ThetaSummary bad;
  bad.positive = 0.7;
  ComponentHamiltonians hs;
  hs.positive = isotropic(0.5);
  EXPECT_THROW(weak_star_test({env}, bad, hs, InitialData::cone(), {0.25}, test_function_bank(), lab), NumericalError);
  ThetaSummary one;
  one.positive = 1.0;
  EXPECT_THROW(weak_star_test({env}, one, {}, InitialData::cone(), {0.25}, test_function_bank(), lab),
               StructuralError);
  EXPECT_THROW(weak_star_test({}, one, hs, InitialData::cone(), {0.25}, test_function_bank(), lab),
               InsufficientDataError);
}

TEST(Lab, VolumeFractionsSumToOne) {
  for (auto kind : {MediumKind::site_percolation, MediumKind::isolated_obstacles, MediumKind::checkerboard}) {
    MediumSpec m;
    m.kind = kind;
    m.p = 0.6;
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      const auto t = theta_of(label_components(generate_medium(m, 12, seed)));
      EXPECT_NEAR(t.sum(), 1.0, 1e-12);
      EXPECT_GE(t.zero, 0.0);
      EXPECT_GE(t.bounded, 0.0);
      EXPECT_LE(t.dropped, t.bounded + 1e-15);
    }
  }
}

TEST(Lab, CheckerboardTrapsTheFront) {
  MediumSpec m;
  m.kind = MediumKind::checkerboard;
  m.period = 1.0;
  m.cell_h = 0.125;
  LabOptions lab;
  lab.time_samples = 5;
  const std::vector<double> eps{0.25, 0.125, 0.0625};
  const auto env = generate_medium(m, required_box_cubes(window_half_width(lab), eps.back(), m.cell_h), 1);
  const auto labels = label_components(env);
  EXPECT_EQ(spanning_component(labels, 1), 0);
  EXPECT_EQ(spanning_component(labels, -1), 0);
  const auto rows = local_uniform_test(env, labels, {}, InitialData::cone(), eps, lab);
  std::vector<double> errs;
  for (const auto& r : rows) errs.push_back(r.sup_error);
  EXPECT_TRUE(strictly_decreasing(errs)) << errs[0] << " " << errs[1] << " " << errs[2];
}

TEST(Lab, StationaryBoundHoldsOnPercolation) {
  MediumSpec m;
  m.kind = MediumKind::site_percolation;
  m.p = 0.7;
  m.cell_h = 0.25;
  const auto env = generate_medium(m, 8, 3);
  const auto labels = label_components(env);
  const auto rows = stationary_test(env, labels, isotropic(0.3), {{1, 0}, {0.6, 0.8}}, {0.5, 0.25}, 0.5, 0.0);
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& r : rows) {
    EXPECT_TRUE(r.bound_ok) << r.sup_norm << " > " << r.bound;
    EXPECT_GT(r.nodes, 0u);
  }
  EXPECT_THROW(stationary_test(env, labels, isotropic(0.3), {{1, 0}}, {0.5}, 5.0, 0.0), ParameterError);
}

TEST(Pipeline, ReportsTheFailingStage) {
  auto s = tiny_checkerboard();
  s.epsilons = {0.25, 0.5};
  const auto dir = fs::temp_directory_path() / "fhl_stage_test";
  try {
    run_experiment(s, dir);
    FAIL() << "bad epsilons accepted";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage, "generate");
  }
  fs::remove_all(dir);
}

TEST(Pipeline, RerunsAreByteIdenticalAcrossThreadCounts) {
  const auto base = fs::temp_directory_path() / "fhl_determinism";
  fs::remove_all(base);
  auto s = tiny_checkerboard();
  s.threads = s.lab.threads = s.averaging.threads = 1;
  run_experiment(s, base / "a");
  s.threads = s.lab.threads = s.averaging.threads = 3;
  run_experiment(s, base / "b");
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(base / "a")) {
    const auto other = base / "b" / entry.path().filename();
    ASSERT_TRUE(fs::exists(other)) << other;
    EXPECT_EQ(slurp(entry.path()), slurp(other)) << entry.path().filename();
    ++files;
  }
  EXPECT_GE(files, 6u);
  fs::remove_all(base);
}
