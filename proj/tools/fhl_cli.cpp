#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "fhl/fhl.hpp"

namespace fs = std::filesystem;
using namespace fhl;

namespace {

struct Globals {
  std::string config;
  std::string out = "out";
  long seed = -1;
  int threads = 0;
};

struct MediumFlags {
  std::string type;
  double p = -1, radius = -1, radius_max = -1, intensity = -1, period = -1, cell_h = -1;
  int box = 0;
  std::string env_file;
};

void add_medium_flags(CLI::App* sub, MediumFlags& m, bool allow_file) {
  sub->add_option("--type", m.type, "site_percolation | poisson_cloud | checkerboard | isolated_obstacles");
  sub->add_option("--p", m.p, "open probability");
  sub->add_option("--radius", m.radius, "ball radius");
  sub->add_option("--radius-max", m.radius_max, "upper radius for U[radius, radius_max]");
  sub->add_option("--intensity", m.intensity, "Poisson intensity");
  sub->add_option("--period", m.period, "checkerboard period");
  sub->add_option("--cell-h", m.cell_h, "node spacing per unit cube");
  sub->add_option("--box", m.box, "box side in unit cubes");
  if (allow_file) sub->add_option("--env", m.env_file, "read the velocity field from an FHL1 file instead");
}

ExperimentSpec load_spec(const Globals& g) {
  ExperimentSpec spec = g.config.empty() ? ExperimentSpec{} : experiment_from_config(Config::load(g.config, experiment_schema()));
  if (g.seed >= 0) spec.seed = static_cast<std::uint64_t>(g.seed);
  if (g.threads > 0) spec.threads = spec.averaging.threads = spec.lab.threads = g.threads;
  return spec;
}

MediumSpec apply(MediumSpec m, const MediumFlags& f) {
  if (!f.type.empty()) m.kind = parse_medium_kind(f.type);
  if (f.p >= 0) m.p = f.p;
  if (f.radius >= 0) m.radius = f.radius;
  if (f.radius_max >= 0) m.radius_max = f.radius_max;
  if (f.intensity >= 0) m.intensity = f.intensity;
  if (f.period >= 0) m.period = f.period;
  if (f.cell_h > 0) m.cell_h = f.cell_h;
  return m;
}

EnvironmentSample make_env(const ExperimentSpec& spec, const MediumFlags& f, int default_box) {
  if (!f.env_file.empty()) return from_field(load_fhl1(f.env_file), true);
  return generate_medium(apply(spec.medium, f), f.box > 0 ? f.box : default_box, spec.seed);
}

Vec2 parse_vec(const std::string& s) {
  Vec2 v;
  char comma = 0;
  std::istringstream is(s);
  if (!(is >> v.x >> comma >> v.y) || comma != ',') throw ParameterError("expected x,y but got '" + s + "'");
  return v;
}

fs::path out_dir(const Globals& g) {
  fs::create_directories(g.out);
  return g.out;
}

void print_labels(const ComponentLabeling& lab) {
  const auto t = theta_of(lab);
  std::cout << "components " << lab.count() << "  spanning+ " << spanning_component(lab, 1) << "  spanning- "
            << spanning_component(lab, -1) << "\n";
  std::cout << "theta zero " << t.zero << "  bounded " << t.bounded << "  positive " << t.positive << "  negative "
            << t.negative << "\n";
}

// Reads the angle and mbar1 columns of an averaged-metric CSV.
std::pair<std::vector<double>, std::vector<double>> read_profile(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  std::string line;
  std::getline(is, line);
  std::vector<std::string> head;
  {
    std::istringstream hs(line);
    for (std::string c; std::getline(hs, c, ',');) head.push_back(c);
  }
  const auto col = [&](const std::string& name) {
    for (std::size_t i = 0; i < head.size(); ++i)
      if (head[i] == name) return i;
    throw FormatError(path + ": missing column " + name);
  };
  const auto ia = col("angle");
  const auto im = col("mbar1");
  std::vector<double> angles, mbar;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    if (cells.size() < head.size()) throw FormatError(path + ": short row");
    angles.push_back(std::stod(cells[ia]));
    mbar.push_back(std::stod(cells[im]));
  }
  return {angles, mbar};
}

void print_csv(const fs::path& p) {
  std::ifstream is(p);
  if (!is) return;
  std::cout << "-- " << p.filename().string() << "\n";
  for (std::string line; std::getline(is, line);) {
    std::string shown;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) {
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      std::ostringstream cell;
      if (end && *end == '\0' && !c.empty())
        cell << std::setprecision(6) << v;
      else
        cell << c;
      shown += (shown.empty() ? "" : "  ") + cell.str();
    }
    std::cout << shown << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Homogenization of level-set fronts in random media with sign-changing speed"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "experiment INI file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "base seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--threads", g.threads, "worker threads");

  MediumFlags mf;

  auto* gen = app.add_subcommand("gen-env", "sample a medium and write a.fhl, mask.fhl, medium.csv");
  add_medium_flags(gen, mf, false);

  auto* lab_cmd = app.add_subcommand("label", "label sign components, write labels.fhl, components.csv");
  add_medium_flags(lab_cmd, mf, true);

  std::string method = "fmm", source;
  double mu = 1.0;
  int sign = 1;
  auto* metric = app.add_subcommand("metric", "travel times from one source inside a spanning component");
  add_medium_flags(metric, mf, true);
  metric->add_option("--method", method, "fmm | dijkstra8");
  metric->add_option("--mu", mu, "level mu > 0");
  metric->add_option("--sign", sign, "+1 or -1 component");
  metric->add_option("--source", source, "source near x,y (box coordinates); default box centre");

  int samples = 0, directions = 0;
  std::vector<double> t_grid;
  auto* average = app.add_subcommand("average", "ensemble-averaged metric on a direction fan");
  add_medium_flags(average, mf, false);
  average->add_option("--samples", samples, "ensemble size");
  average->add_option("--directions", directions, "fan size");
  average->add_option("--sign", sign, "+1 or -1 component");
  average->add_option("--t-grid", t_grid, "ray lengths for the 1/t extrapolation")->delimiter(',');

  std::string mbar_file;
  auto* eff = app.add_subcommand("effective-h", "effective Hamiltonian and Wulff polygon from an mbar CSV");
  eff->add_option("--mbar", mbar_file, "CSV with angle and mbar1 columns")->required()->check(CLI::ExistingFile);
  eff->add_option("--sign", sign, "+1 convex, -1 concave");

  double eps = 0.125, T = -1;
  int snapshots = 0;
  std::string initial, boundary;
  auto* evolve = app.add_subcommand("evolve", "oscillatory level-set evolution on a centred window");
  add_medium_flags(evolve, mf, true);
  evolve->add_option("--eps", eps, "scale epsilon in (0, 1]");
  evolve->add_option("--T", T, "final time");
  evolve->add_option("--snapshots", snapshots, "stored time levels");
  evolve->add_option("--initial", initial, "cone | bump");
  evolve->add_option("--boundary", boundary, "periodic | extrapolate");

  std::string pvec = "1,0";
  auto* stat = app.add_subcommand("stationary", "discounted cell problem w + a|p + Dw| = 0");
  add_medium_flags(stat, mf, true);
  stat->add_option("--slope", pvec, "slope p as x,y");
  stat->add_option("--eps", eps, "scale epsilon in (0, 1]");

  auto* converge = app.add_subcommand("converge", "full pipeline from --config into --out");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "print the CSV summaries of a converge run");
  report->add_option("--dir", report_dir, "run directory (defaults to --out)");

  CLI11_PARSE(app, argc, argv);

  try {
    auto spec = load_spec(g);
    if (gen->parsed()) {
      const auto env = make_env(spec, mf, 32);
      const auto dir = out_dir(g);
      save_fhl1((dir / "a.fhl").string(), env.a_field);
      GridD mask(env.rows(), env.cols(), env.cell_h);
      for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = env.obstacle_mask[i];
      save_fhl1((dir / "mask.fhl").string(), mask);
      write_metadata_csv(dir / "medium.csv", env);
      std::cout << to_string(env.params.kind) << " " << env.rows() << "x" << env.cols() << " h=" << env.cell_h
                << " seed=" << env.seed << " -> " << dir.string() << "\n";
    } else if (lab_cmd->parsed()) {
      const auto env = make_env(spec, mf, 32);
      const auto lab = label_components(env);
      const auto dir = out_dir(g);
      GridD ids(env.rows(), env.cols(), env.cell_h);
      for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = lab.labels[i];
      save_fhl1((dir / "labels.fhl").string(), ids);
      write_component_table(dir / "components.csv", lab);
      print_labels(lab);
    } else if (metric->parsed()) {
      const auto env = make_env(spec, mf, 32);
      const auto lab = label_components(env);
      const int id = spanning_component(lab, sign);
      if (id == 0) throw StructuralError("no spanning component of that sign");
      const Vec2 near = source.empty() ? Vec2{0.5 * env.box_width(), 0.5 * env.box_height()} : parse_vec(source);
      const int z = anchor_node(lab, env, id, 0.1 * env.max_abs_a(), near);
      const auto field = solve_metric(parse_metric_method(method), env, lab, id, z, mu);
      const auto dir = out_dir(g);
      save_fhl1((dir / "travel.fhl").string(), field.values);
      double mx = 0.0;
      std::size_t reached = 0;
      for (double v : field.values.values())
        if (std::isfinite(v)) mx = std::max(mx, v), ++reached;
      std::cout << "component " << id << " source " << z << " reached " << reached << " max " << mx << "\n";
    } else if (average->parsed()) {
      auto opt = spec.averaging;
      opt.sign = sign;
      if (directions > 0) opt.directions = directions;
      if (!t_grid.empty()) opt.t_grid = t_grid;
      const auto n = samples > 0 ? static_cast<std::size_t>(samples) : spec.avg_samples;
      auto medium = apply(spec.medium, mf);
      if (mf.cell_h <= 0 && spec.avg_cell_h > 0) medium.cell_h = spec.avg_cell_h;
      const int box = mf.box > 0 ? mf.box : spec.avg_box;
      const auto base = g.seed >= 0 ? spec.seed : spec.avg_seed;
      const auto avg = estimate_mbar(n, [&](std::size_t i) { return generate_medium(medium, box, base + i); }, opt);
      const auto path = out_dir(g) / (sign > 0 ? "mbar_positive.csv" : "mbar_negative.csv");
      write_averaged_csv(path, avg);
      std::cout << "samples " << avg.samples << " excluded " << avg.excluded.size() << " delta " << avg.delta << " -> "
                << path.string() << "\n";
    } else if (eff->parsed()) {
      const auto [angles, mbar] = read_profile(mbar_file);
      std::vector<Vec2> fan;
      for (double a : angles) fan.push_back({std::cos(a), std::sin(a)});
      const auto h = effective_from_profile(fan, mbar, sign);
      const auto dir = out_dir(g);
      write_effective_csv(dir / "effective.csv", h, angles);
      write_polygon_csv(dir / "wulff.csv", h.wulff);
      write_hbar_grid_csv(dir / "hbar_grid.csv", h, 41, 2.0);
      std::cout << "H(e1) " << h({1, 0}) << "  H(e2) " << h({0, 1}) << "  Wulff vertices " << h.wulff.vertices.size()
                << "\n";
    } else if (evolve->parsed()) {
      auto lab = spec.lab;
      if (T > 0) lab.T = T;
      if (snapshots > 0) lab.time_samples = snapshots;
      if (!boundary.empty()) lab.boundary = parse_boundary(boundary);
      auto u0 = spec.u0;
      if (initial == "bump") u0 = InitialData::bump({}, 0.5);
      else if (!initial.empty() && initial != "cone") throw ParameterError("--initial must be cone or bump");
      const auto medium = apply(spec.medium, mf);
      const double unit = medium.kind == MediumKind::checkerboard ? medium.period : 1.0;
      const int box = mf.box > 0 ? mf.box : required_box_cubes(window_half_width(lab), eps, medium.cell_h, unit);
      const auto env = make_env(spec, mf, box);
      const auto win = centred_window(env, window_half_width(lab), eps);
      const auto sub = crop_sample(env, win.r0, win.c0, win.size, win.size);
      EvolutionConfig cfg;
      cfg.T = lab.T;
      cfg.snapshots = lab.time_samples;
      cfg.cfl = lab.cfl;
      cfg.boundary = lab.boundary;
      const auto tr = solve_oscillatory(sub, u0, eps, cfg);
      const auto dir = out_dir(g);
      for (std::size_t j = 0; j < tr.snapshots.size(); ++j)
        save_fhl1((dir / ("u_t" + std::to_string(j) + ".fhl")).string(), tr.snapshots[j].values);
      GridD shifted = tr.final().values;
      for (auto& v : shifted.storage()) v -= 0.25;
      write_contour_csv(dir / "contour.csv", level_contour(shifted, tr.final().frame));
      std::cout << "window " << win.size << "^2  steps " << tr.steps << "  dt " << tr.dt << "\n";
      for (const auto& w : tr.warnings) std::cout << "warning: " << w << "\n";
    } else if (stat->parsed()) {
      const auto env = make_env(spec, mf, spec.stat_box);
      const Vec2 p = parse_vec(pvec);
      EvolutionConfig cfg;
      cfg.cfl = spec.lab.cfl;
      const auto res = solve_stationary(env, p, eps, cfg, spec.stat_opt);
      save_fhl1((out_dir(g) / "w.fhl").string(), res.w.values);
      double sup = 0.0;
      for (double v : res.w.values.values()) sup = std::max(sup, std::abs(v));
      std::cout << "iterations " << res.iterations << "  residual " << res.residual << "  |w|inf " << sup
                << "  bound " << env.max_abs_a() * norm(p) << "\n";
    } else if (converge->parsed()) {
      if (g.config.empty()) throw ConfigurationError("converge needs --config");
      const auto rep = run_experiment(spec, out_dir(g));
      std::cout << rep.name << " finished in " << rep.seconds << " s\n";
      print_csv(fs::path(g.out) / "summary.csv");
      for (const auto& w : rep.warnings) std::cout << "warning: " << w << "\n";
    } else if (report->parsed()) {
      const fs::path dir = report_dir.empty() ? fs::path(g.out) : fs::path(report_dir);
      if (!fs::exists(dir / "summary.csv")) throw FormatError("no summary.csv in " + dir.string());
      for (const char* f : {"summary.csv", "local_uniform.csv", "weak.csv", "stationary.csv"}) print_csv(dir / f);
    }
  } catch (const StageError& e) {
    std::cerr << "failed in stage " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
