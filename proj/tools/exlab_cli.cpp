// exlab: batch front-end for the path samplers, density estimators, SPDE
// integrator and check suites.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "exlab/checks.hpp"
#include "exlab/conditioning.hpp"
#include "exlab/io.hpp"
#include "exlab/operators.hpp"
#include "exlab/parallel.hpp"
#include "exlab/path_core.hpp"
#include "exlab/spde.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace exlab;

namespace {

enum Exit { kPass = 0, kCheckFailed = 1, kUsage = 2, kNumerical = 3 };

// Thrown after --help has been printed.
struct HelpShown {};

void parse(CLI::App& app, int argc, char** argv) {
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {  // --help
    app.exit(e);
    throw HelpShown{};
  }
}

struct Common {
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out;
  bool plot = false;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App& app, Common& c) {
  app.set_config("--config", "", "flat key = value file; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  c.seed_opt = app.add_option("--seed", c.seed, "RNG seed (default: $EXLAB_SEED, else 1)");
  app.add_option("--threads", c.threads, "worker threads; results do not depend on it")->check(CLI::PositiveNumber);
  app.add_option("--out", c.out, "output path");
  app.add_flag("--plot", c.plot, "also write an SVG plot");
}

void resolve_seed(Common& c) {
  if (c.seed_opt->count() > 0) return;
  if (const char* env = std::getenv("EXLAB_SEED")) {
    try {
      std::size_t pos = 0;
      c.seed = std::stoull(env, &pos);
      if (pos != std::string(env).size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw domain_error(std::string("EXLAB_SEED is not an unsigned integer: ") + env);
    }
  }
}

fs::path sidecar(const fs::path& csv) {
  fs::path p = csv;
  return p.replace_extension(".json");
}

fs::path svg_path(const fs::path& csv) {
  fs::path p = csv;
  return p.replace_extension(".svg");
}

std::vector<std::string> param_comments(const json& params) {
  std::vector<std::string> c;
  for (auto it = params.begin(); it != params.end(); ++it) c.push_back(it.key() + " = " + it.value().dump());
  return c;
}

void print_checks(const std::string& suite, const std::vector<CheckLine>& lines) {
  for (const auto& l : lines)
    std::cout << (l.pass ? "PASS " : "FAIL ") << suite << ": " << l.name << " = " << io::fmt(l.value) << " (target "
              << io::fmt(l.target) << ", tol " << io::fmt(l.tolerance) << ")\n";
}

json checks_json(const std::vector<CheckLine>& lines) {
  json a = json::array();
  for (const auto& l : lines)
    a.push_back({{"name", l.name}, {"value", l.value}, {"target", l.target}, {"tolerance", l.tolerance}, {"pass", l.pass}});
  return a;
}

// ---------------------------------------------------------------------------

int cmd_sample(int argc, char** argv) {
  CLI::App app{"Sample paths: one CSV row per sample, one column per grid point", "sample"};
  Common com;
  add_common(app, com);
  std::string process;
  long n = 10;
  int points = 1025;
  double c = 0.6;
  app.add_option("process", process, "bm | bridge | meander | excursion | Vc | Uc | mu_c")
      ->required()
      ->check(CLI::IsMember({"bm", "bridge", "meander", "excursion", "Vc", "Uc", "mu_c"}));
  app.add_option("--n", n, "number of samples")->check(CLI::PositiveNumber);
  app.add_option("--points", points, "grid points on [0,1]")->check(CLI::Range(5, 1 << 20));
  app.add_option("--c", c, "conditioning average (Vc, Uc, mu_c)")->check(CLI::NonNegativeNumber);
  parse(app, argc, argv);
  resolve_seed(com);
  default_threads() = com.threads;

  const TimeGrid g = TimeGrid::unit(points);
  const RandomSource rs(com.seed, 0);
  std::vector<SamplePath> paths;
  std::unique_ptr<GaussianMeasureSpec> gauss;
  if (process == "mu_c") gauss = std::make_unique<GaussianMeasureSpec>(gaussian_mu_c(g, c));
  for (long i = 0; i < n; ++i) {
    RandomSource r = rs.split(static_cast<std::uint64_t>(i));
    if (process == "bm") {
      paths.push_back(sample_brownian_motion(g, r));
    } else if (process == "bridge") {
      paths.push_back(sample_brownian_bridge(g, 0.0, 0.0, r));
    } else if (process == "meander") {
      paths.push_back(sample_meander(g, r));
    } else if (process == "excursion") {
      paths.push_back(sample_excursion(g, r));
    } else if (process == "Vc") {
      const SamplePath m = sample_meander(g, r), mh = sample_meander(g, r);
      paths.push_back(build_Vc(m, mh, c, r));
    } else if (process == "Uc") {
      const int ih = detail::half_index(g);
      const SamplePath m = sample_meander(g, r);
      const SamplePath B = sample_brownian_motion(TimeGrid(0.0, 0.5, ih + 1), r);
      paths.push_back(build_Uc(m, B, c));
    } else {
      paths.push_back(sample_gaussian(*gauss, r));
    }
  }

  json params = {{"command", "sample"}, {"process", process}, {"n", n}, {"points", points}, {"seed", com.seed}};
  if (process == "Vc" || process == "Uc" || process == "mu_c") params["c"] = c;
  const fs::path out = com.out.empty() ? fs::path("sample_" + process + ".csv") : fs::path(com.out);
  io::write_text(out, io::to_csv(io::paths_table(paths), param_comments(params)));
  json meta = params;
  meta["grid"] = io::grid_json(g);
  io::write_json(sidecar(out), meta);
  if (com.plot) {
    std::vector<io::Series> s;
    for (std::size_t k = 0; k < std::min<std::size_t>(paths.size(), 6); ++k)
      s.push_back({"sample " + std::to_string(k), g.points(), paths[k].values});
    io::write_text(svg_path(out), io::svg_plot(s, "sample " + process));
  }
  std::cout << "wrote " << out.string() << " (" << n << " rows)\n";
  return kPass;
}

int cmd_density(int argc, char** argv) {
  CLI::App app{"Density of the average of the excursion or meander, as a CSV of (c, p_hat, std_error)", "density"};
  Common com;
  add_common(app, com);
  std::string target, monitoring = "bridge";
  double c_min = 0, c_max = 3, c_step = 0.05;
  long n = 100000;
  int points = 1025;
  app.add_option("target", target, "excursion | meander")->required()->check(CLI::IsMember({"excursion", "meander"}));
  app.add_option("--c-min", c_min)->check(CLI::NonNegativeNumber);
  app.add_option("--c-max", c_max)->check(CLI::NonNegativeNumber);
  app.add_option("--c-step", c_step)->check(CLI::PositiveNumber);
  app.add_option("--n", n, "samples per c value")->check(CLI::PositiveNumber);
  app.add_option("--points", points, "grid points on [0,1]")->check(CLI::Range(7, 1 << 20));
  app.add_option("--monitoring", monitoring, "grid | bridge")->check(CLI::IsMember({"grid", "bridge"}));
  parse(app, argc, argv);
  resolve_seed(com);
  default_threads() = com.threads;
  if (!(c_max >= c_min)) throw domain_error("density: need c-max >= c-min");

  std::vector<double> cs;
  const long k_max = std::lround(std::floor((c_max - c_min) / c_step + 1e-9));
  for (long k = 0; k <= k_max; ++k) cs.push_back(c_min + k * c_step);
  EstimatorOptions opt;
  opt.n_points = points;
  opt.monitoring = monitoring == "grid" ? Monitoring::grid : Monitoring::bridge;
  const RandomSource rs(com.seed, 0);
  const auto est = target == "excursion" ? density_curve_excursion(cs, n, rs, opt) : density_curve_meander(cs, n, rs, opt);

  io::Table t{{"c", "p_hat", "std_error"}, {}};
  double mass = 0;
  for (const auto& e : est) {
    t.rows.push_back({e.c, e.value, e.std_error});
    mass += e.value * c_step;
  }
  json params = {{"command", "density"}, {"target", target}, {"c_min", c_min},   {"c_max", c_max},
                 {"c_step", c_step},     {"n", n},           {"points", points}, {"monitoring", monitoring},
                 {"seed", com.seed}};
  const fs::path out = com.out.empty() ? fs::path("density_" + target + ".csv") : fs::path(com.out);
  io::write_text(out, io::to_csv(t, param_comments(params)));
  json meta = params;
  meta["riemann_mass"] = mass;
  io::write_json(sidecar(out), meta);
  if (com.plot) {
    io::Series s{"p_hat", {}, {}};
    for (const auto& e : est) s.x.push_back(e.c), s.y.push_back(e.value);
    io::write_text(svg_path(out), io::svg_plot({s}, "density of the average, " + target));
  }
  std::cout << "wrote " << out.string() << "; sum p_hat * dc = " << io::fmt(mass) << "\n";
  return kPass;
}

void add_spde_options(CLI::App& app, SpdeConfig& cfg, std::string& mode, int& points) {
  app.add_option("--mode", mode, "linear | penalized")->check(CLI::IsMember({"linear", "penalized"}));
  app.add_option("--eps", cfg.epsilon, "penalty strength")->check(CLI::PositiveNumber);
  app.add_option("--alpha", cfg.alpha, "penalty shift")->check(CLI::NonNegativeNumber);
  app.add_option("--c", cfg.c, "conserved average")->check(CLI::NonNegativeNumber);
  app.add_option("--dt", cfg.dt, "time step")->check(CLI::PositiveNumber);
  app.add_option("--points", points, "grid points on [0,1]")->check(CLI::Range(5, 1 << 16));
}

json spde_params(const SpdeConfig& cfg, const std::string& mode, std::uint64_t seed) {
  return {{"mode", mode},     {"eps", mode == "linear" ? json("inf") : json(cfg.epsilon)},
          {"alpha", cfg.alpha}, {"c", cfg.c},
          {"dt", cfg.dt},     {"points", cfg.grid.n_points},
          {"seed", seed}};
}

int cmd_spde(int argc, char** argv) {
  CLI::App app{"Integrate the penalized (or linear) conservative SPDE from c * a", "spde"};
  Common com;
  add_common(app, com);
  SpdeConfig cfg;
  std::string mode = "penalized", start = "mean";
  int points = 129;
  add_spde_options(app, cfg, mode, points);
  app.add_option("--t-end", cfg.t_end, "final time")->check(CLI::PositiveNumber);
  app.add_option("--snapshots", cfg.n_snapshots, "number of snapshots after t = 0")->check(CLI::PositiveNumber);
  app.add_option("--delta", cfg.delta, "compact [delta, 1-delta] for eta mass and contact")->check(CLI::Range(0.0, 0.5));
  app.add_option("--stats-from", cfg.stats_from, "running statistics start time")->check(CLI::NonNegativeNumber);
  app.add_option("--start", start, "mean: c * a | pcn: one pCN draw from the stationary law")
      ->check(CLI::IsMember({"mean", "pcn"}));
  parse(app, argc, argv);
  resolve_seed(com);
  default_threads() = com.threads;

  cfg.grid = TimeGrid::unit(points);
  cfg.seed = com.seed;
  if (mode == "linear") cfg.epsilon = kLinear;
  cfg.violation_levels = {-2 * cfg.alpha, -cfg.alpha - 0.05};
  cfg.validate();

  const RandomSource rs(com.seed, 0);
  SamplePath x0 = gaussian_mu_c(cfg.grid, cfg.c).mean;
  if (start == "pcn") {
    PcnOptions po;
    po.grid = cfg.grid;
    po.thin = 1;
    x0 = pcn_sample_nu(cfg.epsilon, cfg.alpha, cfg.c, 1, 0.1, rs.split(1), po).samples.front();
  }
  RandomSource noise = rs.split(2);
  const TrajectoryLog log = run(x0, cfg, noise);

  io::Table t;
  t.header.push_back("time");
  for (int i = 0; i < points; ++i) t.header.push_back("u" + std::to_string(i));
  for (std::size_t k = 1; k < log.times.size(); ++k) {
    std::vector<double> r{log.times[k]};
    r.insert(r.end(), log.u[k].values.begin(), log.u[k].values.end());
    t.rows.push_back(std::move(r));
  }
  json params = spde_params(cfg, mode, com.seed);
  params["command"] = "spde";
  params["t_end"] = cfg.t_end;
  params["snapshots"] = cfg.n_snapshots;
  params["delta"] = cfg.delta;
  params["stats_from"] = cfg.stats_from;
  params["start"] = start;
  const fs::path out = com.out.empty() ? fs::path("spde_" + mode + ".csv") : fs::path(com.out);
  io::write_text(out, io::to_csv(t, param_comments(params)));

  json stats = params;
  stats["grid"] = io::grid_json(cfg.grid);
  stats["stable"] = cfg.stable();
  stats["steps"] = cfg.n_steps();
  stats["avg_drift_max"] = log.avg_drift_max;
  stats["snapshot_count"] = t.rows.size();
  stats["times"] = std::vector<double>(log.times.begin() + 1, log.times.end());
  stats["min_u"] = std::vector<double>(log.min_u.begin() + 1, log.min_u.end());
  stats["average"] = std::vector<double>(log.average.begin() + 1, log.average.end());
  stats["eta_mass_compact"] = std::vector<double>(log.eta_mass_compact.begin() + 1, log.eta_mass_compact.end());
  stats["contact"] = std::vector<double>(log.contact.begin() + 1, log.contact.end());
  stats["contact_compact"] = std::vector<double>(log.contact_compact.begin() + 1, log.contact_compact.end());
  stats["window_min_u"] = log.window_min_u;
  stats["window_contact"] = log.window_contact;
  stats["violation_levels"] = cfg.violation_levels;
  stats["violation_fractions"] = log.violation_fractions();
  io::write_json(sidecar(out), stats);
  if (com.plot) {
    std::vector<io::Series> s;
    const std::size_t last = log.u.size() - 1;
    for (std::size_t k : {std::size_t{0}, last / 2, last})
      s.push_back({"t = " + io::fmt(log.times[k]), cfg.grid.points(), log.u[k].values});
    io::write_text(svg_path(out), io::svg_plot(s, "spde snapshots (" + mode + ")"));
  }
  std::cout << "wrote " << out.string() << " (" << t.rows.size() << " snapshots); avg_drift_max = "
            << io::fmt(log.avg_drift_max) << "\n";
  return kPass;
}

int cmd_check(int argc, char** argv) {
  CLI::App app{"Run a check suite; exit code 1 on any failure", "check"};
  Common com;
  add_common(app, com);
  std::string suite;
  SpdeConfig cfg;
  std::string mode = "penalized";
  int points = 129;
  long n_traj = 100;
  InvarianceOptions iopt;
  app.add_option("suite", suite, "abco | operators | invariance")
      ->required()
      ->check(CLI::IsMember({"abco", "operators", "invariance"}));
  add_spde_options(app, cfg, mode, points);
  app.add_option("--n-traj", n_traj, "invariance: trajectories")->check(CLI::Range(2L, 1000000L));
  app.add_option("--t-run", iopt.t_run, "invariance: run time per trajectory")->check(CLI::PositiveNumber);
  app.add_option("--z-limit", iopt.z_limit, "invariance: |z| bound")->check(CLI::PositiveNumber);
  parse(app, argc, argv);
  resolve_seed(com);
  default_threads() = com.threads;

  std::vector<CheckLine> lines;
  json report = {{"command", "check"}, {"suite", suite}, {"seed", com.seed}};
  if (suite == "abco") {
    lines = abco_checks();
  } else if (suite == "operators") {
    lines = operator_checks();
  } else {
    cfg.grid = TimeGrid::unit(points);
    if (mode == "linear") cfg.epsilon = kLinear;
    iopt.threads = com.threads;
    const InvarianceReport rep = invariance_check(cfg, n_traj, RandomSource(com.seed, 0), iopt);
    for (const auto& s : rep.stats)
      lines.push_back({"z " + s.name, s.z, 0.0, iopt.z_limit, std::abs(s.z) < iopt.z_limit});
    lines.push_back(check_close("max |<u_t,1> - c|", rep.max_avg_error, 0.0, iopt.avg_tolerance));
    lines.push_back(check_close("max average drift along trajectories", rep.max_avg_drift, 0.0, 1e-8));
    report.update(spde_params(cfg, mode, com.seed));
    report["n_traj"] = n_traj;
    report["t_run"] = iopt.t_run;
    report["pcn_acceptance"] = rep.pcn_acceptance;
  }
  print_checks(suite, lines);
  const bool ok = all_pass(lines);
  std::cout << (ok ? "PASS" : "FAIL") << " check " << suite << "\n";
  if (!com.out.empty()) {
    report["checks"] = checks_json(lines);
    report["pass"] = ok;
    io::write_json(com.out, report);
  }
  return ok ? kPass : kCheckFailed;
}

void usage(std::ostream& os) {
  os << "usage: exlab <command> [options]\n"
        "commands:\n"
        "  sample {bm|bridge|meander|excursion|Vc|Uc|mu_c}   sample paths to CSV\n"
        "  density {excursion|meander}                        density of the average\n"
        "  spde                                               integrate the SPDE\n"
        "  check {abco|operators|invariance}                  run a check suite\n"
        "run `exlab <command> --help` for the options of a command\n";
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    usage(std::cerr);
    return kUsage;
  }
  const std::string cmd = argv[1];
  if (cmd == "-h" || cmd == "--help") {
    usage(std::cout);
    return kPass;
  }
  static const std::map<std::string, int (*)(int, char**)> commands = {
      {"sample", cmd_sample}, {"density", cmd_density}, {"spde", cmd_spde}, {"check", cmd_check}};
  const auto it = commands.find(cmd);
  if (it == commands.end()) {
    std::cerr << "exlab: unknown command '" << cmd << "'\n";
    usage(std::cerr);
    return kUsage;
  }
  try {
    // the command name stands in for argv[0]
    return it->second(argc - 1, argv + 1);
  } catch (const HelpShown&) {
    return kPass;
  } catch (const CLI::ParseError& e) {
    std::cerr << "exlab " << cmd << ": " << e.what() << "\n";
    return kUsage;
  } catch (const domain_error& e) {
    std::cerr << "exlab " << cmd << ": " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "exlab " << cmd << ": numerical failure: " << e.what() << "\n";
    return kNumerical;
  }
}
