// Command-line front end: offline design, Monte-Carlo simulation, reset-period
// sweeps, and tightening-level plots, all driven by one JSON config.
//
// Exit codes: 0 success, 2 design infeasible, 3 invariant alarm (a guaranteed
// property failed at runtime), 4 config/usage error, 1 anything else.
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "smpc/config.hpp"
#include "smpc/errors.hpp"
#include "smpc/svg.hpp"

namespace {

using namespace smpc;

// SMPC_LOG=1 turns on progress lines (stderr); reports themselves go to files.
bool verbose() {
  const char* v = std::getenv("SMPC_LOG");
  return v != nullptr && *v != '\0' && std::string(v) != "0";
}

void log(const std::string& message) {
  if (verbose()) std::cerr << "[smpc] " << message << "\n";
}

void write_file(const std::filesystem::path& path,
                const std::string& content) {
  if (!path.parent_path().empty())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << content;
  log("wrote " + path.string());
}

bool wants(const ProjectConfig& config, const std::string& format) {
  for (const std::string& f : config.output.formats)
    if (f == format) return true;
  return false;
}

/// Command-line values layered over the config file.
struct Args {
  std::string config_path;
  std::string artifact_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool has_seed = false;
  int jobs = 0;
  long realizations = 0;
  long period = -1;  // plot-tightening; -1 = take it from the config/artifact
  long steps = 60;   // plot-tightening level range
};

void apply_overrides(const Args& args, ProjectConfig* config) {
  if (!args.out_dir.empty()) config->output.dir = args.out_dir;
  if (args.has_seed) {
    config->experiment.seed = args.seed;
    config->scenario.rng_seed = args.seed;
  }
  if (args.jobs > 0) {
    config->experiment.jobs = args.jobs;
    config->scenario.jobs = args.jobs;
  }
  if (args.realizations > 0)
    config->experiment.num_realizations = args.realizations;
}

/// The accumulation whose saturation decides feasibility for this kind.
const TighteningProfile& governing_profile(const ControllerDesign& d) {
  switch (d.kind) {
    case ControllerKind::Robust:
      return d.beta;
    case ControllerKind::MultiStep:
      if (d.period > 0) return d.beta_tilde;
      return d.gamma;
    default:
      return d.gamma;
  }
}

void print_design_summary(const DesignBundle& bundle) {
  for (size_t i = 0; i < bundle.designs.size(); ++i) {
    const ControllerDesign& d = bundle.designs[i];
    std::cout << bundle.labels[i] << ": kind="
              << controller_kind_name(d.kind);
    if (d.kind == ControllerKind::Feedback) {
      std::cout << "\n";
      continue;
    }
    std::cout << " N=" << d.horizon;
    if (d.kind == ControllerKind::MultiStep)
      std::cout << " M=" << (d.period == 0 ? std::string("inf")
                                           : std::to_string(d.period));
    std::cout << " k_bar=" << d.k_bar
              << " gamma_max=" << d.gamma.saturation.maxCoeff();
    if (d.beta.rows() > 0)
      std::cout << " beta_max=" << d.beta.saturation.maxCoeff();
    if (d.beta_tilde.rows() > 0)
      std::cout << " beta_tilde_max=" << d.beta_tilde.saturation.maxCoeff();
    const FeasibilityReport feas = design_feasibility(governing_profile(d));
    std::cout << (feas.feasible ? " feasible" : " INFEASIBLE")
              << " (min slack " << feas.slack.minCoeff() << ")\n";
  }
}

int run_design(const Args& args) {
  ProjectConfig config = load_config(args.config_path);
  apply_overrides(args, &config);
  log("designing " + std::to_string(config.controllers.size()) +
      " controller(s)");
  const DesignBundle bundle = design_from_config(config);
  print_design_summary(bundle);
  const std::filesystem::path dir(config.output.dir);
  write_file(dir / "design.json", bundle_to_json(bundle));
  std::cout << "wrote " << (dir / "design.json").string() << "\n";
  return 0;
}

std::string violation_svg(const SimulationReport& report) {
  std::vector<PlotSeries> series;
  for (const ControllerReport& r : report.controllers) {
    PlotSeries s;
    s.name = r.label;
    s.x = Eigen::VectorXd::LinSpaced(r.violations_per_step.size(), 0.0,
                                     double(r.violations_per_step.size() - 1));
    s.y = r.violations_per_step;
    series.push_back(std::move(s));
  }
  PlotOptions options;
  options.title = "state-constraint violation frequency";
  options.x_label = "step k";
  options.y_label = "fraction of realizations";
  options.y_min = 0.0;
  return line_plot_svg(series, options);
}

int run_simulate(const Args& args) {
  ProjectConfig config = load_config(args.config_path);
  apply_overrides(args, &config);
  DesignBundle bundle;
  if (!args.artifact_path.empty()) {
    log("loading designs from " + args.artifact_path);
    bundle = load_bundle(args.artifact_path);
  } else {
    log("no artifact given; running the design stage first");
    bundle = design_from_config(config);
  }
  const ExperimentConfig experiment = experiment_from(config, bundle);
  log("simulating " + std::to_string(experiment.num_realizations) +
      " realizations x " + std::to_string(experiment.sim_length) + " steps");
  const SimulationReport report = monte_carlo(experiment);

  const std::filesystem::path dir(config.output.dir);
  if (wants(config, "json"))
    write_file(dir / "report.json", report_to_json(report));
  if (wants(config, "csv")) {
    write_file(dir / "report.csv", report_to_csv(report));
    write_file(dir / "realizations.csv", realizations_to_csv(report));
    write_file(dir / "violations.csv", violation_curve_to_csv(report));
  }
  if (wants(config, "svg"))
    write_file(dir / "violations.svg", violation_svg(report));

  int exit_code = 0;
  for (const ControllerReport& r : report.controllers) {
    std::cout << r.label << ": avg_cost=" << r.avg_cost;
    if (std::isfinite(r.normalized_cost))
      std::cout << " normalized=" << r.normalized_cost;
    std::cout << " max_violation_rate=" << r.max_violation_rate
              << " feasibility_failures=" << r.feasibility_failures << "\n";
    if (!r.alarm.empty()) {
      std::cerr << "ALARM [" << r.label << "]: " << r.alarm << "\n";
      exit_code = 3;
    }
  }
  return exit_code;
}

int run_sweep(const Args& args) {
  ProjectConfig config = load_config(args.config_path);
  apply_overrides(args, &config);
  const SweepConfig sweep = sweep_from(config);
  log("sweeping " + std::to_string(sweep.periods.size()) + " reset periods");
  const SweepReport report = sweep_m(sweep);

  const std::filesystem::path dir(config.output.dir);
  if (wants(config, "json"))
    write_file(dir / "sweep.json", sweep_report_to_json(report));
  if (wants(config, "csv"))
    write_file(dir / "sweep.csv", sweep_report_to_csv(report));
  if (wants(config, "svg")) {
    // cost against the reset period, with the two limiting laws as horizontal
    // reference lines when the sweep includes them
    const bool normalized = std::isfinite(report.reference_cost);
    std::vector<double> xs, ys;
    double level_one = std::numeric_limits<double>::quiet_NaN();
    double level_inf = std::numeric_limits<double>::quiet_NaN();
    for (const SweepEntry& e : report.entries) {
      if (!e.designed) continue;
      const double y = normalized ? e.report.normalized_cost
                                  : e.report.avg_cost;
      if (e.period == 0) {
        level_inf = y;
      } else {
        xs.push_back(double(e.period));
        ys.push_back(y);
        if (e.period == 1) level_one = y;
      }
    }
    if (!xs.empty()) {
      std::vector<PlotSeries> series;
      PlotSeries curve;
      curve.name = "periodic reset";
      curve.x = Eigen::Map<Eigen::VectorXd>(xs.data(), long(xs.size()));
      curve.y = Eigen::Map<Eigen::VectorXd>(ys.data(), long(ys.size()));
      series.push_back(std::move(curve));
      const double x_lo = xs.front();
      const double x_hi = xs.back();
      const auto reference_line = [&](const std::string& name, double level) {
        PlotSeries line;
        line.name = name;
        line.x = Eigen::Vector2d(x_lo, x_hi);
        line.y = Eigen::Vector2d(level, level);
        series.push_back(std::move(line));
      };
      if (std::isfinite(level_one))
        reference_line("reset every step (rs)", level_one);
      if (std::isfinite(level_inf))
        reference_line("never reset (if)", level_inf);
      PlotOptions options;
      options.title = "closed-loop cost vs reset period";
      options.x_label = "reset period M";
      options.y_label = normalized ? "cost relative to pure feedback"
                                   : "windowed average cost";
      write_file(dir / "sweep.svg", line_plot_svg(series, options));
    } else {
      log("no designed finite-period entries; skipping sweep.svg");
    }
  }

  int exit_code = 0;
  for (const SweepEntry& e : report.entries) {
    std::cout << "M=" << (e.period == 0 ? std::string("inf")
                                        : std::to_string(e.period));
    if (!e.designed) {
      std::cout << ": design infeasible\n";
      continue;
    }
    std::cout << ": avg_cost=" << e.report.avg_cost;
    if (std::isfinite(e.report.normalized_cost))
      std::cout << " normalized=" << e.report.normalized_cost;
    std::cout << " max_violation_rate=" << e.report.max_violation_rate << "\n";
    if (!e.report.alarm.empty()) {
      std::cerr << "ALARM [M=" << e.period << "]: " << e.report.alarm << "\n";
      exit_code = 3;
    }
  }
  return exit_code;
}

std::string levels_svg(const LevelTable& table) {
  const Eigen::Index steps = table.gamma.cols();
  const Eigen::VectorXd x =
      Eigen::VectorXd::LinSpaced(steps, 0.0, double(steps - 1));
  std::vector<PlotSeries> series;
  // the binding (largest) level across rows is what decides feasibility
  series.push_back({"gamma", x, table.gamma.colwise().maxCoeff().transpose()});
  if (table.beta_tilde.size() > 0)
    series.push_back(
        {"beta_tilde(M=" + std::to_string(table.period) + ")", x,
         table.beta_tilde.colwise().maxCoeff().transpose()});
  series.push_back({"beta", x, table.beta.colwise().maxCoeff().transpose()});
  series.push_back({"gamma_max", x,
                    Eigen::VectorXd::Constant(steps,
                                              table.gamma_max.maxCoeff())});
  PlotOptions options;
  options.title = "constraint-tightening levels";
  options.x_label = "prediction step i";
  options.y_label = "level (1 = constraint fully consumed)";
  options.y_min = 0.0;
  return line_plot_svg(series, options);
}

int run_plot(const Args& args) {
  LevelTable table;
  std::filesystem::path dir(args.out_dir.empty() ? "out" : args.out_dir);
  if (!args.artifact_path.empty()) {
    const DesignBundle bundle = load_bundle(args.artifact_path);
    if (bundle.designs.empty())
      throw ConfigError("artifact holds no designs to plot");
    const ControllerDesign& d = bundle.designs.front();
    const Eigen::Index period = args.period >= 0 ? args.period : d.period;
    table = tightening_table(d, period, args.steps);
  } else if (!args.config_path.empty()) {
    ProjectConfig config = load_config(args.config_path);
    apply_overrides(args, &config);
    dir = config.output.dir;
    // default to the first periodic controller's reset period, if any
    Eigen::Index period = args.period;
    if (period < 0) {
      period = 0;
      for (const ControllerEntry& entry : config.controllers)
        if (entry.kind == ControllerKind::MultiStep && entry.period > 0) {
          period = entry.period;
          break;
        }
    }
    table = tightening_table(config, period, args.steps);
  } else {
    throw ConfigError("plot-tightening needs --config or --artifact");
  }
  write_file(dir / "tightening.csv", level_table_to_csv(table));
  write_file(dir / "tightening.svg", levels_svg(table));
  std::cout << "gamma_max=" << table.gamma_max.maxCoeff()
            << " beta[" << table.beta.cols() - 1
            << "]=" << table.beta.rightCols(1).maxCoeff() << "\n";
  std::cout << "wrote " << (dir / "tightening.svg").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochastic MPC: offline design, simulation, sweeps, plots"};
  app.require_subcommand(1);
  Args args;

  CLI::App* design = app.add_subcommand(
      "design", "compute tightening levels, terminal artifacts, and gains");
  CLI::App* simulate = app.add_subcommand(
      "simulate", "run the seeded Monte-Carlo closed-loop comparison");
  CLI::App* sweep = app.add_subcommand(
      "sweep-m", "redesign and simulate across reset periods");
  CLI::App* plot = app.add_subcommand(
      "plot-tightening", "emit the tightening-level table and plot");

  for (CLI::App* cmd : {design, simulate, sweep, plot}) {
    CLI::Option* config_opt =
        cmd->add_option("--config", args.config_path, "JSON config file");
    if (cmd != plot) config_opt->required();
    cmd->add_option("--out", args.out_dir,
                    "output directory (overrides the config)");
    cmd->add_option("--jobs", args.jobs, "worker threads (overrides)");
  }
  for (CLI::App* cmd : {simulate, plot})
    cmd->add_option("--artifact", args.artifact_path,
                    "design artifact from a previous `design` run");
  for (CLI::App* cmd : {design, simulate, sweep}) {
    cmd->add_option("--seed", args.seed, "master RNG seed (overrides)")
        ->each([&](const std::string&) { args.has_seed = true; });
    if (cmd != design)
      cmd->add_option("--realizations", args.realizations,
                      "Monte-Carlo realization count (overrides)");
  }
  plot->add_option("--period", args.period,
                   "reset period for the periodic accumulation (0 = never)");
  plot->add_option("--steps", args.steps, "number of level indices to emit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 4;  // bad usage is a config error
  }

  try {
    if (design->parsed()) return run_design(args);
    if (simulate->parsed()) return run_simulate(args);
    if (sweep->parsed()) return run_sweep(args);
    return run_plot(args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 4;
  } catch (const DesignError& e) {
    std::cerr << "design infeasible: " << e.what() << "\n";
    return 2;
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant alarm: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
