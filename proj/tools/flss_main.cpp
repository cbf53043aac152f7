// Command-line driver: density curves, limiting mean/covariance summaries,
// two-sample dispersion tests, power predictions, scale confidence intervals,
// and Monte Carlo experiments, all from a JSON config.
//
// Exit codes: 0 success, 1 config or I/O error, 2 empty confidence interval,
// 3 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "flss/io.hpp"

namespace fs = std::filesystem;
using namespace flss;

namespace {

struct GlobalFlags {
  std::string config_path;
  std::string output_dir;
  unsigned threads = 0;  // 0 = take from config
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool paper_defaults = false;
};

io::RunConfig resolve_config(const GlobalFlags& g) {
  io::RunConfig cfg;
  if (!g.config_path.empty()) cfg = io::load_config(g.config_path);
  if (g.paper_defaults) cfg.apply_reference_defaults();
  if (g.threads > 0) cfg.threads = g.threads;
  if (g.seed_set) cfg.seed = g.seed;
  if (!g.output_dir.empty()) cfg.output_dir = g.output_dir;
  fs::create_directories(cfg.output_dir);
  return cfg;
}

std::string out_path(const io::RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.output_dir) / name).string();
}

std::vector<SpectralFunctional> build_functionals(const io::RunConfig& cfg,
                                                  const AspectRatios& r) {
  std::vector<SpectralFunctional> fs;
  for (const auto& f : cfg.functionals) fs.push_back(f.build(r.yn1, r.yn2));
  return fs;
}

int cmd_density(const io::RunConfig& cfg) {
  SpectralMeasure H = cfg.spectrum();
  AspectRatios r = cfg.ratios();
  DensityConfig dc = cfg.density;
  dc.solver = cfg.solver;
  SupportInterval sup = detect_support(H, r, dc);
  DensityCurve curve = density_on_mesh(H, r, sup, dc);
  io::write_density_csv(out_path(cfg, "density.csv"), curve);
  io::write_json(out_path(cfg, "support.json"), io::support_report(curve));
  return 0;
}

int cmd_clt(const io::RunConfig& cfg) {
  SpectralMeasure H = cfg.spectrum();
  AspectRatios r = cfg.ratios();
  std::vector<SpectralFunctional> fsv = build_functionals(cfg, r);
  CLTSummary s;
  if (cfg.moments.beta_x != 0.0) {
    if (cfg.x_file.empty() || cfg.y_file.empty())
      throw config_error("beta_x != 0 needs test.x_file and test.y_file (population-frame X)");
    Eigen::MatrixXd X = io::read_matrix(cfg.x_file);
    Eigen::MatrixXd Y = io::read_matrix(cfg.y_file);
    s = clt_summary(H, r, cfg.moments, fsv, cfg.clt_config(), X, Y);
  } else {
    s = clt_summary(H, r, cfg.moments, fsv, cfg.clt_config());
  }
  io::write_json(out_path(cfg, "clt.json"), io::clt_report(s, cfg.moments));
  return 0;
}

int cmd_test(const io::RunConfig& cfg) {
  if (cfg.x_file.empty() || cfg.y_file.empty())
    throw config_error("test needs test.x_file and test.y_file");
  Eigen::MatrixXd X = io::read_matrix(cfg.x_file);
  Eigen::MatrixXd Y = io::read_matrix(cfg.y_file);
  TestReport tr = equality_test(X, Y, cfg.moments, cfg.clt_config());
  io::write_json(out_path(cfg, "test.json"), io::test_report(tr));
  return 0;
}

int cmd_power(const io::RunConfig& cfg) {
  if (!cfg.has_dims()) throw config_error("power needs ratios.p, ratios.n1, ratios.n2");
  SpectralMeasure H_alt = cfg.alt_spectrum();
  PowerResult pr = power_function(H_alt, *cfg.p, *cfg.n1, *cfg.n2, cfg.moments,
                                  cfg.clt_config(), cfg.threshold);
  io::write_json(out_path(cfg, "power.json"), io::power_report(pr));
  return 0;
}

int cmd_ci(const io::RunConfig& cfg) {
  if (cfg.x_file.empty() || cfg.y_file.empty())
    throw config_error("ci needs test.x_file and test.y_file");
  Eigen::MatrixXd X = io::read_matrix(cfg.x_file);
  Eigen::MatrixXd Y = io::read_matrix(cfg.y_file);
  ThetaFamily fam = cfg.ci_family == "two_atom" ? ThetaFamily::two_atom(cfg.ci_w1)
                                                : ThetaFamily::scale();
  ThetaInterval ci =
      confidence_interval(X, Y, fam, cfg.theta_min, cfg.theta_max, cfg.theta_m,
                          cfg.moments, cfg.clt_config(), cfg.threshold, cfg.two_sided);
  io::write_json(out_path(cfg, "ci.json"), io::interval_report(ci));
  io::write_ci_grid_csv(out_path(cfg, "ci_grid.csv"), ci);
  return ci.empty ? 2 : 0;
}

int cmd_simulate(const io::RunConfig& cfg) {
  if (!cfg.has_dims())
    throw config_error("simulate needs ratios.p, ratios.n1, ratios.n2");
  SimSpec spec;
  spec.p = *cfg.p;
  spec.n1 = *cfg.n1;
  spec.n2 = *cfg.n2;
  spec.law = cfg.law();
  spec.population = cfg.spectrum();
  spec.seed = cfg.seed;
  spec.centered = cfg.sim_centered;
  spec.rotation_seed = cfg.rotation_seed;
  if (cfg.sim_experiment == "clt") {
    AspectRatios r = cfg.ratios();
    CLTExperimentConfig ecfg;
    ecfg.reps = cfg.sim_reps;
    ecfg.threads = cfg.threads;
    ecfg.clt = cfg.clt_config();
    CLTExperimentResult res = run_clt_experiment(spec, build_functionals(cfg, r), ecfg);
    io::write_replications_csv(out_path(cfg, "replications.csv"), res);
    io::write_json(out_path(cfg, "simulate.json"), io::clt_experiment_report(res));
    return 0;
  }
  if (cfg.sim_experiment == "size_power") {
    SizePowerConfig scfg;
    scfg.reps = cfg.sim_reps;
    scfg.threads = cfg.threads;
    scfg.clt = cfg.clt_config();
    if (!cfg.alt_spectrum_file.empty() || !cfg.alt_spectrum_atoms.empty()) {
      SimSpec alt = spec;
      alt.population = cfg.alt_spectrum();
      SizePowerPair res = run_size_power_experiment(spec, alt, scfg);
      io::write_json(out_path(cfg, "simulate.json"), io::size_power_pair_report(res));
    } else {
      SizePowerResult res = run_size_power_experiment(spec, scfg);
      io::write_json(out_path(cfg, "simulate.json"), io::size_power_report(res));
    }
    return 0;
  }
  throw config_error("unknown experiment '" + cfg.sim_experiment + "'");
}

}  // namespace

int main(int argc, char** argv) {
  // single-threaded BLAS keeps reductions identical across worker counts
  setenv("OPENBLAS_NUM_THREADS", "1", 1);
  setenv("OMP_NUM_THREADS", "1", 1);

  CLI::App app{"spectral statistics of large two-sample covariance ratios"};
  app.require_subcommand(1);

  GlobalFlags g;
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_option("--threads", g.threads, "worker threads (overrides config)");
  auto* seed_opt = app.add_option("--seed", g.seed, "RNG seed (overrides config)");
  app.add_flag("--paper-defaults", g.paper_defaults,
               "pin all tunables to the reference defaults");
  app.add_option("--output-dir", g.output_dir, "output directory (overrides config)");

  auto* c_density = app.add_subcommand("density", "limiting spectral density curve");
  auto* c_clt = app.add_subcommand("clt", "limiting mean and covariance of LSS");
  auto* c_test = app.add_subcommand("test", "two-sample dispersion equality test");
  auto* c_power = app.add_subcommand("power", "predicted power for an alternative");
  auto* c_ci = app.add_subcommand("ci", "confidence interval for a spectrum family");
  auto* c_sim = app.add_subcommand("simulate", "Monte Carlo experiment");
  for (auto* sc : {c_density, c_clt, c_test, c_power, c_ci, c_sim}) sc->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    io::RunConfig cfg = resolve_config(g);
    if (c_density->parsed()) return cmd_density(cfg);
    if (c_clt->parsed()) return cmd_clt(cfg);
    if (c_test->parsed()) return cmd_test(cfg);
    if (c_power->parsed()) return cmd_power(cfg);
    if (c_ci->parsed()) return cmd_ci(cfg);
    if (c_sim->parsed()) return cmd_simulate(cfg);
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const io_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const numeric_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
