#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "ecotraj/errors.hpp"
#include "ecotraj/inference.hpp"
#include "ecotraj/io.hpp"
#include "ecotraj/prediction.hpp"
#include "ecotraj/trajectory.hpp"

namespace fs = std::filesystem;
using namespace ecotraj;

namespace {

int exit_code_for(errc category) {
  switch (category) {
    case errc::config: return 2;
    case errc::data:
    case errc::structure: return 3;
    case errc::domain:
    case errc::numeric: return 4;
  }
  return 1;
}

double ms_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

int resolve_threads(int cli_threads, const Config& config) {
  if (cli_threads > 0) return cli_threads;
  const long long cfg = config.get_int("run.threads", 0);
  if (cfg > 0) return static_cast<int>(cfg);
  if (const char* env = std::getenv("ECO_TRAJ_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

Priors priors_from_config(const Config& c) {
  Priors p;
  p.alpha_mean = c.get_double("prior.alpha_mean", p.alpha_mean);
  p.alpha_var = c.get_double("prior.alpha_var", p.alpha_var);
  p.beta_mean = c.get_double("prior.beta_mean", p.beta_mean);
  p.beta_var = c.get_double("prior.beta_var", p.beta_var);
  p.zeta_ig_shape = c.get_double("prior.zeta_shape", p.zeta_ig_shape);
  p.zeta_ig_scale = c.get_double("prior.zeta_scale", p.zeta_ig_scale);
  p.xi_ig_shape = c.get_double("prior.xi_shape", p.xi_ig_shape);
  p.xi_ig_scale = c.get_double("prior.xi_scale", p.xi_ig_scale);
  p.eps_ig_shape = c.get_double("prior.eps_shape", p.eps_ig_shape);
  p.eps_ig_scale = c.get_double("prior.eps_scale", p.eps_ig_scale);
  p.phi_lower = c.get_double("prior.phi_lower", p.phi_lower);
  p.phi_upper = c.get_double("prior.phi_upper", p.phi_upper);
  return p;
}

Eigen::MatrixXd default_coef_matrix(int rows, int cols, double magnitude) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = ((r + c) % 2 == 0 ? 1.0 : -0.8) * magnitude;
  return m;
}

std::vector<std::string> categories_from_config(const Config& c, int n_states) {
  const std::string given = c.get_string("sim.categories", "");
  std::vector<std::string> out;
  if (!given.empty()) {
    std::istringstream in(given);
    std::string label;
    while (std::getline(in, label, ',')) {
      const auto b = label.find_first_not_of(" \t");
      const auto e = label.find_last_not_of(" \t");
      out.push_back(b == std::string::npos ? "" : label.substr(b, e - b + 1));
    }
    if (static_cast<int>(out.size()) != n_states)
      throw_config("sim_categories", "sim.categories must list exactly " +
                                         std::to_string(n_states) + " labels");
    return out;
  }
  for (int k = 1; k <= n_states; ++k) out.push_back("state_" + std::to_string(k));
  return out;
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_given = false;
};

Config load_common_config(const CommonArgs& args) {
  Config c;
  if (!args.config_path.empty()) c = Config::from_file(args.config_path);
  return c;
}

RunManifest base_manifest(const std::string& command, std::uint64_t seed, const Config& config,
                          const CommonArgs& args) {
  RunManifest m;
  m.command = command;
  m.seed = seed;
  m.config_digest = config_hash(config);
  if (!args.config_path.empty()) m.input_digests[args.config_path] = file_digest(args.config_path);
  return m;
}

void digest_dataset_dir(RunManifest& manifest, const std::string& data_dir) {
  for (const char* name :
       {"dataset.json", "observations.csv", "plots.csv", "landscape.csv", "climate.csv"}) {
    const fs::path p = fs::path(data_dir) / name;
    if (fs::exists(p)) manifest.input_digests[p.string()] = file_digest(p.string());
  }
}

int cmd_simulate(const CommonArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  Config config = load_common_config(args);
  const std::uint64_t seed = args.seed_given ? args.seed : config.get_u64("run.seed", 1);

  GridDesignConfig grid;
  grid.n_plots = static_cast<int>(config.get_int("sim.n_plots", grid.n_plots));
  grid.n_rings = static_cast<int>(config.get_int("sim.n_rings", grid.n_rings));
  grid.n_landscape_covariates =
      static_cast<int>(config.get_int("sim.n_landscape_covariates", grid.n_landscape_covariates));
  grid.n_climate_covariates =
      static_cast<int>(config.get_int("sim.n_climate_covariates", grid.n_climate_covariates));
  grid.spacing_km = config.get_double("sim.spacing_km", grid.spacing_km);
  grid.base_start_year = static_cast<int>(config.get_int("sim.base_start_year", grid.base_start_year));
  grid.start_jitter_years = static_cast<int>(config.get_int("sim.start_jitter", grid.start_jitter_years));
  grid.min_interval_years = static_cast<int>(config.get_int("sim.min_interval", grid.min_interval_years));
  grid.max_interval_years = static_cast<int>(config.get_int("sim.max_interval", grid.max_interval_years));
  const int n_states = static_cast<int>(config.get_int("sim.n_states", 3));
  if (n_states < 2) throw_config("sim_states", "sim.n_states must be at least 2");

  Rng rng(seed, 0);
  StudyDesign design = make_grid_design(grid, rng);

  TrajectoryParams truth;
  truth.alpha = config.has("truth.alpha")
                    ? parse_matrix(config.require_string("truth.alpha"))
                    : default_coef_matrix(design.n_landscape_covariates(), n_states - 1, 0.5);
  truth.beta = config.has("truth.beta")
                   ? parse_matrix(config.require_string("truth.beta"))
                   : default_coef_matrix(design.n_climate_covariates(), n_states - 1, 0.05);
  truth.sigma2_zeta = config.get_double("truth.sigma2_zeta", 0.5);
  truth.sigma2_xi = config.get_double("truth.sigma2_xi", 0.05);
  truth.sigma2_eps = config.get_double("truth.sigma2_eps", 0.05);
  truth.phi = config.get_double("truth.phi",
                                design.n_plots() > 1 ? design.max_distance() / 6.0 : 1.0);

  SimulationResult sim = simulate_dataset(design, truth, rng);
  Dataset dataset = dataset_from_simulation(std::move(design), std::move(sim.observations),
                                            categories_from_config(config, n_states));

  fs::create_directories(args.out_dir);
  save_dataset(dataset, args.out_dir);
  write_truth_json(truth, (fs::path(args.out_dir) / "truth.json").string());

  RunManifest manifest = base_manifest("simulate", seed, config, args);
  manifest.dimensions["n_plots"] = dataset.design.n_plots();
  manifest.dimensions["n_subplots"] = dataset.design.n_subplots();
  manifest.dimensions["n_states"] = n_states;
  manifest.dimensions["n_observations"] = static_cast<long long>(dataset.observations.size());
  manifest.timings_ms["total"] = ms_since(t0);
  write_manifest(manifest, (fs::path(args.out_dir) / "manifest.json").string());

  std::cout << "simulated " << dataset.observations.size() << " observations over "
            << dataset.design.n_plots() << " plots -> " << args.out_dir << "\n";
  return 0;
}

int cmd_fit(const CommonArgs& args, const std::string& data_dir, int cli_chains, int cli_threads) {
  const auto t0 = std::chrono::steady_clock::now();
  Config config = load_common_config(args);
  Dataset dataset = load_dataset(data_dir);

  ChainConfig chain;
  chain.iterations = static_cast<int>(config.get_int("run.iterations", 10000));
  chain.burn_in = static_cast<int>(config.get_int("run.burn_in", 2000));
  chain.thin = static_cast<int>(config.get_int("run.thin", 1));
  chain.seed = args.seed_given ? args.seed : config.get_u64("run.seed", 1);
  chain.store_latent = config.get_bool("run.store_latent", true);
  const int n_chains = cli_chains > 0 ? cli_chains : static_cast<int>(config.get_int("run.chains", 1));
  const int n_threads = resolve_threads(cli_threads, config);

  const Priors priors = priors_from_config(config);
  PosteriorSamples samples = run_chains(dataset.design, dataset.observations, dataset.n_states(),
                                        priors, chain, n_chains, n_threads);

  fs::create_directories(args.out_dir);
  write_samples_csv(samples, (fs::path(args.out_dir) / "samples.csv").string());
  if (chain.store_latent)
    write_latent_csv(samples, dataset.design, (fs::path(args.out_dir) / "latent.csv").string());

  RunManifest manifest = base_manifest("fit", chain.seed, config, args);
  digest_dataset_dir(manifest, data_dir);
  manifest.dimensions["n_plots"] = dataset.design.n_plots();
  manifest.dimensions["n_subplots"] = dataset.design.n_subplots();
  manifest.dimensions["n_sites"] = dataset.design.n_sites();
  manifest.dimensions["n_states"] = dataset.n_states();
  manifest.dimensions["n_chains"] = samples.n_chains;
  manifest.dimensions["draws_per_chain"] = samples.draws_per_chain;
  manifest.dimensions["burn_in"] = samples.burn_in;
  manifest.dimensions["thin"] = samples.thin;
  manifest.dimensions["n_params"] = static_cast<long long>(samples.param_names.size());
  manifest.timings_ms["total"] = ms_since(t0);
  write_manifest(manifest, (fs::path(args.out_dir) / "manifest.json").string());

  std::cout << "fit: " << samples.n_chains << " chain(s) x " << samples.draws_per_chain
            << " retained draws -> " << args.out_dir << "\n";
  return 0;
}

int cmd_predict(const CommonArgs& args, const std::string& data_dir, const std::string& fit_dir,
                const std::string& scenario_arg, bool drift_only, bool condition_start) {
  const auto t0 = std::chrono::steady_clock::now();
  Config config = load_common_config(args);
  Dataset dataset = load_dataset(data_dir);
  RunManifest fit_manifest = read_manifest((fs::path(fit_dir) / "manifest.json").string());
  PosteriorSamples samples = read_samples((fs::path(fit_dir) / "samples.csv").string(),
                                          (fs::path(fit_dir) / "latent.csv").string(), fit_manifest);

  const std::uint64_t seed = args.seed_given ? args.seed : config.get_u64("run.seed", 1);
  Rng rng(seed, 0);

  PredictOptions options;
  options.redraw_noise = !drift_only;
  options.condition_on_observed_start = condition_start;

  PredictiveResult result;
  ClimateScenario scenario;
  bool have_scenario = false;
  if (!scenario_arg.empty()) {
    have_scenario = true;
    if (scenario_arg == "high-emission" || scenario_arg == "low-emission" || scenario_arg == "zero") {
      scenario = scenario_preset(scenario_arg);
    } else {
      Config sc = Config::from_file(scenario_arg);
      scenario = scenario_from_config(sc, fs::path(scenario_arg).parent_path().string());
    }
    result = predict_transition_matrix_scenario(samples, dataset.design, scenario,
                                                dataset.climate_transform.as_transform(), options,
                                                rng);
  } else {
    std::vector<int> starts;
    std::vector<StateObservation> start_obs;
    if (condition_start) {
      starts = dataset.start_states_by_site();
      for (std::size_t u = 0; u < starts.size(); ++u)
        start_obs.push_back({0, 0, 0, starts[u]});
    }
    result = predict_transition_matrix(samples, options, rng,
                                       condition_start ? &start_obs : nullptr);
  }

  fs::create_directories(args.out_dir);
  write_transition_csv(result.estimate, dataset.categories,
                       (fs::path(args.out_dir) / "transition.csv").string());
  write_transition_long_csv(result.estimate, dataset.categories,
                            (fs::path(args.out_dir) / "transition_long.csv").string());
  write_transition_json(result, dataset.categories, have_scenario ? &scenario : nullptr,
                        (fs::path(args.out_dir) / "transition.json").string());

  RunManifest manifest = base_manifest("predict", seed, config, args);
  digest_dataset_dir(manifest, data_dir);
  manifest.input_digests[(fs::path(fit_dir) / "samples.csv").string()] =
      file_digest((fs::path(fit_dir) / "samples.csv").string());
  manifest.dimensions["n_draws"] = result.n_draws;
  manifest.dimensions["n_states"] = dataset.n_states();
  manifest.timings_ms["total"] = ms_since(t0);
  write_manifest(manifest, (fs::path(args.out_dir) / "manifest.json").string());

  std::cout << "predict: " << result.n_draws << " posterior draws";
  if (have_scenario)
    std::cout << ", scenario " << scenario.name << " (time = " << scenario.horizon_years
              << ", temp = " << scenario.delta_temp << ", pcpt = " << scenario.delta_precip << ")";
  std::cout << " -> " << args.out_dir << "\n";
  if (!result.estimate.empty_rows.empty()) {
    std::cout << "note: start states never realized in any draw:";
    for (int r : result.estimate.empty_rows) std::cout << " " << dataset.categories[r - 1];
    std::cout << "\n";
  }
  return 0;
}

int cmd_diagnose(const CommonArgs& args, const std::string& fit_dir) {
  Config config = load_common_config(args);
  RunManifest fit_manifest = read_manifest((fs::path(fit_dir) / "manifest.json").string());
  PosteriorSamples samples = read_samples((fs::path(fit_dir) / "samples.csv").string(),
                                          (fs::path(fit_dir) / "latent.csv").string(), fit_manifest);
  const double max_rhat = config.get_double("diag.max_rhat", 1.1);
  const double min_ess = config.get_double("diag.min_ess", 100.0);
  const bool fail_on_violation = config.get_bool("diag.fail_on_violation", false);

  std::vector<ParamSummary> summaries = diagnostics(samples);
  fs::create_directories(args.out_dir);
  write_diagnostics_csv(summaries, (fs::path(args.out_dir) / "diagnostics.csv").string());

  int violations = 0;
  for (const auto& s : summaries) {
    const bool rhat_ok = std::isfinite(s.rhat) && s.rhat <= max_rhat;
    const bool ess_ok = std::isfinite(s.ess) && s.ess >= min_ess;
    const bool pass = rhat_ok && ess_ok;
    if (!pass) ++violations;
    std::cout << (pass ? "pass" : "FAIL") << "  " << s.name << "  mean=" << s.mean
              << " sd=" << s.sd << " ess=" << s.ess << " rhat=" << s.rhat;
    if (s.degenerate) std::cout << "  (warning: degenerate draws, diagnostics undefined)";
    std::cout << "\n";
  }
  std::cout << "diagnostics: " << summaries.size() - violations << "/" << summaries.size()
            << " parameters within thresholds (rhat <= " << max_rhat << ", ess >= " << min_ess
            << ") -> " << args.out_dir << "\n";
  if (violations > 0 && fail_on_violation) return 5;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-trajectory multinomial state-space model for land cover transitions"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string data_dir, fit_dir, scenario_arg;
  int cli_chains = 0, cli_threads = 0;
  bool drift_only = false, condition_start = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", args.config_path, "key = value configuration file");
    cmd->add_option("--out", args.out_dir, "output directory")->required();
    cmd->add_option("--seed", args.seed, "RNG seed")->each([&](const std::string&) {
      args.seed_given = true;
    });
  };

  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic dataset with ground truth");
  add_common(sim);

  CLI::App* fit = app.add_subcommand("fit", "run the Gibbs sampler on a dataset");
  add_common(fit);
  fit->add_option("--data", data_dir, "dataset directory or dataset.json")->required();
  fit->add_option("--chains", cli_chains, "number of chains");
  fit->add_option("--threads", cli_threads, "worker threads (ECO_TRAJ_THREADS fallback)");

  CLI::App* pred = app.add_subcommand("predict", "posterior-predictive transition matrices");
  add_common(pred);
  pred->add_option("--data", data_dir, "dataset directory")->required();
  pred->add_option("--fit", fit_dir, "fit output directory")->required();
  pred->add_option("--scenario", scenario_arg, "preset name or scenario config file");
  pred->add_flag("--drift-only", drift_only, "disable noise redraw in scenario projections");
  pred->add_flag("--condition-start", condition_start,
                 "condition on observed start states instead of resampling");

  CLI::App* diag = app.add_subcommand("diagnose", "convergence diagnostics for a fit");
  add_common(diag);
  diag->add_option("--fit", fit_dir, "fit output directory")->required();

  try {
    app.parse(argc, argv);
    if (sim->parsed()) return cmd_simulate(args);
    if (fit->parsed()) return cmd_fit(args, data_dir, cli_chains, cli_threads);
    if (pred->parsed())
      return cmd_predict(args, data_dir, fit_dir, scenario_arg, drift_only, condition_start);
    if (diag->parsed()) return cmd_diagnose(args, fit_dir);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error[" << errc_name(e.category()) << "/" << e.tag() << "]: " << e.what() << "\n";
    return exit_code_for(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
