#include "irsloc/irsloc.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace irsloc;

namespace {

struct CliConfig {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int trials = 0;
  bool desk_scale = false;
  bool verbose = false;
};

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void log(const CliConfig& cli, const std::string& msg) {
  if (cli.verbose) std::cerr << msg << "\n";
}

std::string sign_string(const SignVector& d) {
  std::string s;
  for (Eigen::Index i = 0; i < d.size(); ++i) s += d(i) > 0 ? '+' : '-';
  return s;
}

void cmd_chanest(const ExperimentSpec& spec, const CliConfig& cli) {
  const auto rs = run_chanest_campaign(spec);
  write_chanest_csv(join(cli.out_dir, "chanest.csv"), rs);
  write_convergence_csv(join(cli.out_dir, "chanest_convergence.csv"), rs);
  write_manifest(join(cli.out_dir, "manifest.json"), "chanest", spec, {"chanest.csv", "chanest_convergence.csv"});
}

void write_localize_summary(const std::string& path, const ExperimentSpec& spec, const std::vector<LocPointResult>& rs) {
  CsvWriter w(path, "irsloc.localize_summary.v1",
              {"arm", "pb_w", "M", "N", "median_cycles", "correct_by_success_cycle", "terminated_frac"});
  for (const auto& r : rs)
    w.row(r.point.arm, r.point.pb_w, r.point.M, r.N, r.median_cycles(),
          r.terminated_correct_by(spec.localization.success_cycle), r.terminated_by(r.max_cycles));
}

void cmd_localize(const ExperimentSpec& spec, const CliConfig& cli) {
  const auto rs = run_localization_campaign(spec, [&](const LocPoint& pt, const LocTrialRecord& t) {
    log(cli, "localize: arm=" + pt.arm + " pb_w=" + fmt_num(pt.pb_w) + " trial=" + std::to_string(t.trial) +
                 " cycles=" + std::to_string(t.cycles_to_threshold));
  });
  write_localization_csvs(cli.out_dir, rs);
  write_localize_summary(join(cli.out_dir, "localize_summary.csv"), spec, rs);
  write_manifest(join(cli.out_dir, "manifest.json"), "localize", spec,
                 {"localize_cycles.csv", "localize_trials.csv", "localize_diagnostics.csv", "localize_summary.csv"});
}

/// Runs the first localization cycle of trial 0 and traces the waveform
/// optimization that prepares the second cycle.
void cmd_waveopt_trace(const ExperimentSpec& spec, const CliConfig& cli) {
  const auto& lp = spec.localization;
  const double pb = lp.pb_w.front();
  const SceneConfig cfg = with_dims(spec.scene, lp.M.front(), lp.ny.front());
  const auto seed = spec.master_seed;
  const auto ch = run_chanest_trial(cfg, 1, 0, lp.pilot_snr_db, derive_seed(seed, {kSceneStream, 0}),
                                    derive_seed(seed, {kPilotStream, 0}), spec.refine);
  const auto grid = make_grid(lp.I, lp.theta_lo_deg, lp.theta_hi_deg, lp.phi_deg, cfg);
  Rng rng(derive_seed(seed, {kInitStream, 0}));
  const CVector theta = rng.unit_modulus_vector(cfg.N());
  const CVector x = CVector::Constant(cfg.M, cd(std::sqrt(pb / cfg.M)));
  CycleOptions copt;
  copt.L = lp.L;
  copt.dinkelbach = spec.dinkelbach;
  const auto cr = run_cycle(ch.scene, grid, uniform_belief(grid.I(), cfg.N()), ch.estimate.G_hat, x, theta,
                            derive_seed(seed, {kEchoStream, 0}), copt);
  const auto ctx = make_distance_context(ch.estimate.G_hat, cr.belief.delta, grid.steering, cr.belief.alpha,
                                         cr.belief.p, lp.L, ch.scene.sigma2());
  WaveoptOptions wopt = spec.waveopt;
  wopt.power = pb;
  const auto wr = optimize_waveform(ctx, theta, x, wopt);
  log(cli, "waveopt: outer=" + std::to_string(wr.outer_iterations) + " xi=" + fmt_num(wr.xi));
  {
    CsvWriter w(join(cli.out_dir, "waveopt_trace.csv"), "irsloc.waveopt_trace.v1",
                {"outer", "rho", "xi", "penalized", "distance"});
    for (const auto& t : wr.trace) w.row(t.outer, t.rho, t.xi, t.penalized, t.distance);
  }
  write_manifest(join(cli.out_dir, "manifest.json"), "waveopt-trace", spec, {"waveopt_trace.csv"});
}

/// Solves one random ratio problem (rank-1 numerator, positive definite denominator).
void cmd_bqp_solve(const ExperimentSpec& spec, const CliConfig& cli) {
  const int N = spec.bqp.N;
  Rng rng(derive_seed(spec.master_seed, {0xb9}));
  const CVector v = rng.complex_normal_vector(N);
  const CMatrix W = rng.complex_normal_matrix(N, N);
  const RatioProblem prob{v * v.adjoint(), W.adjoint() * W + 0.1 * CMatrix::Identity(N, N)};
  const auto res = dinkelbach_solve(prob, {}, spec.dinkelbach);
  log(cli, "bqp: ratio=" + fmt_num(res.ratio) + " iterations=" + std::to_string(res.iterations));
  {
    CsvWriter w(join(cli.out_dir, "bqp_iterations.csv"), "irsloc.bqp_iterations.v1", {"iteration", "y"});
    for (std::size_t t = 0; t < res.y_history.size(); ++t) w.row(t, res.y_history[t]);
  }
  {
    CsvWriter w(join(cli.out_dir, "bqp_solution.csv"), "irsloc.bqp_solution.v1",
                {"N", "ratio", "iterations", "converged", "delta"});
    w.row(N, res.ratio, res.iterations, res.converged, sign_string(res.delta));
  }
  write_manifest(join(cli.out_dir, "manifest.json"), "bqp-solve", spec, {"bqp_iterations.csv", "bqp_solution.csv"});
}

/// Channel estimation and localization for trial 0 of the first sweep point.
void cmd_full_pipeline(const ExperimentSpec& spec, const CliConfig& cli) {
  const auto pt = localization_points(spec).front();
  const auto rec = run_localization_trial(spec, pt, 0);
  log(cli, "pipeline: ne=" + fmt_num(rec.ne) + " cycles=" + std::to_string(rec.cycles_to_threshold));
  {
    CsvWriter w(join(cli.out_dir, "pipeline_cycles.csv"), "irsloc.pipeline_cycles.v1",
                {"cycle", "hypothesis", "probability", "residual", "gamma_abs", "alpha_abs"});
    for (const auto& d : rec.diagnostics) w.row(d.cycle, d.hypothesis, d.probability, d.residual, d.gamma_abs, d.alpha_abs);
  }
  {
    CsvWriter w(join(cli.out_dir, "pipeline_summary.csv"), "irsloc.pipeline_summary.v1",
                {"arm", "pb_w", "M", "N", "ne", "cycles_to_threshold", "terminated", "winner", "true_index", "correct"});
    w.row(pt.arm, pt.pb_w, pt.M, spec.scene.nx * pt.ny, rec.ne, rec.cycles_to_threshold, rec.terminated, rec.winner,
          rec.true_index, rec.correct);
  }
  write_manifest(join(cli.out_dir, "manifest.json"), "full-pipeline", spec,
                 {"pipeline_cycles.csv", "pipeline_summary.csv"});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IRS-aided NLoS target localization simulator"};
  app.require_subcommand(1, 1);
  CliConfig cli;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"chanest", "channel-estimation campaign (NE versus SNR)"},
      {"localize", "localization campaign (optimized and random arms)"},
      {"waveopt-trace", "trace one waveform/IRS optimization"},
      {"bqp-solve", "solve one random sign-ratio problem"},
      {"full-pipeline", "channel estimation plus localization for one trial"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", cli.config_path, "experiment JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", cli.out_dir, "output directory");
    sub->add_option("--seed", cli.seed, "master seed override")->each([&](const std::string&) { cli.seed_set = true; });
    sub->add_option("--trials", cli.trials, "trial count override")->check(CLI::PositiveNumber);
    sub->add_flag("--desk-scale", cli.desk_scale, "apply the reduced-size preset");
    sub->add_flag("--verbose", cli.verbose, "progress on stderr");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  ExperimentSpec spec;
  try {
    spec = load_spec(cli.config_path, cli.desk_scale);
    if (cli.seed_set) spec.master_seed = cli.seed;
    if (cli.trials > 0) spec.trials = cli.trials;
    fs::create_directories(cli.out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: usage: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (cmd == "chanest") cmd_chanest(spec, cli);
    else if (cmd == "localize") cmd_localize(spec, cli);
    else if (cmd == "waveopt-trace") cmd_waveopt_trace(spec, cli);
    else if (cmd == "bqp-solve") cmd_bqp_solve(spec, cli);
    else cmd_full_pipeline(spec, cli);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
