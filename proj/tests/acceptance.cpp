// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "irsloc/irsloc.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>

using namespace irsloc;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and sizes.
constexpr double kNoiselessNeMax = 1e-6;
constexpr double kNoiselessBelief = 0.99;
constexpr int kNoiselessMaxCycles = 3;
constexpr int kNoiselessSeeds = 10;
constexpr double kNoiselessRuntimeS = 60.0;

constexpr int kMonotoneInstances = 50;
constexpr double kMonotoneSlackRel = 1e-12;
constexpr int kMonotoneMaxSweeps = 300;

constexpr int kBqpInstances = 100;
constexpr int kBqpN = 10;
constexpr double kBqpRuntimeS = 120.0;

constexpr int kIlpInstances = 50;
constexpr int kIlpN = 8;
constexpr double kIlpRelTol = 1e-12;

constexpr int kOracleInstances = 50;
constexpr double kOracleRelTol = 1e-9;

constexpr int kBcdInstances = 20;
constexpr double kBcdSlackRel = 1e-10;
constexpr double kBcdXiMax = 1e-7;

constexpr double kLocCorrectMin = 0.8;
constexpr double kLocRuntimeS = 15.0 * 60.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SignVector signs_from_mask(std::uint64_t m, int N) {
  SignVector d(N);
  for (int k = 0; k < N; ++k) d(k) = (m >> k & 1U) ? -1 : 1;
  return d;
}

double direct_value(const CMatrix& R, const SignVector& d) {
  const CVector v = signs_as_complex(d);
  return (v.adjoint() * R * v)(0, 0).real();
}

// 1 ------------------------------------------------------------------------

Outcome noiseless_end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentSpec spec;
  spec.scene.M = 4;
  spec.scene.nx = 3;
  spec.scene.ny = 3;
  spec.scene.noiseless = true;
  spec.localization.M = {4};
  spec.localization.ny = {3};
  spec.localization.pb_w = {50.0};
  spec.localization.arms = {"optimized"};
  spec.localization.max_cycles = kNoiselessMaxCycles;
  spec.localization.threshold = kNoiselessBelief;
  const auto pt = localization_points(spec).front();

  int ok = 0;
  double worst_ne = 0.0;
  for (int seed = 0; seed < kNoiselessSeeds; ++seed) {
    spec.master_seed = static_cast<std::uint64_t>(seed) + 1;
    const auto rec = run_localization_trial(spec, pt, 0);
    worst_ne = std::max(worst_ne, rec.ne);
    bool localized = false;
    for (int c = 0; c < kNoiselessMaxCycles; ++c)
      if (rec.argmax[c] == rec.true_index && rec.p_true[c] > kNoiselessBelief) localized = true;
    if (rec.ne < kNoiselessNeMax && localized) ++ok;
  }
  const double t = seconds_since(t0);
  return {ok == kNoiselessSeeds && t < kNoiselessRuntimeS,
          std::to_string(ok) + "/" + std::to_string(kNoiselessSeeds) + " seeds, worst NE " + fmt(worst_ne) + ", " +
              fmt(t) + " s"};
}

// 2 ------------------------------------------------------------------------

Outcome coordinate_descent_monotone() {
  SceneConfig cfg;
  cfg.M = 4;
  cfg.nx = 3;
  cfg.ny = 3;
  int monotone = 0, converged = 0, max_sweeps = 0;
  for (int t = 0; t < kMonotoneInstances; ++t) {
    const Scene sc = synthesize_scene(cfg, derive_seed(2, {1, static_cast<std::uint64_t>(t)}));
    const auto sched = build_schedule(cfg.M, 1, cfg.N(), cfg.N(), pilot_power_for_snr(15.0, cfg));
    const auto obs = simulate_pilot_round(sc, sched, derive_seed(2, {2, static_cast<std::uint64_t>(t)}));
    std::vector<CVector> omega_hat;
    for (int p = 0; p < sched.P(); ++p) omega_hat.push_back(ls_estimate(obs, p).omega_hat);
    const CMatrix G0 = initialize_channel(pairwise_products(obs, omega_hat));
    double prev = chanest_objective(obs, omega_hat, G0);
    bool ok = true;
    RefineOptions opt;
    opt.max_sweeps = kMonotoneMaxSweeps;
    opt.tol = 1e-8;
    const auto est = refine_channel(obs, omega_hat, G0, opt, [&](const RefineEvent& e) {
      if (e.kind != RefineEvent::Kind::EntryUpdate) return;
      const double J = chanest_objective(obs, omega_hat, *e.G);
      if (J > prev + kMonotoneSlackRel * std::abs(prev)) ok = false;
      prev = J;
    });
    monotone += ok;
    converged += est.converged && est.sweeps_run <= kMonotoneMaxSweeps;
    max_sweeps = std::max(max_sweeps, est.sweeps_run);
  }
  return {monotone == kMonotoneInstances && converged == kMonotoneInstances,
          std::to_string(monotone) + "/" + std::to_string(kMonotoneInstances) + " monotone, " +
              std::to_string(converged) + " converged, max " + std::to_string(max_sweeps) + " sweeps"};
}

// 3 ------------------------------------------------------------------------

ExperimentSpec snr_trend_spec() {
  ExperimentSpec spec;
  spec.scene.nx = 3;
  spec.chanest.snr_db = {5.0, 10.0, 15.0, 20.0, 25.0};
  spec.chanest.M = {4, 6};
  spec.chanest.ny = {3};
  spec.chanest.Mt = {1};
  spec.chanest.convergence_trace = false;
  spec.trials = 30;
  return spec;
}

Outcome snr_trend() {
  const auto rs = run_chanest_campaign(snr_trend_spec());
  std::vector<double> m4;
  double m4_15 = 0.0, m6_15 = 0.0;
  for (const auto& r : rs) {
    if (r.M == 4) m4.push_back(r.ne_mean);
    if (r.snr_db == 15.0) (r.M == 4 ? m4_15 : m6_15) = r.ne_mean;
  }
  bool decreasing = m4.size() == 5;
  for (std::size_t k = 1; k < m4.size(); ++k) decreasing = decreasing && m4[k] < m4[k - 1];
  std::string d = "M=4 NE";
  for (double v : m4) d += " " + fmt(v);
  d += "; 15 dB M=6 " + fmt(m6_15) + " vs M=4 " + fmt(m4_15);
  return {decreasing && m6_15 <= m4_15, d};
}

// 4 ------------------------------------------------------------------------

Outcome efficiency_arithmetic() {
  int checked = 0, bad = 0;
  for (int M = 2; M <= 6; ++M) {
    for (int Mt = 1; Mt < M; ++Mt) {
      for (int N = 1; N <= 6; ++N) {
        const auto s = build_schedule(M, Mt, N, N * Mt, 1.0);
        long binom = 1;
        for (int i = 1; i <= Mt; ++i) binom = binom * (M - Mt + i) / i;
        long products = 0;
        for (const auto& sf : s.subframes) products += static_cast<long>(sf.tx.size()) * static_cast<long>(sf.rx.size());
        const long cost = pilot_cost_minimal(s);
        const bool counts = s.P() == binom && products == Mt * (M - Mt) * binom &&
                            count_product_estimates_per_row(s) == products && cost == binom * N * Mt;
        // products / (cost * M(M-1)/2) == 2(M - Mt) / (N M (M - 1)), cross-multiplied in integers
        const bool ratio = products * 2L * N * M * (M - 1) == 2L * (M - Mt) * cost * M * (M - 1);
        const bool closed = channel_estimation_efficiency(M, Mt, N) == 2.0 * (M - Mt) / (double(N) * M * (M - 1));
        ++checked;
        if (!(counts && ratio && closed)) ++bad;
      }
    }
  }
  return {bad == 0, std::to_string(checked - bad) + "/" + std::to_string(checked) + " (M, Mt, N) cases exact"};
}

// 5 ------------------------------------------------------------------------

Outcome bqp_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(5);
  int bb_ok = 0, dk_ok = 0;
  for (int t = 0; t < kBqpInstances; ++t) {
    const CMatrix A = rng.complex_normal_matrix(kBqpN, kBqpN);
    const CMatrix R = (A + A.adjoint()) / 2.0;
    const auto bb = quad_binary_max(R);
    const auto bf = quad_binary_brute_force(R);
    double oracle = -std::numeric_limits<double>::infinity();
    for (std::uint64_t m = 0; m < (1U << kBqpN); ++m) oracle = std::max(oracle, direct_value(R, signs_from_mask(m, kBqpN)));
    if (bb.value == bf.value && bb.delta == bf.delta && std::abs(bb.value - oracle) <= 1e-12 * (1 + std::abs(oracle)))
      ++bb_ok;
  }
  for (int t = 0; t < kBqpInstances; ++t) {
    const CVector v = rng.complex_normal_vector(kBqpN);
    const CMatrix W = rng.complex_normal_matrix(kBqpN, kBqpN);
    const RatioProblem prob{v * v.adjoint(), W.adjoint() * W + 0.01 * CMatrix::Identity(kBqpN, kBqpN)};
    const auto res = dinkelbach_solve(prob);
    bool monotone = true;
    for (std::size_t k = 1; k < res.y_history.size(); ++k) monotone = monotone && res.y_history[k] >= res.y_history[k - 1];
    double best = -std::numeric_limits<double>::infinity();
    for (std::uint64_t m = 0; m < (1U << (kBqpN - 1)); ++m) {
      const SignVector d = signs_from_mask(m << 1, kBqpN);
      best = std::max(best, prob.ratio(d));
    }
    if (monotone && res.converged && res.ratio == best) ++dk_ok;
  }
  const double t = seconds_since(t0);
  return {bb_ok == kBqpInstances && dk_ok == kBqpInstances && t < kBqpRuntimeS,
          "B&B " + std::to_string(bb_ok) + "/" + std::to_string(kBqpInstances) + ", Dinkelbach " +
              std::to_string(dk_ok) + "/" + std::to_string(kBqpInstances) + ", " + fmt(t) + " s"};
}

// 6 ------------------------------------------------------------------------

Outcome ilp_equivalence() {
  Rng rng(6);
  int ok = 0;
  double worst = 0.0;
  for (int t = 0; t < kIlpInstances; ++t) {
    const CMatrix A = rng.complex_normal_matrix(kIlpN, kIlpN);
    const CMatrix R = (A + A.adjoint()) / 2.0;
    const auto ilp = linearize(R);
    const auto sol = solve_ilp(ilp);
    const auto q = quad_binary_brute_force(R);
    const double err = std::abs(sol.objective + ilp.constant - q.value) / (1.0 + std::abs(q.value));
    worst = std::max(worst, err);
    if (ilp_feasible(ilp, sol.u, sol.uu) && sol.delta() == q.delta && err <= kIlpRelTol) ++ok;
  }
  return {ok == kIlpInstances, std::to_string(ok) + "/" + std::to_string(kIlpInstances) +
                                   " same maximizer, worst relative gap " + fmt(worst)};
}

// 7 ------------------------------------------------------------------------

struct WaveInstance {
  CMatrix G_hat;
  std::vector<SignVector> delta;
  std::vector<CVector> a;
  std::vector<cd> alpha;
  RVector p;
  int L = 8;
  double sigma2 = 1.0;
  DistanceContext ctx;
};

WaveInstance random_wave_instance(Rng& rng, int N, int M, int I, int L, double sigma2) {
  WaveInstance in;
  in.G_hat = rng.complex_normal_matrix(N, M);
  for (int i = 0; i < I; ++i) {
    SignVector d(N);
    for (int n = 0; n < N; ++n) d(n) = rng.uniform() < 0.5 ? -1 : 1;
    in.delta.push_back(d);
    in.a.push_back(rng.unit_modulus_vector(N));
    in.alpha.push_back(rng.complex_normal());
  }
  in.p = RVector::NullaryExpr(I, [&](Eigen::Index) { return 0.05 + rng.uniform(); });
  in.p /= in.p.sum();
  in.L = L;
  in.sigma2 = sigma2;
  in.ctx = make_distance_context(in.G_hat, in.delta, in.a, in.alpha, in.p, L, sigma2);
  return in;
}

Outcome distance_oracle() {
  Rng rng(7);
  int ok = 0;
  double worst = 0.0;
  for (int t = 0; t < kOracleInstances; ++t) {
    const auto in = random_wave_instance(rng, 6, 3, 3, 8, 0.1 + rng.uniform());
    const CVector theta = rng.unit_modulus_vector(6);
    const CVector x = rng.complex_normal_vector(3);
    const CMatrix Q = theta * theta.adjoint();
    const CMatrix X = x.replicate(1, in.L);
    std::vector<CMatrix> Y;
    for (int i = 0; i < 3; ++i) {
      const CMatrix Gi = signs_as_complex(in.delta[i]).asDiagonal() * in.G_hat;
      const CMatrix Th = theta.asDiagonal();
      Y.push_back(in.alpha[i] * Gi.transpose() * Th * in.a[i] * in.a[i].transpose() * Th * Gi * X);
    }
    bool all = true;
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) {
        const double want = (Y[i] - Y[j]).squaredNorm() / in.sigma2;
        const double err = std::abs(pair_distance(in.ctx, Q, x, i, j) - want) / want;
        worst = std::max(worst, err);
        all = all && err < kOracleRelTol;
      }
    ok += all;
  }
  return {ok == kOracleInstances,
          std::to_string(ok) + "/" + std::to_string(kOracleInstances) + " instances, worst relative error " + fmt(worst)};
}

// 8 ------------------------------------------------------------------------

Outcome penalty_bcd_contract() {
  Rng rng(8);
  int monotone = 0, feasible = 0;
  double worst_xi = 0.0;
  for (int t = 0; t < kBcdInstances; ++t) {
    const int N = 4 + t % 5;
    const auto in = random_wave_instance(rng, N, 3, 3, 8, 1.0);
    WaveoptOptions opt;
    opt.power = 50.0;
    bool ok = true;
    double prev = 0.0;
    int outer_seen = 0;
    const auto res = optimize_waveform(in.ctx, rng.unit_modulus_vector(N), rng.complex_normal_vector(3), opt,
                                       [&](const WaveEvent& e) {
                                         if (e.kind == WaveEvent::Kind::OuterIteration) return;
                                         const double v = penalized_objective(in.ctx, *e.state);
                                         // rho changes between outer iterations, which changes the objective itself
                                         if (e.outer != outer_seen) {
                                           outer_seen = e.outer;
                                           prev = v;
                                           return;
                                         }
                                         if (v < prev - kBcdSlackRel * (std::abs(prev) + 1.0)) ok = false;
                                         prev = v;
                                       });
    monotone += ok;
    const double n2 = static_cast<double>(N) * N;
    const double lift = res.state.theta.dot(res.state.Q * res.state.theta).real();
    worst_xi = std::max(worst_xi, res.xi);
    feasible += res.xi < kBcdXiMax && lift >= (1.0 - kBcdXiMax) * n2;
  }
  return {monotone == kBcdInstances && feasible == kBcdInstances,
          std::to_string(monotone) + "/" + std::to_string(kBcdInstances) + " monotone, " + std::to_string(feasible) +
              " feasible, worst xi " + fmt(worst_xi)};
}

// 9 ------------------------------------------------------------------------

ExperimentSpec localization_spec() {
  ExperimentSpec spec;
  spec.scene.M = 4;
  spec.scene.nx = 5;
  spec.scene.ny = 2;
  spec.scene.sigma2_dbm = -120.0;
  spec.scene.target_round_trip_loss = true;
  auto& lp = spec.localization;
  lp.I = 4;
  lp.theta_lo_deg = 52.5;
  lp.theta_hi_deg = 72.5;
  lp.L = 8;
  lp.threshold = 0.95;
  lp.max_cycles = 30;
  lp.success_cycle = 20;
  lp.pb_w = {10.0, 50.0};
  lp.arms = {"optimized", "random"};
  lp.M = {4};
  lp.ny = {2};
  spec.trials = 30;
  return spec;
}

Outcome localization_campaign() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto spec = localization_spec();
  const auto rs = run_localization_campaign(spec);
  const double t = seconds_since(t0);
  const auto* opt50 = find_point(rs, "optimized", 50.0);
  const auto* opt10 = find_point(rs, "optimized", 10.0);
  const auto* rnd50 = find_point(rs, "random", 50.0);
  if (!opt50 || !opt10 || !rnd50) return {false, "missing sweep point"};
  const int sc = spec.localization.success_cycle;
  const double correct = opt50->terminated_correct_by(sc);
  const bool a = correct >= kLocCorrectMin;
  const bool b = opt50->median_cycles() < rnd50->median_cycles();
  bool dominates = opt50->median_cycles() < opt10->median_cycles();
  for (int c = 1; c <= spec.localization.max_cycles; ++c)
    dominates = dominates && opt50->terminated_by(c) >= opt10->terminated_by(c);
  std::string d = "(a) correct by cycle " + std::to_string(sc) + ": " + fmt(correct) + (a ? "" : " FAIL");
  d += "; (b) median cycles optimized " + fmt(opt50->median_cycles()) + " vs random " + fmt(rnd50->median_cycles()) +
       (b ? "" : " FAIL");
  d += "; (c) median 50 W " + fmt(opt50->median_cycles()) + " vs 10 W " + fmt(opt10->median_cycles()) +
       (dominates ? "" : " FAIL");
  d += "; " + fmt(t) + " s";
  return {a && b && dominates && t < kLocRuntimeS, d};
}

// 10 -----------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* subcommand_for(const std::string& stem) {
  if (stem.rfind("chanest", 0) == 0) return "chanest";
  if (stem.rfind("localize", 0) == 0) return "localize";
  if (stem.rfind("bqp", 0) == 0) return "bqp-solve";
  return "full-pipeline";
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "irsloc_acceptance_determinism";
  fs::remove_all(root);
  std::vector<fs::path> configs;
  for (const auto& e : fs::directory_iterator(IRSLOC_CONFIG_DIR))
    if (e.path().extension() == ".json") configs.push_back(e.path());
  std::sort(configs.begin(), configs.end());
  int identical = 0, compared = 0;
  std::string failures;
  for (const auto& cfg : configs) {
    const std::string stem = cfg.stem().string();
    const char* sub = subcommand_for(stem);
    for (const char* run : {"a", "b"}) {
      const fs::path out = root / stem / run;
      fs::create_directories(out);
      const std::string cmd = std::string(IRSLOC_CLI_PATH) + " " + sub + " --desk-scale --config " + cfg.string() +
                              " --out " + out.string() + " >/dev/null 2>&1";
      const int status = std::system(cmd.c_str());
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return {false, stem + ": CLI run failed"};
    }
    for (const auto& f : fs::directory_iterator(root / stem / "a")) {
      ++compared;
      if (slurp(f.path()) == slurp(root / stem / "b" / f.path().filename())) {
        ++identical;
      } else {
        failures += " " + stem + "/" + f.path().filename().string();
      }
    }
  }
  return {compared > 0 && identical == compared, std::to_string(identical) + "/" + std::to_string(compared) +
                                                     " files identical over " + std::to_string(configs.size()) +
                                                     " configs" + failures};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"noiseless end-to-end consistency", noiseless_end_to_end},
      {"coordinate-descent monotonicity", coordinate_descent_monotone},
      {"NE versus SNR trend", snr_trend},
      {"estimation-efficiency arithmetic", efficiency_arithmetic},
      {"sign-problem exactness", bqp_exactness},
      {"ILP linearization equivalence", ilp_equivalence},
      {"pair-distance oracle", distance_oracle},
      {"penalty BCD contract", penalty_bcd_contract},
      {"localization campaign", localization_campaign},
      {"determinism", determinism}};
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << k + 1 << " " << criteria[k].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
