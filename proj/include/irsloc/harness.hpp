#pragma once

#include "irsloc/chanest.hpp"
#include "irsloc/localize.hpp"
#include "irsloc/pilot.hpp"
#include "irsloc/random.hpp"
#include "irsloc/scene.hpp"
#include "irsloc/waveopt.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace irsloc {

struct ChanestSweep {
  std::vector<double> snr_db{5.0, 10.0, 15.0, 20.0, 25.0};
  std::vector<int> M{4};
  std::vector<int> ny{2};
  std::vector<int> Mt{1};
  int C = 0;  // 0 selects the minimal C = N * Mt
  /// When positive, C is chosen per (M, Mt) so that the total pilot overhead
  /// C * binom(M, Mt) equals the minimal overhead of this reference Mt.
  int overhead_ref_Mt = 0;
  bool convergence_trace = true;
};

struct LocalizationParams {
  int I = 4;
  double theta_lo_deg = 52.5;
  double theta_hi_deg = 72.5;
  double phi_deg = 270.0;
  int L = 8;
  double threshold = 0.95;
  int max_cycles = 30;
  int success_cycle = 20;
  double pilot_snr_db = 20.0;
  std::vector<double> pb_w{50.0};
  std::vector<std::string> arms{"optimized", "random"};
  std::vector<int> M{4};
  std::vector<int> ny{2};
};

struct BqpDemo {
  int N = 10;
};

struct ExperimentSpec {
  std::string name = "experiment";
  SceneConfig scene;
  RefineOptions refine;
  DinkelbachOptions dinkelbach;
  WaveoptOptions waveopt;
  ChanestSweep chanest;
  LocalizationParams localization;
  BqpDemo bqp;
  int trials = 30;
  std::uint64_t master_seed = 1;

  void validate() const {
    if (trials < 1) throw std::invalid_argument("spec: trials must be >= 1");
    if (chanest.snr_db.empty() || chanest.M.empty() || chanest.ny.empty() || chanest.Mt.empty())
      throw std::invalid_argument("spec: chanest sweep axes must be non-empty");
    const auto& l = localization;
    if (l.pb_w.empty() || l.arms.empty() || l.M.empty() || l.ny.empty())
      throw std::invalid_argument("spec: localization sweep axes must be non-empty");
    for (const auto& a : l.arms)
      if (a != "optimized" && a != "random") throw std::invalid_argument("spec: unknown arm '" + a + "'");
    for (double p : l.pb_w)
      if (!(p > 0.0)) throw std::invalid_argument("spec: pb_w entries must be positive");
    if (l.L < 1 || l.max_cycles < 1 || l.I < 1) throw std::invalid_argument("spec: L, I and max_cycles must be positive");
    if (!(l.threshold > 0.0 && l.threshold <= 1.0)) throw std::invalid_argument("spec: threshold must lie in (0, 1]");
    if (chanest.overhead_ref_Mt < 0 || chanest.C < 0) throw std::invalid_argument("spec: chanest C and overhead_ref_Mt must be >= 0");
    if (bqp.N < 1) throw std::invalid_argument("spec: bqp.N must be positive");
    scene.validate();
  }
};

// Stream labels for seed derivation.
enum : std::uint64_t { kSceneStream = 1, kPilotStream = 2, kEchoStream = 3, kInitStream = 4, kRandomArmStream = 5 };

inline std::uint64_t snr_label(double snr_db) { return static_cast<std::uint64_t>(std::llround(snr_db * 1000.0) + (1LL << 40)); }

/// P_t such that SNR_r = P_t L(d_br)^2 / sigma^2.
inline double pilot_power_for_snr(double snr_db, const SceneConfig& cfg) {
  const double pl = path_loss(cfg.bs_irs_distance(), cfg);
  const double s2 = cfg.sigma2_w() > 0.0 ? cfg.sigma2_w() : 1.0;
  return db_to_linear(snr_db) * s2 / (pl * pl);
}

inline SceneConfig with_dims(SceneConfig cfg, int M, int ny) {
  cfg.M = M;
  cfg.ny = ny;
  return cfg;
}

struct ConvergenceRow {
  int sweep;
  double objective;
  double ne;
};

struct ChanestTrial {
  Scene scene;
  ChannelEstimate estimate;
  double ne = 0.0;
  std::vector<ConvergenceRow> trace;
};

inline ChanestTrial run_chanest_trial(const SceneConfig& cfg, int Mt, int C, double snr_db, std::uint64_t scene_seed,
                                      std::uint64_t pilot_seed, const RefineOptions& refine, bool with_trace = false) {
  ChanestTrial t;
  t.scene = synthesize_scene(cfg, scene_seed);
  const int c = C > 0 ? C : cfg.N() * Mt;
  const auto schedule = build_schedule(cfg.M, Mt, cfg.N(), c, pilot_power_for_snr(snr_db, cfg));
  const auto obs = simulate_pilot_round(t.scene, schedule, pilot_seed);
  RefineObserver observer;
  if (with_trace) {
    observer = [&](const RefineEvent& e) {
      if (e.kind == RefineEvent::Kind::SweepEnd) t.trace.push_back({e.sweep, e.objective, normalized_error(*e.G, t.scene.G)});
    };
  }
  t.estimate = estimate_channel(obs, refine, observer);
  t.ne = normalized_error(t.estimate.G_hat, t.scene.G);
  return t;
}

struct ChanestPointResult {
  double snr_db = 0.0;
  int M = 0, N = 0, Mt = 0;
  double ne_mean = 0.0;
  double ne_std = 0.0;
  std::vector<double> ne;
  std::vector<ConvergenceRow> trace;  // first trial only
};

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, v.size() > 1 ? std::sqrt(s / (v.size() - 1)) : 0.0};
}

inline int chanest_pilot_length(const ChanestSweep& sw, int M, int Mt, int N) {
  if (sw.overhead_ref_Mt <= 0) return sw.C;
  const auto ref = static_cast<long>(N) * sw.overhead_ref_Mt * static_cast<long>(combinations(M, sw.overhead_ref_Mt).size());
  const auto per = static_cast<long>(combinations(M, Mt).size());
  if (ref % per != 0) throw std::invalid_argument("harness: pilot overhead cannot be split evenly across subframes");
  return static_cast<int>(ref / per);
}

/// Channels are shared across SNR and Mt values for the same (M, N, trial),
/// pilot noise is drawn per point.
inline std::vector<ChanestPointResult> run_chanest_campaign(const ExperimentSpec& spec) {
  spec.validate();
  std::vector<ChanestPointResult> out;
  const auto& sw = spec.chanest;
  for (int M : sw.M) {
    for (int ny : sw.ny) {
      const SceneConfig cfg = with_dims(spec.scene, M, ny);
      for (int Mt : sw.Mt) {
        for (double snr : sw.snr_db) {
          ChanestPointResult r;
          r.snr_db = snr;
          r.M = M;
          r.N = cfg.N();
          r.Mt = Mt;
          for (int t = 0; t < spec.trials; ++t) {
            const auto tl = static_cast<std::uint64_t>(t);
            const auto scene_seed = derive_seed(spec.master_seed, {kSceneStream, static_cast<std::uint64_t>(M),
                                                                   static_cast<std::uint64_t>(ny), tl});
            const auto pilot_seed = derive_seed(spec.master_seed, {kPilotStream, static_cast<std::uint64_t>(M),
                                                                   static_cast<std::uint64_t>(ny),
                                                                   static_cast<std::uint64_t>(Mt), snr_label(snr), tl});
            auto trial = run_chanest_trial(cfg, Mt, chanest_pilot_length(sw, M, Mt, cfg.N()), snr, scene_seed, pilot_seed, spec.refine,
                                           sw.convergence_trace && t == 0);
            r.ne.push_back(trial.ne);
            if (t == 0) r.trace = std::move(trial.trace);
          }
          std::tie(r.ne_mean, r.ne_std) = mean_std(r.ne);
          out.push_back(std::move(r));
        }
      }
    }
  }
  return out;
}

struct LocPoint {
  std::string arm;
  double pb_w;
  int M;
  int ny;
};

struct DiagnosticRow {
  int trial;
  int cycle;
  int hypothesis;
  double probability;
  double residual;
  double gamma_abs;
  double alpha_abs;
};

struct LocTrialRecord {
  int trial = 0;
  int true_index = 0;
  int cycles_to_threshold = 0;  // max_cycles + 1 when the threshold is never reached
  bool terminated = false;
  int winner = -1;
  bool correct = false;
  double ne = 0.0;
  std::vector<int> argmax;      // per cycle, frozen after termination
  std::vector<double> p_true;   // per cycle, frozen after termination
  std::vector<DiagnosticRow> diagnostics;
  std::vector<double> waveopt_xi;
};

struct LocPointResult {
  LocPoint point;
  int N = 0;
  int max_cycles = 0;
  std::vector<LocTrialRecord> trials;

  /// Fraction of trials whose current decision is the true grid, after each cycle.
  std::vector<double> correct_probability() const {
    std::vector<double> out(max_cycles, 0.0);
    for (const auto& t : trials)
      for (int c = 0; c < max_cycles; ++c) out[c] += t.argmax[c] == t.true_index ? 1.0 : 0.0;
    for (auto& v : out) v /= std::max<std::size_t>(1, trials.size());
    return out;
  }
  /// Fraction of trials that reached the threshold by cycle c (1-based).
  double terminated_by(int c) const {
    double n = 0.0;
    for (const auto& t : trials) n += t.terminated && t.cycles_to_threshold <= c ? 1.0 : 0.0;
    return n / std::max<std::size_t>(1, trials.size());
  }
  double terminated_correct_by(int c) const {
    double n = 0.0;
    for (const auto& t : trials) n += t.terminated && t.correct && t.cycles_to_threshold <= c ? 1.0 : 0.0;
    return n / std::max<std::size_t>(1, trials.size());
  }
  double median_cycles() const {
    std::vector<double> v;
    for (const auto& t : trials) v.push_back(t.cycles_to_threshold);
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t k = v.size() / 2;
    return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
  }
};

inline CVector random_waveform(Rng& rng, int M, double power) {
  CVector x = rng.complex_normal_vector(M);
  return x * std::sqrt(power / x.squaredNorm());
}

/// One Monte Carlo run: channel estimation followed by localization cycles.
inline LocTrialRecord run_localization_trial(const ExperimentSpec& spec, const LocPoint& pt, int trial) {
  const auto& lp = spec.localization;
  const SceneConfig cfg = with_dims(spec.scene, pt.M, pt.ny);
  const auto tl = static_cast<std::uint64_t>(trial);
  const auto M_l = static_cast<std::uint64_t>(pt.M), ny_l = static_cast<std::uint64_t>(pt.ny);
  const auto scene_seed = derive_seed(spec.master_seed, {kSceneStream, M_l, ny_l, tl});
  const auto pilot_seed = derive_seed(spec.master_seed, {kPilotStream, M_l, ny_l, 1, snr_label(lp.pilot_snr_db), tl});
  const auto ch = run_chanest_trial(cfg, 1, 0, lp.pilot_snr_db, scene_seed, pilot_seed, spec.refine);
  const Scene& scene = ch.scene;
  const CMatrix& G_hat = ch.estimate.G_hat;

  const HypothesisGrid grid = make_grid(lp.I, lp.theta_lo_deg, lp.theta_hi_deg, lp.phi_deg, cfg);
  LocTrialRecord rec;
  rec.trial = trial;
  rec.ne = ch.ne;
  rec.true_index = grid.index_of(cfg.target_theta_deg);
  rec.cycles_to_threshold = lp.max_cycles + 1;

  Rng init_rng(derive_seed(spec.master_seed, {kInitStream, M_l, ny_l, tl}));
  CVector theta = init_rng.unit_modulus_vector(cfg.N());
  CVector x = CVector::Constant(cfg.M, cd(std::sqrt(pt.pb_w / cfg.M)));

  BeliefState belief = uniform_belief(grid.I(), cfg.N());
  CycleOptions copt;
  copt.L = lp.L;
  copt.dinkelbach = spec.dinkelbach;
  WaveoptOptions wopt = spec.waveopt;
  wopt.power = pt.pb_w;

  for (int c = 1; c <= lp.max_cycles; ++c) {
    if (rec.terminated) {
      rec.argmax.push_back(rec.argmax.back());
      rec.p_true.push_back(rec.p_true.back());
      continue;
    }
    const auto noise_seed = derive_seed(spec.master_seed, {kEchoStream, M_l, ny_l, tl, static_cast<std::uint64_t>(c)});
    const CycleResult cr = run_cycle(scene, grid, belief, G_hat, x, theta, noise_seed, copt);
    belief = cr.belief;
    for (int i = 0; i < grid.I(); ++i) {
      const auto& d = cr.diagnostics[i];
      rec.diagnostics.push_back({trial, c, i, d.probability, d.residual, std::abs(d.gamma), std::abs(d.alpha)});
    }
    rec.argmax.push_back(belief.argmax());
    rec.p_true.push_back(belief.p(rec.true_index));
    const auto dec = check_termination(belief, lp.threshold, G_hat);
    if (dec.terminate) {
      rec.terminated = true;
      rec.winner = dec.winner;
      rec.correct = dec.winner == rec.true_index;
      rec.cycles_to_threshold = c;
      continue;
    }
    if (c == lp.max_cycles) break;
    if (pt.arm == "optimized") {
      const auto ctx = make_distance_context(G_hat, belief.delta, grid.steering, belief.alpha, belief.p, lp.L,
                                             scene.sigma2());
      const auto wr = optimize_waveform(ctx, theta, x, wopt);
      rec.waveopt_xi.push_back(wr.xi);
      theta = wr.theta;
      x = wr.x;
    } else {
      Rng rng(derive_seed(spec.master_seed, {kRandomArmStream, M_l, ny_l, tl, static_cast<std::uint64_t>(c)}));
      theta = rng.unit_modulus_vector(cfg.N());
      x = random_waveform(rng, cfg.M, pt.pb_w);
    }
  }
  if (!rec.terminated) rec.winner = belief.argmax();
  return rec;
}

inline std::vector<LocPoint> localization_points(const ExperimentSpec& spec) {
  std::vector<LocPoint> pts;
  const auto& lp = spec.localization;
  for (const auto& arm : lp.arms)
    for (double pb : lp.pb_w)
      for (int M : lp.M)
        for (int ny : lp.ny) pts.push_back({arm, pb, M, ny});
  return pts;
}

using TrialCallback = std::function<void(const LocPoint&, const LocTrialRecord&)>;

inline std::vector<LocPointResult> run_localization_campaign(const ExperimentSpec& spec,
                                                             const TrialCallback& on_trial = {}) {
  spec.validate();
  std::vector<LocPointResult> out;
  for (const auto& pt : localization_points(spec)) {
    LocPointResult r;
    r.point = pt;
    r.N = spec.scene.nx * pt.ny;
    r.max_cycles = spec.localization.max_cycles;
    for (int t = 0; t < spec.trials; ++t) {
      r.trials.push_back(run_localization_trial(spec, pt, t));
      if (on_trial) on_trial(pt, r.trials.back());
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline const LocPointResult* find_point(const std::vector<LocPointResult>& rs, const std::string& arm, double pb_w) {
  for (const auto& r : rs)
    if (r.point.arm == arm && r.point.pb_w == pb_w) return &r;
  return nullptr;
}

// ---------------------------------------------------------------------------
// CSV output

inline std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& schema, const std::vector<std::string>& header)
      : out_(path), schema_(schema) {
    if (!out_) throw std::runtime_error("harness: cannot open " + path + " for writing");
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << "\n";
  }
  ~CsvWriter() { out_ << "# manifest=manifest.json schema=" << schema_ << "\n"; }

  template <class... Ts>
  void row(const Ts&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
    out_ << "\n";
  }

 private:
  static std::string cell(double v) { return fmt_num(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(long v) { return std::to_string(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  static std::string cell(bool v) { return v ? "1" : "0"; }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }

  std::ofstream out_;
  std::string schema_;
};

inline void write_chanest_csv(const std::string& path, const std::vector<ChanestPointResult>& rs) {
  CsvWriter w(path, "irsloc.chanest.v1", {"snr_db", "M", "N", "Mt", "ne_mean", "ne_std"});
  for (const auto& r : rs) w.row(r.snr_db, r.M, r.N, r.Mt, r.ne_mean, r.ne_std);
}

inline void write_convergence_csv(const std::string& path, const std::vector<ChanestPointResult>& rs) {
  CsvWriter w(path, "irsloc.chanest_convergence.v1", {"snr_db", "M", "N", "Mt", "sweep", "objective", "ne"});
  for (const auto& r : rs)
    for (const auto& c : r.trace) w.row(r.snr_db, r.M, r.N, r.Mt, c.sweep, c.objective, c.ne);
}

inline void write_localization_csvs(const std::string& dir, const std::vector<LocPointResult>& rs) {
  {
    CsvWriter w(dir + "/localize_cycles.csv", "irsloc.localize_cycles.v1",
                {"arm", "pb_w", "M", "N", "cycle", "correct_prob", "terminated_frac", "mean_p_true"});
    for (const auto& r : rs) {
      const auto cp = r.correct_probability();
      for (int c = 1; c <= r.max_cycles; ++c) {
        double mp = 0.0;
        for (const auto& t : r.trials) mp += t.p_true[c - 1];
        mp /= std::max<std::size_t>(1, r.trials.size());
        w.row(r.point.arm, r.point.pb_w, r.point.M, r.N, c, cp[c - 1], r.terminated_by(c), mp);
      }
    }
  }
  {
    CsvWriter w(dir + "/localize_trials.csv", "irsloc.localize_trials.v1",
                {"arm", "pb_w", "M", "N", "trial", "cycles_to_threshold", "terminated", "winner", "true_index",
                 "correct", "ne"});
    for (const auto& r : rs)
      for (const auto& t : r.trials)
        w.row(r.point.arm, r.point.pb_w, r.point.M, r.N, t.trial, t.cycles_to_threshold, t.terminated, t.winner,
              t.true_index, t.correct, t.ne);
  }
  {
    CsvWriter w(dir + "/localize_diagnostics.csv", "irsloc.localize_diagnostics.v1",
                {"arm", "pb_w", "M", "N", "trial", "cycle", "hypothesis", "probability", "residual", "gamma_abs",
                 "alpha_abs"});
    for (const auto& r : rs)
      for (const auto& t : r.trials)
        for (const auto& d : t.diagnostics)
          w.row(r.point.arm, r.point.pb_w, r.point.M, r.N, d.trial, d.cycle, d.hypothesis, d.probability, d.residual,
                d.gamma_abs, d.alpha_abs);
  }
}

}  // namespace irsloc
