#pragma once

#include "irsloc/bqp.hpp"
#include "irsloc/linalg.hpp"
#include "irsloc/random.hpp"
#include "irsloc/scene.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace irsloc {

/// Uniform partition of [theta_lo, theta_hi) at fixed phi into I angular grids.
/// Each hypothesis is represented by the steering vector at its grid center.
struct HypothesisGrid {
  double theta_lo_deg = 52.5;
  double theta_hi_deg = 72.5;
  double phi_deg = 270.0;
  std::vector<double> center_theta_deg;
  std::vector<CVector> steering;

  int I() const { return static_cast<int>(steering.size()); }

  /// Grid containing theta; throws if theta lies outside the covered range.
  int index_of(double theta_deg) const {
    if (!(theta_deg >= theta_lo_deg && theta_deg < theta_hi_deg))
      throw std::invalid_argument("localize: target angle lies outside the hypothesis grid");
    const double width = (theta_hi_deg - theta_lo_deg) / I();
    return std::min(I() - 1, static_cast<int>((theta_deg - theta_lo_deg) / width));
  }
};

inline HypothesisGrid make_grid(int I, double theta_lo_deg, double theta_hi_deg, double phi_deg,
                                const SceneConfig& cfg) {
  if (I < 1) throw std::invalid_argument("localize: need at least one hypothesis");
  if (!(theta_hi_deg > theta_lo_deg)) throw std::invalid_argument("localize: empty angular range");
  HypothesisGrid g;
  g.theta_lo_deg = theta_lo_deg;
  g.theta_hi_deg = theta_hi_deg;
  g.phi_deg = phi_deg;
  const double width = (theta_hi_deg - theta_lo_deg) / I;
  for (int i = 0; i < I; ++i) {
    const double c = theta_lo_deg + (i + 0.5) * width;
    g.center_theta_deg.push_back(c);
    g.steering.push_back(steering_vector(deg_to_rad(c), deg_to_rad(phi_deg), cfg));
  }
  return g;
}

struct BeliefState {
  int cycle = 0;
  RVector p;
  std::vector<cd> gamma;
  std::vector<SignVector> delta;
  std::vector<cd> alpha;

  int I() const { return static_cast<int>(p.size()); }
  int argmax() const {
    Eigen::Index k = 0;
    p.maxCoeff(&k);
    return static_cast<int>(k);
  }
};

inline BeliefState uniform_belief(int I, int N) {
  BeliefState b;
  b.p = RVector::Constant(I, 1.0 / I);
  b.gamma.assign(I, cd(0.0));
  b.delta.assign(I, SignVector::Ones(N));
  b.alpha.assign(I, cd(0.0));
  return b;
}

/// Waveform x and IRS phases theta used in one cycle, plus the received echo.
struct CycleIO {
  CVector x;
  CVector theta;
  CVector y;  // vec of the M x L echo matrix
};

inline void check_unit_modulus(const CVector& theta, const char* where) {
  for (Eigen::Index n = 0; n < theta.size(); ++n)
    if (std::abs(std::abs(theta(n)) - 1.0) > 1e-9) throw std::invalid_argument(std::string(where) + ": theta must be unit-modulus");
}

/// Y = alpha G^T Theta a a^T Theta G [x, ..., x] + noise, returned as vec(Y).
inline CVector simulate_echo(const Scene& scene, const CVector& x, const CVector& theta, int L, std::uint64_t seed) {
  check_unit_modulus(theta, "simulate_echo");
  if (L < 1) throw std::invalid_argument("simulate_echo: L must be positive");
  const int M = scene.M();
  const CVector ta = theta.cwiseProduct(scene.a);
  const CVector v = scene.G.transpose() * ta;
  const cd s = ta.transpose() * (scene.G * x);
  const CVector col = scene.alpha * s * v;
  Rng rng(seed);
  const double sigma2 = scene.sigma2();
  CVector y(static_cast<Eigen::Index>(M) * L);
  for (int l = 0; l < L; ++l) y.segment(l * M, M) = col + rng.complex_normal_vector(M, sigma2);
  return y;
}

/// Design matrix (Theta (1_L^T (x) a))^T <> G_hat^T, so that
/// Phi delta = vec(G_hat^T diag(delta) Theta (1_L^T (x) a)).
inline CMatrix hypothesis_design(const CMatrix& G_hat, const CVector& theta, const CVector& a, int L) {
  const int N = static_cast<int>(G_hat.rows());
  CMatrix left(L, N);
  const CVector ta = theta.cwiseProduct(a);
  for (int l = 0; l < L; ++l) left.row(l) = ta.transpose();
  return khatri_rao(left, G_hat.transpose());
}

/// gamma minimizing ||y - gamma Phi delta||^2.
inline cd estimate_gamma(const CMatrix& phi, const SignVector& delta, const CVector& y) {
  const CVector pd = phi * signs_as_complex(delta);
  const double e = pd.squaredNorm();
  if (!(e > 0.0)) throw std::domain_error("localize: degenerate hypothesis, Phi delta is zero");
  return pd.dot(y) / e;
}

struct JointMlResult {
  cd gamma;
  SignVector delta;  // canonical, delta(0) = +1
  double residual = 0.0;
  DinkelbachResult dinkelbach;
};

inline JointMlResult joint_ml(const CVector& y, const CVector& theta, const CMatrix& G_hat, const CVector& a, int L,
                              const SignVector& warm = {}, const DinkelbachOptions& opt = {}) {
  const CMatrix phi = hypothesis_design(G_hat, theta, a, L);
  if (phi.rows() != y.size()) throw std::invalid_argument("joint_ml: echo length does not match M L");
  const CVector b = phi.adjoint() * y;
  RatioProblem prob{b * b.adjoint(), phi.adjoint() * phi};
  JointMlResult r;
  r.dinkelbach = dinkelbach_solve(prob, warm, opt);
  r.delta = r.dinkelbach.delta;
  r.gamma = estimate_gamma(phi, r.delta, y);
  r.residual = (y - r.gamma * phi * signs_as_complex(r.delta)).squaredNorm();
  return r;
}

/// Expected echo gamma Phi delta under one hypothesis.
inline CVector expected_echo(const CMatrix& G_hat, const CVector& theta, const CVector& a, int L,
                             const SignVector& delta, cd gamma) {
  return gamma * hypothesis_design(G_hat, theta, a, L) * signs_as_complex(delta);
}

struct BayesUpdate {
  RVector p;
  bool underflow = false;
};

/// p'(i) proportional to p(i) exp(-residual_i / sigma2), evaluated in the log domain.
inline BayesUpdate bayes_update(const RVector& prior, const std::vector<double>& residuals, double sigma2) {
  if (static_cast<Eigen::Index>(residuals.size()) != prior.size())
    throw std::invalid_argument("bayes_update: one residual per hypothesis is required");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("bayes_update: noise power must be positive");
  const int I = static_cast<int>(prior.size());
  RVector logw(I);
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < I; ++i) {
    logw(i) = prior(i) > 0.0 ? std::log(prior(i)) - residuals[i] / sigma2 : -std::numeric_limits<double>::infinity();
    mx = std::max(mx, logw(i));
  }
  BayesUpdate out;
  if (!std::isfinite(mx)) {
    out.p = prior;
    out.underflow = true;
    return out;
  }
  out.p.resize(I);
  for (int i = 0; i < I; ++i) out.p(i) = std::exp(logw(i) - mx);
  const double s = out.p.sum();
  if (!(s > 0.0) || !std::isfinite(s)) {
    out.p = prior;
    out.underflow = true;
    return out;
  }
  out.p /= s;
  return out;
}

/// alpha = gamma / (a^T Theta diag(delta) G_hat x); empty when the denominator vanishes.
inline std::optional<cd> estimate_alpha(cd gamma, const CVector& theta, const SignVector& delta, const CMatrix& G_hat,
                                        const CVector& x, const CVector& a) {
  const CVector gx = signs_as_complex(delta).cwiseProduct(G_hat * x);
  const cd den = a.cwiseProduct(theta).transpose() * gx;
  const double scale = a.cwiseAbs().sum() * gx.cwiseAbs().maxCoeff();
  if (!(std::abs(den) > 1e-12 * scale) || !std::isfinite(std::abs(den))) return std::nullopt;
  return gamma / den;
}

struct HypothesisDiagnostics {
  double probability = 0.0;
  double residual = 0.0;
  cd gamma;
  cd alpha;
  bool alpha_flagged = false;
  int dinkelbach_iterations = 0;
};

struct CycleOptions {
  int L = 8;
  DinkelbachOptions dinkelbach;
};

struct CycleResult {
  BeliefState belief;
  CycleIO io;
  std::vector<HypothesisDiagnostics> diagnostics;
  bool underflow = false;
};

/// Noise power used by the likelihood. With a noiseless model the residuals are
/// compared on a scale far below the echo energy instead.
inline double likelihood_noise_power(double sigma2, const CVector& y) {
  if (sigma2 > 0.0) return sigma2;
  const double e = y.squaredNorm() / std::max<Eigen::Index>(1, y.size());
  return std::max(1e-9 * e, std::numeric_limits<double>::min());
}

inline CycleResult run_cycle(const Scene& scene, const HypothesisGrid& grid, const BeliefState& belief,
                             const CMatrix& G_hat, const CVector& x, const CVector& theta, std::uint64_t noise_seed,
                             const CycleOptions& opt = {}) {
  if (grid.I() != belief.I()) throw std::invalid_argument("run_cycle: belief and grid disagree on I");
  CycleResult out;
  out.io = {x, theta, simulate_echo(scene, x, theta, opt.L, noise_seed)};
  const int I = grid.I();
  std::vector<double> residuals(I);
  out.belief = belief;
  out.diagnostics.resize(I);
  for (int i = 0; i < I; ++i) {
    const auto ml = joint_ml(out.io.y, theta, G_hat, grid.steering[i], opt.L, belief.delta[i], opt.dinkelbach);
    residuals[i] = ml.residual;
    out.belief.gamma[i] = ml.gamma;
    out.belief.delta[i] = ml.delta;
    auto& d = out.diagnostics[i];
    d.residual = ml.residual;
    d.gamma = ml.gamma;
    d.dinkelbach_iterations = ml.dinkelbach.iterations;
    if (auto a = estimate_alpha(ml.gamma, theta, ml.delta, G_hat, x, grid.steering[i])) {
      out.belief.alpha[i] = *a;
    } else {
      d.alpha_flagged = true;
    }
    d.alpha = out.belief.alpha[i];
  }
  const auto upd = bayes_update(belief.p, residuals, likelihood_noise_power(scene.sigma2(), out.io.y));
  out.belief.p = upd.p;
  out.belief.cycle = belief.cycle + 1;
  out.underflow = upd.underflow;
  for (int i = 0; i < I; ++i) out.diagnostics[i].probability = upd.p(i);
  return out;
}

struct TerminationDecision {
  bool terminate = false;
  int winner = -1;
  CMatrix G_resolved;  // diag(delta_winner) G_hat, filled on termination
};

inline TerminationDecision check_termination(const BeliefState& belief, double threshold, const CMatrix& G_hat) {
  TerminationDecision d;
  const int w = belief.argmax();
  if (belief.p(w) >= threshold) {
    d.terminate = true;
    d.winner = w;
    d.G_resolved = belief.delta[w].cast<double>().cast<cd>().asDiagonal() * G_hat;
  }
  return d;
}

}  // namespace irsloc
