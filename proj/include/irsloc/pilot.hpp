#pragma once

#include "irsloc/linalg.hpp"
#include "irsloc/random.hpp"
#include "irsloc/scene.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

namespace irsloc {

/// One transmit/receive split of the BS antennas (0-based indices).
struct AntennaSplit {
  std::vector<int> tx;
  std::vector<int> rx;
};

/// Full-duplex differential pilot schedule.
///
/// Each subframe spends two slots per differential observation: the IRS holds
/// -f(l) in the first slot and +f(l) in the second, so the phase difference is
/// 2 f(l). f(l)_n = exp(j 2 pi n l / C) and the pilot vector x(l) carries
/// frequencies N * ia, which makes the stacked design matrix a scaled partial DFT
/// with orthogonal columns. Patterns and pilots are shared by all subframes.
struct PilotSchedule {
  int M = 0;
  int Mt = 0;
  int N = 0;
  int C = 0;
  double pilot_power_w = 0.0;
  std::vector<AntennaSplit> subframes;
  CMatrix delta_theta;    // N x C, column l = phase difference of observation l
  CMatrix theta_first;    // N x C, IRS state of the first slot of pair l
  CMatrix theta_second;   // N x C, IRS state of the second slot of pair l
  CMatrix pilot_symbols;  // Mt x C, column l = x_A(l), held for both slots of pair l

  int Mr() const { return M - Mt; }
  int P() const { return static_cast<int>(subframes.size()); }
  int slots_per_subframe() const { return 2 * C; }
  /// Length of omega^(p) = vec(G_A^T <> G_B^T).
  int omega_size() const { return N * Mt * Mr(); }
};

/// Position of g_{n,A[ia]} g_{n,B[ib]} inside omega^(p).
inline int omega_index(int n, int ia, int ib, int Mt, int Mr) { return n * Mt * Mr + ia * Mr + ib; }

inline std::vector<std::vector<int>> combinations(int M, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  if (k > M || k <= 0) return out;
  while (true) {
    out.push_back(idx);
    int i = k - 1;
    while (i >= 0 && idx[i] == M - k + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  return out;
}

inline PilotSchedule build_schedule(int M, int Mt, int N, int C, double pilot_power_w) {
  if (Mt < 1 || Mt >= M) throw std::invalid_argument("build_schedule: need 1 <= Mt < M");
  if (N < 1) throw std::invalid_argument("build_schedule: N must be positive");
  if (C < N * Mt) throw std::invalid_argument("build_schedule: identifiability requires C >= N*Mt");
  if (!(pilot_power_w > 0.0)) throw std::invalid_argument("build_schedule: pilot power must be positive");

  PilotSchedule s;
  s.M = M;
  s.Mt = Mt;
  s.N = N;
  s.C = C;
  s.pilot_power_w = pilot_power_w;
  for (const auto& tx : combinations(M, Mt)) {
    AntennaSplit split;
    split.tx = tx;
    for (int m = 0; m < M; ++m)
      if (std::find(tx.begin(), tx.end(), m) == tx.end()) split.rx.push_back(m);
    s.subframes.push_back(std::move(split));
  }

  s.theta_second.resize(N, C);
  s.pilot_symbols.resize(Mt, C);
  const double amp = std::sqrt(pilot_power_w / Mt);
  for (int l = 0; l < C; ++l) {
    for (int n = 0; n < N; ++n) s.theta_second(n, l) = std::polar(1.0, 2.0 * kPi * n * l / C);
    for (int ia = 0; ia < Mt; ++ia)
      s.pilot_symbols(ia, l) = std::polar(amp, 2.0 * kPi * static_cast<double>(N * ia) * l / C);
  }
  s.theta_first = -s.theta_second;
  s.delta_theta = s.theta_second - s.theta_first;
  return s;
}

/// Product estimates per BS-IRS row and pilot cost, counted from the schedule.
inline long count_product_estimates_per_row(const PilotSchedule& s) {
  long total = 0;
  for (const auto& sf : s.subframes) total += static_cast<long>(sf.tx.size() * sf.rx.size());
  return total;
}

/// Differential pilot observations spent, counted at the minimal C = N * Mt.
inline long pilot_cost_minimal(const PilotSchedule& s) { return static_cast<long>(s.P()) * s.N * s.Mt; }

/// Closed-form efficiency 2(M - Mt) / (N M (M - 1)).
inline double channel_estimation_efficiency(int M, int Mt, int N) {
  return 2.0 * (M - Mt) / (static_cast<double>(N) * M * (M - 1));
}

/// Stacked design matrix: block row l is dtheta(l)^T (x) (x_A(l)^T (x) I_{M-Mt}).
inline CMatrix build_design_matrix(const PilotSchedule& s, int /*subframe*/ = 0) {
  const int Mr = s.Mr();
  const CMatrix eye = CMatrix::Identity(Mr, Mr);
  CMatrix phi(s.C * Mr, s.omega_size());
  for (int l = 0; l < s.C; ++l) {
    const CMatrix m_a = kron(s.pilot_symbols.col(l).transpose(), eye);
    phi.middleRows(l * Mr, Mr) = kron(s.delta_theta.col(l).transpose(), m_a);
  }
  return phi;
}

/// Stacked differential observations of every subframe plus the shared LS model.
struct ObservationSet {
  PilotSchedule schedule;
  std::vector<CVector> y_tilde;  // per subframe, length C (M - Mt)
  CMatrix phi;                   // shared design matrix
  CMatrix gram;                  // phi^H phi
  CMatrix r_omega;               // 2 sigma^2 (phi^H phi)^-1
  double sigma2 = 0.0;

  const CMatrix& design(int /*p*/) const { return phi; }
};

inline CMatrix ls_covariance(const CMatrix& phi, double sigma2) {
  const CMatrix gram = phi.adjoint() * phi;
  return 2.0 * sigma2 * gram.inverse();
}

inline void check_full_column_rank(const CMatrix& phi) {
  Eigen::FullPivLU<CMatrix> lu(phi);
  if (lu.rank() < phi.cols()) throw std::runtime_error("pilot: design matrix is rank deficient");
}

inline ObservationSet make_observation_set(PilotSchedule schedule, std::vector<CVector> y_tilde,
                                           CMatrix phi, double sigma2) {
  check_full_column_rank(phi);
  ObservationSet obs;
  obs.schedule = std::move(schedule);
  obs.y_tilde = std::move(y_tilde);
  obs.gram = phi.adjoint() * phi;
  obs.r_omega = 2.0 * sigma2 * obs.gram.inverse();
  obs.phi = std::move(phi);
  obs.sigma2 = sigma2;
  return obs;
}

/// Simulates every subframe of the schedule, including static scatter and
/// self-interference paths and fresh receiver noise in each slot, and forms the
/// slot differences.
inline ObservationSet simulate_pilot_round(const Scene& scene, const PilotSchedule& s, std::uint64_t seed) {
  if (scene.M() != s.M || scene.N() != s.N)
    throw std::invalid_argument("simulate_pilot_round: schedule does not match scene dimensions");
  const int Mr = s.Mr();
  const double sigma2 = scene.sigma2();
  std::vector<CVector> y_tilde;
  y_tilde.reserve(s.subframes.size());
  for (int p = 0; p < s.P(); ++p) {
    const auto& sf = s.subframes[p];
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(p)}));
    CMatrix g_a(s.N, s.Mt), g_b(s.N, Mr);
    for (int i = 0; i < s.Mt; ++i) g_a.col(i) = scene.G.col(sf.tx[i]);
    for (int i = 0; i < Mr; ++i) g_b.col(i) = scene.G.col(sf.rx[i]);
    const CMatrix h_ref = rng.complex_normal_matrix(Mr, s.Mt, scene.config.sigma2_ref());
    const CMatrix h_si = rng.complex_normal_matrix(Mr, s.Mt, scene.config.sigma2_si());
    const CMatrix h_static = h_ref + h_si;

    CVector y(s.C * Mr);
    for (int l = 0; l < s.C; ++l) {
      const CVector x = s.pilot_symbols.col(l);
      const CVector gx = g_a * x;
      const CVector y1 = g_b.transpose() * s.theta_first.col(l).cwiseProduct(gx) + h_static * x +
                         rng.complex_normal_vector(Mr, sigma2);
      const CVector y2 = g_b.transpose() * s.theta_second.col(l).cwiseProduct(gx) + h_static * x +
                         rng.complex_normal_vector(Mr, sigma2);
      y.segment(l * Mr, Mr) = y2 - y1;
    }
    y_tilde.push_back(std::move(y));
  }
  return make_observation_set(s, std::move(y_tilde), build_design_matrix(s), sigma2);
}

/// True omega^(p) = vec(G_A^T <> G_B^T) for subframe p.
inline CVector true_omega(const CMatrix& G, const PilotSchedule& s, int p) {
  const auto& sf = s.subframes.at(p);
  CMatrix ga_t(s.Mt, s.N), gb_t(s.Mr(), s.N);
  for (int i = 0; i < s.Mt; ++i) ga_t.row(i) = G.col(sf.tx[i]).transpose();
  for (int i = 0; i < s.Mr(); ++i) gb_t.row(i) = G.col(sf.rx[i]).transpose();
  return vec(khatri_rao(ga_t, gb_t));
}

struct LsEstimate {
  CVector omega_hat;
  CMatrix covariance;
};

inline LsEstimate ls_estimate(const CMatrix& phi, const CVector& y, double sigma2) {
  Eigen::ColPivHouseholderQR<CMatrix> qr(phi);
  if (qr.rank() < phi.cols()) throw std::runtime_error("ls_estimate: design matrix is rank deficient");
  return {qr.solve(y), ls_covariance(phi, sigma2)};
}

inline LsEstimate ls_estimate(const ObservationSet& obs, int p) {
  return ls_estimate(obs.design(p), obs.y_tilde.at(p), obs.sigma2);
}

}  // namespace irsloc
