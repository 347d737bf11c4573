#pragma once

#include "irsloc/linalg.hpp"
#include "irsloc/pilot.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace irsloc {

/// Averaged estimates of g_{n,a} g_{n,b}; h[n](a, b) is symmetric in (a, b).
struct PairProducts {
  std::vector<CMatrix> h;       // N matrices of size M x M, diagonal unused
  Eigen::MatrixXi counts;       // M x M, number of estimates averaged per pair

  int N() const { return static_cast<int>(h.size()); }
  int M() const { return h.empty() ? 0 : static_cast<int>(h.front().rows()); }
};

inline PairProducts pairwise_products(const ObservationSet& obs, const std::vector<CVector>& omega_hat) {
  const auto& s = obs.schedule;
  if (static_cast<int>(omega_hat.size()) != s.P())
    throw std::invalid_argument("pairwise_products: one LS estimate per subframe is required");
  PairProducts pp;
  pp.h.assign(s.N, CMatrix::Zero(s.M, s.M));
  pp.counts = Eigen::MatrixXi::Zero(s.M, s.M);
  for (int p = 0; p < s.P(); ++p) {
    const auto& sf = s.subframes[p];
    for (int ia = 0; ia < s.Mt; ++ia) {
      for (int ib = 0; ib < s.Mr(); ++ib) {
        const int a = sf.tx[ia], b = sf.rx[ib];
        pp.counts(a, b) += 1;
        pp.counts(b, a) += 1;
        for (int n = 0; n < s.N; ++n) {
          const cd v = omega_hat[p](omega_index(n, ia, ib, s.Mt, s.Mr()));
          pp.h[n](a, b) += v;
          pp.h[n](b, a) += v;
        }
      }
    }
  }
  for (int a = 0; a < s.M; ++a) {
    for (int b = 0; b < s.M; ++b) {
      if (a == b) continue;
      if (pp.counts(a, b) == 0) throw std::runtime_error("pairwise_products: schedule leaves an antenna pair uncovered");
      for (int n = 0; n < s.N; ++n) pp.h[n](a, b) /= static_cast<double>(pp.counts(a, b));
    }
  }
  return pp;
}

namespace detail {

/// Geometric mean of estimates that agree up to noise, computed relative to the
/// first one so every factor stays near the principal branch. Estimates are first
/// sign-aligned with the reference, since each principal square root may land on
/// either of the two opposite roots.
inline cd aligned_geometric_mean(const std::vector<cd>& values) {
  const cd ref = values.front();
  double log_mag = 0.0;
  double phase = 0.0;
  for (cd v : values) {
    if ((v * std::conj(ref)).real() < 0.0) v = -v;
    const cd ratio = v / ref;
    log_mag += std::log(std::abs(ratio));
    phase += std::arg(ratio);
  }
  const double k = static_cast<double>(values.size());
  return ref * std::polar(std::exp(log_mag / k), phase / k);
}

inline std::optional<cd> anchor_estimate(const CMatrix& h, int l, double floor) {
  const int M = static_cast<int>(h.rows());
  std::vector<cd> est;
  for (int p = 0; p < M; ++p) {
    for (int q = p + 1; q < M; ++q) {
      if (p == l || q == l) continue;
      if (std::abs(h(p, q)) <= floor) continue;
      est.push_back(std::sqrt(h(l, p) * h(l, q) / h(p, q)));
    }
  }
  if (est.empty()) return std::nullopt;
  const cd g = aligned_geometric_mean(est);
  if (!(std::abs(g) > floor) || !std::isfinite(std::abs(g))) return std::nullopt;
  return g;
}

}  // namespace detail

/// Geometric-mean initialization of every row from averaged pair products.
/// Each row is recovered up to a global sign.
inline CMatrix initialize_channel(const PairProducts& pp, int anchor = 0) {
  const int N = pp.N(), M = pp.M();
  if (M < 3) throw std::invalid_argument("initialize_channel: needs M >= 3");
  if (anchor < 0 || anchor >= M) throw std::invalid_argument("initialize_channel: anchor out of range");
  CMatrix G0 = CMatrix::Zero(N, M);
  for (int n = 0; n < N; ++n) {
    const CMatrix& h = pp.h[n];
    const double floor = 1e-12 * std::max(h.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());

    int l = anchor;
    auto g_l = detail::anchor_estimate(h, l, floor);
    if (!g_l) {
      // Try the other columns, strongest pair products first.
      std::vector<int> order;
      for (int c = 0; c < M; ++c)
        if (c != anchor) order.push_back(c);
      const RVector energy = h.cwiseAbs().rowwise().sum();
      std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return energy(x) > energy(y); });
      for (int c : order) {
        g_l = detail::anchor_estimate(h, c, floor);
        if (g_l) {
          l = c;
          break;
        }
      }
    }
    if (!g_l) continue;  // degenerate row, left at zero
    G0(n, l) = *g_l;
    for (int a = 0; a < M; ++a)
      if (a != l) G0(n, a) = h(l, a) / *g_l;
  }
  return G0;
}

struct RefineOptions {
  int max_sweeps = 300;
  double tol = 1e-8;
};

struct RefineEvent {
  enum class Kind { EntryUpdate, SweepEnd };
  Kind kind;
  int sweep;
  int n;
  int a;
  const CMatrix* G;
  double objective;  // only filled for SweepEnd
};

using RefineObserver = std::function<void(const RefineEvent&)>;

struct ChannelEstimate {
  CMatrix G_hat;
  bool sign_ambiguous = true;
  int sweeps_run = 0;
  bool converged = false;
  double final_objective = 0.0;
  std::vector<double> objective_history;  // entry 0 is the initial point
};

/// Weight of the ML objective: R_omega^-1 when the noise power is known,
/// otherwise phi^H phi (same minimizer, R_omega is proportional to its inverse).
inline CMatrix objective_weight(const ObservationSet& obs) {
  return obs.sigma2 > 0.0 ? CMatrix(obs.gram / (2.0 * obs.sigma2)) : obs.gram;
}

/// J = sum_p (omega_hat_p - omega_p(G))^H W (omega_hat_p - omega_p(G)).
inline double chanest_objective(const ObservationSet& obs, const std::vector<CVector>& omega_hat, const CMatrix& G) {
  const CMatrix W = objective_weight(obs);
  double J = 0.0;
  for (int p = 0; p < obs.schedule.P(); ++p) {
    const CVector r = omega_hat[p] - true_omega(G, obs.schedule, p);
    J += (r.adjoint() * W * r)(0, 0).real();
  }
  return J;
}

namespace detail {

struct Coord {
  int index;
  cd coef;
};

/// Positions of omega^(p) that contain g_{n,a}, with the cofactor multiplying it.
inline std::vector<Coord> coordinate_support(const PilotSchedule& s, int p, int n, int a, const CMatrix& G) {
  std::vector<Coord> out;
  const auto& sf = s.subframes[p];
  const int Mr = s.Mr();
  for (int ia = 0; ia < s.Mt; ++ia) {
    if (sf.tx[ia] != a) continue;
    for (int ib = 0; ib < Mr; ++ib) out.push_back({omega_index(n, ia, ib, s.Mt, Mr), G(n, sf.rx[ib])});
  }
  for (int ib = 0; ib < Mr; ++ib) {
    if (sf.rx[ib] != a) continue;
    for (int ia = 0; ia < s.Mt; ++ia) out.push_back({omega_index(n, ia, ib, s.Mt, Mr), G(n, sf.tx[ia])});
  }
  return out;
}

}  // namespace detail

/// Element-wise coordinate descent on J. Each g_{n,a} is replaced by the exact
/// minimizer of J with all other entries fixed; entries are visited row-major.
inline ChannelEstimate refine_channel(const ObservationSet& obs, const std::vector<CVector>& omega_hat,
                                      const CMatrix& G0, const RefineOptions& opt = {},
                                      const RefineObserver& observer = {}) {
  const auto& s = obs.schedule;
  if (G0.rows() != s.N || G0.cols() != s.M) throw std::invalid_argument("refine_channel: G0 has wrong shape");
  const CMatrix W = objective_weight(obs);
  const int P = s.P();

  ChannelEstimate est;
  est.G_hat = G0;
  CMatrix& G = est.G_hat;

  std::vector<CVector> resid(P), wresid(P);
  for (int p = 0; p < P; ++p) {
    resid[p] = omega_hat[p] - true_omega(G, s, p);
    wresid[p] = W * resid[p];
  }
  auto objective = [&]() {
    double J = 0.0;
    for (int p = 0; p < P; ++p) J += resid[p].dot(wresid[p]).real();
    return J;
  };

  double J_prev = objective();
  est.objective_history.push_back(J_prev);
  for (int sweep = 1; sweep <= opt.max_sweeps; ++sweep) {
    for (int n = 0; n < s.N; ++n) {
      for (int a = 0; a < s.M; ++a) {
        const cd g_old = G(n, a);
        cd num = 0.0, den = 0.0;
        std::vector<std::vector<detail::Coord>> support(P);
        for (int p = 0; p < P; ++p) {
          support[p] = detail::coordinate_support(s, p, n, a, G);
          for (const auto& u : support[p]) {
            num += std::conj(u.coef) * wresid[p](u.index);
            for (const auto& v : support[p]) den += std::conj(u.coef) * W(u.index, v.index) * v.coef;
          }
        }
        // Degenerate coordinate: J does not depend on g_{n,a}.
        if (!(std::abs(den) > 0.0) || !std::isfinite(std::abs(den))) continue;
        num += g_old * den;
        const cd g_new = num / den.real();
        const cd delta = g_new - g_old;
        if (delta == cd(0.0)) continue;
        G(n, a) = g_new;
        for (int p = 0; p < P; ++p) {
          for (const auto& u : support[p]) {
            const cd d = delta * u.coef;
            resid[p](u.index) -= d;
            wresid[p] -= d * W.col(u.index);
          }
        }
        if (observer) observer({RefineEvent::Kind::EntryUpdate, sweep, n, a, &G, 0.0});
      }
    }
    // Refresh the running residuals to avoid drift from the rank-1 updates.
    for (int p = 0; p < P; ++p) {
      resid[p] = omega_hat[p] - true_omega(G, s, p);
      wresid[p] = W * resid[p];
    }
    const double J = objective();
    est.objective_history.push_back(J);
    est.sweeps_run = sweep;
    if (observer) observer({RefineEvent::Kind::SweepEnd, sweep, -1, -1, &G, J});
    const double rel = (J_prev - J) / std::max(std::abs(J_prev), std::numeric_limits<double>::min());
    J_prev = J;
    if (J <= 0.0 || rel < opt.tol) {
      est.converged = true;
      break;
    }
  }
  est.final_objective = J_prev;
  return est;
}

/// Channel estimation pipeline: LS per subframe, averaged products,
/// geometric-mean initialization, coordinate-descent refinement.
inline ChannelEstimate estimate_channel(const ObservationSet& obs, const RefineOptions& opt = {},
                                        const RefineObserver& observer = {}) {
  std::vector<CVector> omega_hat;
  omega_hat.reserve(obs.schedule.P());
  for (int p = 0; p < obs.schedule.P(); ++p) omega_hat.push_back(ls_estimate(obs, p).omega_hat);
  const auto pp = pairwise_products(obs, omega_hat);
  return refine_channel(obs, omega_hat, initialize_channel(pp), opt, observer);
}

/// min over per-row signs of ||diag(delta) G_hat - G||_F / ||G||_F; rows decouple.
inline double normalized_error(const CMatrix& G_hat, const CMatrix& G) {
  if (G_hat.rows() != G.rows() || G_hat.cols() != G.cols())
    throw std::invalid_argument("normalized_error: dimension mismatch");
  const double g_norm = G.norm();
  if (!(g_norm > 0.0)) throw std::domain_error("normalized_error: reference channel has zero norm");
  double err2 = 0.0;
  for (Eigen::Index n = 0; n < G.rows(); ++n) {
    const double plus = (G_hat.row(n) - G.row(n)).squaredNorm();
    const double minus = (G_hat.row(n) + G.row(n)).squaredNorm();
    err2 += std::min(plus, minus);
  }
  return std::sqrt(err2) / g_norm;
}

}  // namespace irsloc
