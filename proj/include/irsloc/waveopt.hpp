#pragma once

#include "irsloc/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <functional>
#include <limits>
#include <vector>

namespace irsloc {

/// Per-hypothesis data entering the weighted inter-hypothesis distance.
///
/// With G_i = diag(delta_i) G_hat, V_i = G_i^T diag(a_i) and D_i = diag(a_i) G_i,
/// the noiseless echo under hypothesis i is alpha_i (theta^T D_i x) V_i theta per
/// snapshot, and A_ij = V_j^H V_i.
struct DistanceContext {
  int N = 0;
  int M = 0;
  int L = 1;
  double sigma2 = 1.0;
  std::vector<CMatrix> G;  // G_i, N x M
  std::vector<CVector> a;
  std::vector<cd> alpha;
  RMatrix beta;                 // beta(i, j) = p_i p_j, i != j
  std::vector<CMatrix> D;       // N x M
  std::vector<CMatrix> V;       // M x N
  std::vector<CMatrix> A_mat;   // A_ij stored at i * I + j
  Eigen::MatrixXcd w;           // weights of the ordered-pair expansion

  int I() const { return static_cast<int>(a.size()); }
  const CMatrix& A(int i, int j) const { return A_mat[static_cast<std::size_t>(i) * I() + j]; }
  double scale() const { return L / sigma2; }

  /// B_ij = conj(b_j) b_i^T with b_i = D_i x.
  CMatrix B(int i, int j, const CVector& x) const {
    const CVector bi = D[i] * x, bj = D[j] * x;
    return bj.conjugate() * bi.transpose();
  }
};

/// `sigma2` <= 0 (noiseless model) is replaced by 1, which only rescales the objective.
inline DistanceContext make_distance_context(const CMatrix& G_hat, const std::vector<SignVector>& delta,
                                             const std::vector<CVector>& a, const std::vector<cd>& alpha,
                                             const RVector& p, int L, double sigma2) {
  const int I = static_cast<int>(a.size());
  if (static_cast<int>(delta.size()) != I || static_cast<int>(alpha.size()) != I || p.size() != I)
    throw std::invalid_argument("waveopt: per-hypothesis inputs disagree in length");
  if (L < 1) throw std::invalid_argument("waveopt: L must be positive");
  DistanceContext ctx;
  ctx.N = static_cast<int>(G_hat.rows());
  ctx.M = static_cast<int>(G_hat.cols());
  ctx.L = L;
  ctx.sigma2 = sigma2 > 0.0 ? sigma2 : 1.0;
  ctx.a = a;
  ctx.alpha = alpha;
  ctx.beta = RMatrix::Zero(I, I);
  for (int i = 0; i < I; ++i) {
    if (p(i) < 0.0) throw std::invalid_argument("waveopt: negative hypothesis probability");
    for (int j = 0; j < I; ++j)
      if (i != j) ctx.beta(i, j) = p(i) * p(j);
  }
  for (int i = 0; i < I; ++i) {
    if (a[i].size() != ctx.N || delta[i].size() != ctx.N) throw std::invalid_argument("waveopt: dimension mismatch");
    ctx.G.push_back(signs_as_complex(delta[i]).asDiagonal() * G_hat);
    ctx.D.push_back(a[i].asDiagonal() * ctx.G.back());
    ctx.V.push_back(ctx.G.back().transpose() * a[i].asDiagonal());
  }
  ctx.A_mat.reserve(static_cast<std::size_t>(I) * I);
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < I; ++j) ctx.A_mat.push_back(ctx.V[j].adjoint() * ctx.V[i]);
  ctx.w = Eigen::MatrixXcd::Zero(I, I);
  for (int i = 0; i < I; ++i) {
    double s = 0.0;
    for (int j = 0; j < I; ++j)
      if (j != i) {
        s += ctx.beta(i, j);
        ctx.w(i, j) = -alpha[i] * std::conj(alpha[j]) * ctx.beta(i, j);
      }
    ctx.w(i, i) = std::norm(alpha[i]) * s;
  }
  return ctx;
}

/// phi_ij evaluated literally as (L/sigma2)(|a_i|^2 tr(Q^H A_ii Q B_ii)
/// - 2 Re{alpha_i alpha_j^* tr(Q^H A_ij Q B_ij)} + |a_j|^2 tr(Q^H A_jj Q B_jj)).
inline double pair_distance(const DistanceContext& ctx, const CMatrix& Q, const CVector& x, int i, int j) {
  auto tr = [&](int p, int q) { return (Q.adjoint() * ctx.A(p, q) * Q * ctx.B(p, q, x)).trace(); };
  const cd ai = ctx.alpha[i], aj = ctx.alpha[j];
  const double v = std::norm(ai) * tr(i, i).real() - 2.0 * (ai * std::conj(aj) * tr(i, j)).real() +
                   std::norm(aj) * tr(j, j).real();
  return ctx.scale() * v;
}

/// sum_{i<j} beta_ij phi_ij, computed as sum over ordered pairs of w_ij z_i^H A_ij z_j with z_i = Q conj(b_i).
inline double weighted_distance(const DistanceContext& ctx, const CMatrix& Q, const CVector& x) {
  const int I = ctx.I();
  std::vector<CVector> z(I);
  for (int i = 0; i < I; ++i) z[i] = Q * (ctx.D[i] * x).conjugate();
  cd total = 0.0;
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < I; ++j)
      if (ctx.w(i, j) != cd(0.0)) total += ctx.w(i, j) * z[i].dot(ctx.A(i, j) * z[j]);
  return ctx.scale() * total.real();
}

inline double weighted_distance(const DistanceContext& ctx, const CVector& theta, const CVector& x) {
  return weighted_distance(ctx, CMatrix(theta * theta.adjoint()), x);
}

struct OptimizerState {
  CMatrix Q;
  CVector theta;
  CVector x;
  double rho = 1.0;
};

inline double lifting_violation(const OptimizerState& s) {
  const double n2 = static_cast<double>(s.theta.size()) * s.theta.size();
  return (n2 - s.theta.dot(s.Q * s.theta).real()) / n2;
}

/// F + (1/(2 rho)) (Re{theta^H Q theta} - N^2).
inline double penalized_objective(const DistanceContext& ctx, const OptimizerState& s) {
  const double n2 = static_cast<double>(s.theta.size()) * s.theta.size();
  return weighted_distance(ctx, s.Q, s.x) + (s.theta.dot(s.Q * s.theta).real() - n2) / (2.0 * s.rho);
}

struct WaveEvent {
  enum class Kind { QEntry, X, ThetaEntry, InnerIteration, OuterIteration };
  Kind kind;
  int outer;
  int inner;
  const OptimizerState* state;
};

using WaveObserver = std::function<void(const WaveEvent&)>;

/// One sweep over all entries of Q (row-major). Each entry becomes the
/// unit-modulus maximizer of the penalized objective with the others fixed.
inline void update_Q(OptimizerState& s, const DistanceContext& ctx, const WaveObserver& obs = {}, int outer = 0,
                     int inner = 0) {
  const int I = ctx.I(), N = ctx.N;
  const double k = ctx.scale();
  std::vector<CVector> bc(I), z(I), h(I);
  std::vector<CVector> b(I);
  for (int i = 0; i < I; ++i) {
    b[i] = ctx.D[i] * s.x;
    bc[i] = b[i].conjugate();
    z[i] = s.Q * bc[i];
  }
  for (int i = 0; i < I; ++i) {
    h[i] = CVector::Zero(N);
    for (int j = 0; j < I; ++j)
      if (ctx.w(i, j) != cd(0.0)) h[i] += ctx.w(i, j) * (ctx.A(i, j) * z[j]);
  }
  const double pen = 1.0 / (4.0 * s.rho);
  for (int m = 0; m < N; ++m) {
    for (int n = 0; n < N; ++n) {
      cd grad = 0.0, kappa = 0.0;
      for (int i = 0; i < I; ++i) {
        grad += b[i](n) * h[i](m);
        for (int j = 0; j < I; ++j)
          if (ctx.w(i, j) != cd(0.0)) kappa += ctx.w(i, j) * ctx.A(i, j)(m, m) * bc[j](n) * b[i](n);
      }
      const cd q_old = s.Q(m, n);
      const cd arg = k * (grad - kappa.real() * q_old) + pen * s.theta(m) * std::conj(s.theta(n));
      const cd q_new = unit_phase(arg, q_old);
      const cd dq = q_new - q_old;
      if (dq == cd(0.0)) continue;
      s.Q(m, n) = q_new;
      for (int j = 0; j < I; ++j) {
        const cd dz = dq * bc[j](n);
        z[j](m) += dz;
        for (int i = 0; i < I; ++i)
          if (ctx.w(i, j) != cd(0.0)) h[i] += (ctx.w(i, j) * dz) * ctx.A(i, j).col(m);
      }
      if (obs) obs({WaveEvent::Kind::QEntry, outer, inner, &s});
    }
  }
}

/// Hermitian Z with F(x) = x^H Z x for the current Q.
inline CMatrix waveform_matrix(const DistanceContext& ctx, const CMatrix& Q) {
  const int I = ctx.I();
  CMatrix Z = CMatrix::Zero(ctx.M, ctx.M);
  for (int i = 0; i < I; ++i)
    for (int j = 0; j < I; ++j)
      if (ctx.w(i, j) != cd(0.0)) {
        const CMatrix core = (Q.adjoint() * ctx.A(i, j) * Q).transpose();
        Z += ctx.w(i, j) * (ctx.D[j].adjoint() * core * ctx.D[i]);
      }
  Z *= ctx.scale();
  return (Z + Z.adjoint()) / 2.0;
}

/// x = sqrt(P_b) times the dominant eigenvector of Z, largest entry made real-positive.
inline CVector dominant_waveform(const CMatrix& Z, double power) {
  if (!all_finite(Z)) throw std::runtime_error("waveopt: waveform matrix is not finite");
  Eigen::SelfAdjointEigenSolver<CMatrix> es(Z);
  if (es.info() != Eigen::Success) throw std::runtime_error("waveopt: eigen-decomposition failed");
  CVector v = es.eigenvectors().col(Z.rows() - 1);
  Eigen::Index k = 0;
  v.cwiseAbs().maxCoeff(&k);
  v *= std::conj(unit_phase(v(k), cd(1.0)));
  return std::sqrt(power) * v;
}

inline void update_x(OptimizerState& s, const DistanceContext& ctx, double power, const WaveObserver& obs = {},
                     int outer = 0, int inner = 0) {
  s.x = dominant_waveform(waveform_matrix(ctx, s.Q), power);
  if (obs) obs({WaveEvent::Kind::X, outer, inner, &s});
}

/// One sweep of theta(m) <- phase(P(m,:) theta - P(m,m) theta(m)), P = (Q + Q^H)/2.
inline void update_theta(OptimizerState& s, const WaveObserver& obs = {}, int outer = 0, int inner = 0) {
  const CMatrix P = (s.Q + s.Q.adjoint()) / 2.0;
  for (Eigen::Index m = 0; m < s.theta.size(); ++m) {
    const cd arg = P.row(m).transpose().cwiseProduct(s.theta).sum() - P(m, m) * s.theta(m);
    s.theta(m) = unit_phase(arg, s.theta(m));
    if (obs) obs({WaveEvent::Kind::ThetaEntry, outer, inner, &s});
  }
}

struct WaveoptOptions {
  double power = 1.0;  // P_b in watts
  double epsilon = 1e-7;
  double c_pen = 0.5;
  double inner_tol = 1e-6;
  double rho0_scale = 1e-2;
  int max_outer = 60;
  int max_inner = 200;
};

struct TraceRow {
  int outer;
  double rho;
  double xi;
  double penalized;
  double distance;
};

struct WaveoptResult {
  CVector x;
  CVector theta;
  double xi = 0.0;
  bool feasible = false;
  double initial_distance = 0.0;
  double final_distance = 0.0;
  bool kept_initial = false;
  int outer_iterations = 0;
  std::vector<TraceRow> trace;
  OptimizerState state;
};

/// Penalty method with three-block coordinate ascent over (Q, x, theta).
/// The starting point (theta, x) is returned instead when it scores higher.
inline WaveoptResult optimize_waveform(const DistanceContext& ctx, const CVector& theta0, const CVector& x0,
                                       const WaveoptOptions& opt = {}, const WaveObserver& obs = {}) {
  if (!(opt.epsilon > 0.0)) throw std::invalid_argument("waveopt: epsilon must be positive");
  if (!(opt.c_pen > 0.0 && opt.c_pen < 1.0)) throw std::invalid_argument("waveopt: c_pen must lie in (0, 1)");
  if (!(opt.power > 0.0)) throw std::invalid_argument("waveopt: power must be positive");
  if (theta0.size() != ctx.N || x0.size() != ctx.M) throw std::invalid_argument("waveopt: initial point has wrong size");

  OptimizerState s;
  s.theta = theta0;
  s.Q = theta0 * theta0.adjoint();
  s.x = x0;
  const double x_norm2 = x0.squaredNorm();
  if (x_norm2 > 0.0) s.x *= std::sqrt(opt.power / x_norm2);

  WaveoptResult res;
  res.initial_distance = weighted_distance(ctx, s.theta, s.x);
  s.rho = opt.rho0_scale * (std::abs(res.initial_distance) + 1.0);

  for (int outer = 1; outer <= opt.max_outer; ++outer) {
    double prev = penalized_objective(ctx, s);
    for (int inner = 1; inner <= opt.max_inner; ++inner) {
      update_Q(s, ctx, obs, outer, inner);
      update_x(s, ctx, opt.power, obs, outer, inner);
      update_theta(s, obs, outer, inner);
      if (obs) obs({WaveEvent::Kind::InnerIteration, outer, inner, &s});
      const double cur = penalized_objective(ctx, s);
      const double rel = (cur - prev) / std::max(std::abs(prev), std::numeric_limits<double>::min());
      prev = cur;
      if (rel < opt.inner_tol) break;
    }
    const double xi = lifting_violation(s);
    res.trace.push_back({outer, s.rho, xi, prev, weighted_distance(ctx, s.theta, s.x)});
    res.outer_iterations = outer;
    if (obs) obs({WaveEvent::Kind::OuterIteration, outer, 0, &s});
    if (xi < opt.epsilon) {
      res.feasible = true;
      break;
    }
    s.rho *= opt.c_pen;
  }
  res.xi = lifting_violation(s);
  res.state = s;
  res.final_distance = weighted_distance(ctx, s.theta, s.x);
  if (res.final_distance >= res.initial_distance) {
    res.x = s.x;
    res.theta = s.theta;
  } else {
    res.x = x0 * (x_norm2 > 0.0 ? std::sqrt(opt.power / x_norm2) : 1.0);
    res.theta = theta0;
    res.kept_initial = true;
  }
  return res;
}

}  // namespace irsloc
