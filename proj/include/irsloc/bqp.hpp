#pragma once

#include "irsloc/linalg.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace irsloc {

inline constexpr int kDefaultExactCap = 24;

/// Real pair weights of delta^H R delta = sum_i r_ii + sum_{i>j} 2 Re{r_ij} delta_i delta_j.
struct QuadForm {
  int N = 0;
  double constant = 0.0;  // sum_i Re r_ii
  RMatrix w;              // w(i, j) = 2 Re r_ij for i > j, zero elsewhere

  double value(const SignVector& d) const {
    double v = constant;
    for (int i = 1; i < N; ++i)
      for (int j = 0; j < i; ++j) v += w(i, j) * d(i) * d(j);
    return v;
  }
  /// Absolute slack used when comparing objective values.
  double slack() const {
    return 1e-12 * (std::abs(constant) + w.cwiseAbs().sum() + std::numeric_limits<double>::min());
  }
};

inline QuadForm make_quad_form(const CMatrix& R) {
  if (R.rows() != R.cols()) throw std::invalid_argument("bqp: R must be square");
  const int N = static_cast<int>(R.rows());
  QuadForm q;
  q.N = N;
  q.w = RMatrix::Zero(N, N);
  for (int i = 0; i < N; ++i) {
    q.constant += R(i, i).real();
    for (int j = 0; j < i; ++j) q.w(i, j) = 2.0 * R(i, j).real();
  }
  return q;
}

inline SignVector canonical_sign(SignVector d) {
  if (d.size() > 0 && d(0) < 0) d = -d;
  return d;
}

inline double quadratic_value(const CMatrix& R, const SignVector& d) { return make_quad_form(R).value(d); }

struct BqpResult {
  SignVector delta;
  double value = 0.0;
  long nodes = 0;
};

/// Exhaustive search over {-1,1}^N with delta(0) = +1. Candidates are visited in
/// lexicographic order with +1 before -1, so ties resolve to the earliest one.
inline BqpResult quad_binary_brute_force(const CMatrix& R) {
  const QuadForm q = make_quad_form(R);
  const int N = q.N;
  if (N > 30) throw std::invalid_argument("bqp: brute force limited to N <= 30");
  BqpResult best;
  best.value = -std::numeric_limits<double>::infinity();
  if (N == 0) {
    best.value = q.constant;
    return best;
  }
  const double slack = q.slack();
  SignVector d(N);
  const std::uint64_t count = std::uint64_t{1} << (N - 1);
  for (std::uint64_t m = 0; m < count; ++m) {
    d(0) = 1;
    for (int k = 1; k < N; ++k) d(k) = ((m >> (N - 1 - k)) & 1U) ? -1 : 1;
    const double v = q.value(d);
    ++best.nodes;
    if (best.delta.size() == 0 || v > best.value + slack) {
      best.value = v;
      best.delta = d;
    }
  }
  return best;
}

namespace detail {

class SignBranchAndBound {
 public:
  explicit SignBranchAndBound(const QuadForm& q) : q_(q), N_(q.N), slack_(q.slack()) {
    // pair_tail_[k] = sum of |w_ij| over pairs with both indices >= k.
    pair_tail_.assign(N_ + 1, 0.0);
    for (int k = N_ - 1; k >= 0; --k) {
      double row = 0.0;
      for (int i = k + 1; i < N_; ++i) row += std::abs(q_.w(i, k));
      pair_tail_[k] = pair_tail_[k + 1] + row;
    }
    lin_.assign(N_, 0.0);
    cur_ = SignVector::Ones(N_);
  }

  BqpResult solve(const SignVector& warm) {
    best_delta_ = canonical_sign(warm);
    // Start just below the warm value so an equal, lexicographically earlier
    // candidate still replaces it.
    best_ = q_.value(best_delta_) - 2.0 * slack_;
    nodes_ = 0;
    assign(0, 1, q_.constant);
    BqpResult r;
    r.delta = best_delta_;
    r.value = q_.value(best_delta_);
    r.nodes = nodes_;
    return r;
  }

 private:
  void assign(int k, int s, double fixed) {
    cur_(k) = s;
    const double f = fixed + s * lin_[k];
    for (int j = k + 1; j < N_; ++j) lin_[j] += q_.w(j, k) * s;
    descend(k + 1, f);
    for (int j = k + 1; j < N_; ++j) lin_[j] -= q_.w(j, k) * s;
  }

  void descend(int k, double fixed) {
    ++nodes_;
    if (k == N_) {
      if (fixed > best_ + slack_) {
        best_ = fixed;
        best_delta_ = cur_;
      }
      return;
    }
    double bound = fixed + pair_tail_[k];
    for (int j = k; j < N_; ++j) bound += std::abs(lin_[j]);
    if (bound <= best_ + slack_) return;
    assign(k, 1, fixed);
    assign(k, -1, fixed);
  }

  const QuadForm& q_;
  int N_;
  double slack_;
  std::vector<double> pair_tail_;
  std::vector<double> lin_;
  SignVector cur_;
  SignVector best_delta_;
  double best_ = 0.0;
  long nodes_ = 0;
};

}  // namespace detail

/// Global maximizer of delta^H R delta over {-1,1}^N by depth-first
/// branch-and-bound on the sign variables, canonicalized to delta(0) = +1.
inline BqpResult quad_binary_max(const CMatrix& R, const SignVector& warm = {}, int exact_cap = kDefaultExactCap) {
  const QuadForm q = make_quad_form(R);
  if (q.N > exact_cap) throw std::invalid_argument("bqp: problem size exceeds the exact-solve cap");
  if (q.N == 0) return {SignVector(), q.constant, 0};
  SignVector start = warm.size() == q.N ? warm : SignVector(SignVector::Ones(q.N));
  return detail::SignBranchAndBound(q).solve(start);
}

/// Binary linearization of the sign problem with delta_i = 2 upsilon_i - 1 and
/// upsilon_ij standing in for upsilon_i upsilon_j.
struct IlpInstance {
  int N = 0;
  RMatrix c;              // c(i, j) = Re r_ij for i > j
  double constant = 0.0;  // sum_i r_ii + sum_{i>j} 2 Re r_ij, dropped from the ILP objective

  double objective(const Eigen::VectorXi& u, const Eigen::MatrixXi& uu) const {
    double v = 0.0;
    for (int i = 1; i < N; ++i)
      for (int j = 0; j < i; ++j) v += c(i, j) * (8.0 * uu(i, j) - 4.0 * (u(i) + u(j)));
    return v;
  }
};

inline IlpInstance linearize(const CMatrix& R) {
  if (R.rows() != R.cols()) throw std::invalid_argument("bqp: R must be square");
  IlpInstance ilp;
  ilp.N = static_cast<int>(R.rows());
  ilp.c = RMatrix::Zero(ilp.N, ilp.N);
  for (int i = 0; i < ilp.N; ++i) {
    ilp.constant += R(i, i).real();
    for (int j = 0; j < i; ++j) {
      ilp.c(i, j) = R(i, j).real();
      ilp.constant += 2.0 * R(i, j).real();
    }
  }
  return ilp;
}

/// Linking constraints upsilon_ij >= u_i + u_j - 1, upsilon_ij <= u_i, upsilon_ij <= u_j, all binary.
inline bool ilp_feasible(const IlpInstance& ilp, const Eigen::VectorXi& u, const Eigen::MatrixXi& uu) {
  for (int i = 0; i < ilp.N; ++i) {
    if (u(i) != 0 && u(i) != 1) return false;
    for (int j = 0; j < i; ++j) {
      const int v = uu(i, j);
      if (v != 0 && v != 1) return false;
      if (v < u(i) + u(j) - 1 || v > u(i) || v > u(j)) return false;
    }
  }
  return true;
}

struct IlpSolution {
  Eigen::VectorXi u;
  Eigen::MatrixXi uu;
  double objective = 0.0;

  SignVector delta() const { return canonical_sign(SignVector((2 * u.array() - 1).matrix())); }
};

namespace detail {

class IlpBranchAndBound {
 public:
  explicit IlpBranchAndBound(const IlpInstance& ilp) : ilp_(ilp), N_(ilp.N) {
    u_ = Eigen::VectorXi::Zero(N_);
    slack_ = 1e-12 * (ilp_.c.cwiseAbs().sum() + std::numeric_limits<double>::min());
  }

  IlpSolution solve() {
    best_ = -std::numeric_limits<double>::infinity();
    branch(0);
    return sol_;
  }

 private:
  // Sum over terms of the best value each term can still take given the
  // fixed variables; admissible because terms are maximized independently.
  double bound(int k) const {
    double b = 0.0;
    for (int i = 1; i < N_; ++i) {
      for (int j = 0; j < i; ++j) {
        const double c = ilp_.c(i, j);
        const bool fi = i < k, fj = j < k;
        if (fi && fj) {
          b += c * (8.0 * u_(i) * u_(j) - 4.0 * (u_(i) + u_(j)));
        } else if (fi || fj) {
          const int a = fi ? u_(i) : u_(j);
          b += -4.0 * a * c + std::max(0.0, c * (8.0 * a - 4.0));
        } else {
          b += std::max(0.0, -4.0 * c);
        }
      }
    }
    return b;
  }

  void leaf() {
    // Pick each upsilon_ij among the binaries allowed by the linking constraints.
    Eigen::MatrixXi uu = Eigen::MatrixXi::Zero(N_, N_);
    for (int i = 1; i < N_; ++i) {
      for (int j = 0; j < i; ++j) {
        int chosen = -1;
        double best_term = -std::numeric_limits<double>::infinity();
        for (int v = 0; v <= 1; ++v) {
          if (v < u_(i) + u_(j) - 1 || v > u_(i) || v > u_(j)) continue;
          const double term = 8.0 * ilp_.c(i, j) * v;
          if (term > best_term) {
            best_term = term;
            chosen = v;
          }
        }
        uu(i, j) = chosen;
      }
    }
    const double obj = ilp_.objective(u_, uu);
    if (obj > best_ + slack_) {
      best_ = obj;
      sol_ = {u_, uu, obj};
    }
  }

  void branch(int k) {
    if (k == N_) {
      leaf();
      return;
    }
    if (bound(k) <= best_ + slack_) return;
    for (int v = 1; v >= 0; --v) {
      u_(k) = v;
      branch(k + 1);
    }
    u_(k) = 0;
  }

  const IlpInstance& ilp_;
  int N_;
  double slack_ = 0.0;
  Eigen::VectorXi u_;
  double best_ = 0.0;
  IlpSolution sol_;
};

}  // namespace detail

/// Exact ILP solve by branch-and-bound over the upsilon_i.
inline IlpSolution solve_ilp(const IlpInstance& ilp) {
  if (ilp.N == 0) return {Eigen::VectorXi(), Eigen::MatrixXi(), 0.0};
  return detail::IlpBranchAndBound(ilp).solve();
}

/// max delta^H Xi1 delta / delta^H Xi2 delta over sign vectors.
struct RatioProblem {
  CMatrix Xi1;
  CMatrix Xi2;

  void validate() const {
    if (Xi1.rows() != Xi1.cols() || Xi2.rows() != Xi2.cols() || Xi1.rows() != Xi2.rows())
      throw std::invalid_argument("bqp: Xi1 and Xi2 must be square and of equal size");
  }
  double numerator(const SignVector& d) const { return quadratic_value(Xi1, d); }
  double denominator(const SignVector& d) const { return quadratic_value(Xi2, d); }
  double ratio(const SignVector& d) const {
    const double den = denominator(d);
    if (!(den > 0.0)) throw std::domain_error("bqp: ratio denominator is not positive");
    return numerator(d) / den;
  }
};

struct DinkelbachResult {
  SignVector delta;
  double ratio = 0.0;
  std::vector<double> y_history;
  int iterations = 0;
  bool converged = false;
};

struct DinkelbachOptions {
  double tol = 1e-9;
  int max_iters = 50;
  int exact_cap = kDefaultExactCap;
};

inline DinkelbachResult dinkelbach_solve(const RatioProblem& prob, const SignVector& delta_init = {},
                                         const DinkelbachOptions& opt = {}) {
  prob.validate();
  const int N = static_cast<int>(prob.Xi1.rows());
  DinkelbachResult res;
  res.delta = canonical_sign(delta_init.size() == N ? delta_init : SignVector(SignVector::Ones(N)));
  double y = prob.ratio(res.delta);
  res.y_history.push_back(y);
  for (int t = 1; t <= opt.max_iters; ++t) {
    res.iterations = t;
    const CMatrix R = prob.Xi1 - y * prob.Xi2;
    const BqpResult inner = quad_binary_max(R, res.delta, opt.exact_cap);
    const double y_next = prob.ratio(inner.delta);
    if (!(y_next > y)) {
      // No sign vector improves on the current ratio: delta is a global maximizer.
      res.converged = true;
      break;
    }
    res.delta = inner.delta;
    res.y_history.push_back(y_next);
    const bool small = y_next - y < opt.tol * std::max(std::abs(y), std::numeric_limits<double>::min());
    y = y_next;
    if (small) {
      res.converged = true;
      break;
    }
  }
  res.ratio = y;
  return res;
}

}  // namespace irsloc
