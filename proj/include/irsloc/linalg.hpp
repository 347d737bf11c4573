#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace irsloc {

using cd = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

/// Entries are +1 or -1.
using SignVector = Eigen::VectorXi;

inline constexpr double kPi = std::numbers::pi;

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }

inline CVector signs_as_complex(const SignVector& s) { return s.cast<double>().cast<cd>(); }

/// Column-wise Kronecker product: column k of the result is a.col(k) (x) b.col(k).
inline CMatrix khatri_rao(const CMatrix& a, const CMatrix& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("khatri_rao: column count mismatch");
  }
  CMatrix out(a.rows() * b.rows(), a.cols());
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      out.col(k).segment(i * b.rows(), b.rows()) = a(i, k) * b.col(k);
    }
  }
  return out;
}

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

/// Column-major vectorization.
inline CVector vec(const CMatrix& m) {
  return Eigen::Map<const CVector>(m.data(), m.size());
}

inline bool is_hermitian(const CMatrix& m, double tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline bool all_finite(const CMatrix& m) {
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    if (!std::isfinite(m.data()[k].real()) || !std::isfinite(m.data()[k].imag())) return false;
  }
  return true;
}

/// Unit-modulus phase of z; returns `fallback` when z is zero.
inline cd unit_phase(cd z, cd fallback) {
  const double r = std::abs(z);
  if (!(r > 0.0) || !std::isfinite(r)) return fallback;
  return z / r;
}

}  // namespace irsloc
