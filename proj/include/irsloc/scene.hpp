#pragma once

#include "irsloc/linalg.hpp"
#include "irsloc/random.hpp"

#include <array>
#include <cstdint>

namespace irsloc {

/// Geometry and propagation parameters of one simulated deployment.
///
/// IRS elements are enumerated x-major: element (ix, iy) has index ix * ny + iy,
/// which is the ordering produced by a_x (x) a_y.
///
/// The default carrier (lambda = 6 cm) and half-wavelength spacing keep a
/// 5 x N_y surface in the far field of a target at 7.5 m.
struct SceneConfig {
  int M = 4;
  int nx = 5;
  int ny = 2;
  double dx_m = 0.03;
  double dy_m = 0.03;
  double lambda_m = 0.06;
  std::array<double, 3> bs_position{0.0, 3.0, 3.0};
  std::array<double, 3> irs_center{0.0, 0.0, 0.0};
  double target_range_m = 7.5;
  double target_theta_deg = 60.0;
  double target_phi_deg = 270.0;
  double c0_db = -30.0;
  double d0_m = 1.0;
  double alpha0 = 2.2;
  double sigma2_dbm = -120.0;
  double sigma2_si_db = -10.0;
  double sigma2_ref_db = -10.0;
  double target_rcs_amplitude = 1.0;
  /// When set, |alpha| additionally carries the IRS-target-IRS path loss L(d)^2
  /// in amplitude terms, i.e. |alpha| = rcs_amplitude * L(range).
  bool target_round_trip_loss = false;
  /// Zeroes the receiver noise and the self-interference / scatter channels.
  bool noiseless = false;
  std::uint64_t rng_seed = 0;

  int N() const { return nx * ny; }

  double sigma2_w() const { return noiseless ? 0.0 : dbm_to_watt(sigma2_dbm); }
  double sigma2_si() const { return noiseless ? 0.0 : db_to_linear(sigma2_si_db); }
  double sigma2_ref() const { return noiseless ? 0.0 : db_to_linear(sigma2_ref_db); }

  double bs_irs_distance() const {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += (bs_position[k] - irs_center[k]) * (bs_position[k] - irs_center[k]);
    return std::sqrt(s);
  }

  void validate() const {
    if (M < 2) throw std::invalid_argument("scene: M must be >= 2");
    if (nx < 1 || ny < 1) throw std::invalid_argument("scene: nx, ny must be >= 1");
    if (!(dx_m > 0 && dy_m > 0 && lambda_m > 0 && d0_m > 0 && target_range_m > 0))
      throw std::invalid_argument("scene: spacings, wavelength and distances must be positive");
    if (!(bs_irs_distance() > 0)) throw std::invalid_argument("scene: BS and IRS must not coincide");
    if (!(target_rcs_amplitude >= 0)) throw std::invalid_argument("scene: negative target amplitude");
  }
};

/// Distance-dependent power gain C0 (d/d0)^-alpha0, linear units.
inline double path_loss(double d, double c0_db, double d0_m, double alpha0) {
  if (!(d > 0.0)) throw std::domain_error("path_loss: distance must be positive");
  if (!(d0_m > 0.0)) throw std::domain_error("path_loss: reference distance must be positive");
  return db_to_linear(c0_db) * std::pow(d / d0_m, -alpha0);
}

inline double path_loss(double d, const SceneConfig& cfg) {
  return path_loss(d, cfg.c0_db, cfg.d0_m, cfg.alpha0);
}

/// IRS steering vector a_x (x) a_y for direction (theta, phi) in radians.
inline CVector steering_vector(double theta, double phi, const SceneConfig& cfg) {
  const double vx = std::sin(theta) * std::cos(phi);
  const double vy = std::sin(theta) * std::sin(phi);
  const double kx = 2.0 * kPi * cfg.dx_m * vx / cfg.lambda_m;
  const double ky = 2.0 * kPi * cfg.dy_m * vy / cfg.lambda_m;
  CVector a(cfg.N());
  for (int ix = 0; ix < cfg.nx; ++ix) {
    for (int iy = 0; iy < cfg.ny; ++iy) {
      a(ix * cfg.ny + iy) = std::polar(1.0, kx * ix) * std::polar(1.0, ky * iy);
    }
  }
  return a;
}

/// Ground truth of one Monte Carlo run.
struct Scene {
  SceneConfig config;
  CMatrix G;  // N x M BS-IRS channel
  CVector a;  // steering vector toward the true target
  cd alpha;   // IRS-target-IRS coefficient

  int M() const { return config.M; }
  int N() const { return config.N(); }
  double sigma2() const { return config.sigma2_w(); }
};

inline Scene synthesize_scene(const SceneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  Scene s;
  s.config = cfg;
  const double pl = path_loss(cfg.bs_irs_distance(), cfg);
  s.G = rng.complex_normal_matrix(cfg.N(), cfg.M, pl);
  s.a = steering_vector(deg_to_rad(cfg.target_theta_deg), deg_to_rad(cfg.target_phi_deg), cfg);
  double amp = cfg.target_rcs_amplitude;
  if (cfg.target_round_trip_loss) amp *= path_loss(cfg.target_range_m, cfg);
  s.alpha = std::polar(amp, 2.0 * kPi * rng.uniform());
  return s;
}

inline Scene synthesize_scene(const SceneConfig& cfg) { return synthesize_scene(cfg, cfg.rng_seed); }

}  // namespace irsloc
