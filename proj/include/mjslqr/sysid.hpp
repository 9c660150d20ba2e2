#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mjslqr/errors.hpp"
#include "mjslqr/linalg.hpp"
#include "mjslqr/markov.hpp"
#include "mjslqr/model.hpp"

namespace mjslqr {

/// Clipping and sample-count settings for identification.
///
/// A sample (x_t, z_t) is kept for mode i when
/// ||x_t|| <= c_x sigma_w sqrt(ln T) and ||z_t|| <= c_z sigma_z.
struct SysidConfig {
  double c_x = 1.0;
  double c_z = 1.0;
  bool known_B = false;
  int min_samples_per_mode = 1;

  /// c_x = 5 sqrt(n), c_z = 5 sqrt(p), min samples = 2 (n + p) (2n with known B).
  static SysidConfig defaults(Eigen::Index n, Eigen::Index p, bool known_B = false) {
    SysidConfig cfg;
    cfg.c_x = 5.0 * std::sqrt(static_cast<double>(n));
    cfg.c_z = 5.0 * std::sqrt(static_cast<double>(std::max<Eigen::Index>(p, 1)));
    cfg.known_B = known_B;
    cfg.min_samples_per_mode = static_cast<int>(known_B ? 2 * n : 2 * (n + p));
    return cfg;
  }

  void validate(Eigen::Index n, Eigen::Index p) const {
    detail::require(c_x > 0.0 && c_z > 0.0, "SysidConfig: clipping coefficients must be positive");
    const Eigen::Index needed = known_B ? n : n + p;
    detail::require(min_samples_per_mode >= needed, "SysidConfig: min_samples_per_mode must be >= regressor count");
  }
};

struct SysidResult {
  MatrixList A_hat;
  MatrixList B_hat;
  MarkovChain T_hat;
  std::vector<int> samples_per_mode;
  std::vector<int> flagged_modes;
  /// Raw regression outputs, Theta_1 ~ sigma_w L_i and Theta_2 ~ sigma_z B_i.
  MatrixList theta1;
  MatrixList theta2;
  /// Modes whose transition row was never observed (uniform row in T_hat).
  std::vector<int> unvisited_modes;

  MjsModel model() const { return MjsModel(A_hat, B_hat, T_hat); }
  int min_samples() const {
    return samples_per_mode.empty() ? 0 : *std::min_element(samples_per_mode.begin(), samples_per_mode.end());
  }
};

/// Clipped index set S_i over t = 0..T-1 (each sample needs x_{t+1}).
inline std::vector<int> clip_indices(const Trajectory& traj, const NoiseSpec& noise, const SysidConfig& config,
                                     int mode) {
  const int horizon = traj.horizon();
  detail::require(horizon >= 2, "clip_indices: trajectory needs at least two transitions");
  const double x_limit = config.c_x * noise.sigma_w * std::sqrt(std::log(static_cast<double>(horizon)));
  const double z_limit = config.c_z * noise.sigma_z;
  std::vector<int> out;
  for (int t = 0; t < horizon; ++t) {
    if (traj.modes[static_cast<std::size_t>(t)] != mode) continue;
    if (traj.x(t).norm() > x_limit) continue;
    // With known B the exploration is not a regressor, so it is not clipped.
    if (!config.known_B && traj.p() > 0 && traj.z(t).norm() > z_limit) continue;
    out.push_back(t);
  }
  return out;
}

namespace detail {

/// Least squares Y ~ Phi Theta^T by column-pivoted QR; throws when the
/// regressor matrix is rank deficient at relative tolerance 1e-10.
inline MatrixXd least_squares(const MatrixXd& phi, const MatrixXd& y) {
  Eigen::ColPivHouseholderQR<MatrixXd> qr(phi);
  qr.setThreshold(1e-10);
  if (qr.rank() < phi.cols()) throw DegenerateRegressors("identification: regressor matrix is rank deficient");
  return qr.solve(y).transpose();
}

inline SysidResult empty_result(const Trajectory& traj, int s, Eigen::Index n, Eigen::Index p) {
  auto est = estimate_transition(traj.modes, s);
  SysidResult out{MatrixList(static_cast<std::size_t>(s), MatrixXd::Zero(n, n)),
                  MatrixList(static_cast<std::size_t>(s), MatrixXd::Zero(n, p)),
                  est.chain,
                  std::vector<int>(static_cast<std::size_t>(s), 0),
                  {},
                  MatrixList(static_cast<std::size_t>(s), MatrixXd::Zero(n, n)),
                  MatrixList(static_cast<std::size_t>(s), MatrixXd::Zero(n, p)),
                  {}};
  for (int i = 0; i < s; ++i)
    if (est.unvisited[static_cast<std::size_t>(i)]) out.unvisited_modes.push_back(i);
  return out;
}

inline void check_trajectory(const Trajectory& traj, const ModeController& controller, int s) {
  detail::require_shape(controller.K.size() == static_cast<std::size_t>(s), "identification: need s gains");
  detail::require_shape(traj.modes.size() == static_cast<std::size_t>(traj.horizon()) + 1 &&
                            traj.states.cols() == traj.horizon() + 1 && traj.explorations.cols() == traj.horizon(),
                        "identification: inconsistent trajectory lengths");
  for (const auto& k : controller.K)
    detail::require_shape(k.rows() == traj.p() && k.cols() == traj.n(), "identification: K_i must be p x n");
}

}  // namespace detail

/// Clipped per-mode least squares for (A_i, B_i) plus empirical transition
/// frequencies. The controller must be the one that generated the data.
///
/// Regressor rows are [x_k^T / sigma_w, z_k^T / sigma_z] with targets x_{k+1}^T,
/// giving Theta = [Theta_1, Theta_2]; then B_i = Theta_2 / sigma_z and
/// A_i = Theta_1 / sigma_w - B_i K_i.
inline SysidResult mjs_sysid(const Trajectory& traj, const ModeController& controller, const NoiseSpec& noise,
                             const SysidConfig& config) {
  const int num_modes = static_cast<int>(controller.K.size());
  detail::require_shape(num_modes >= 1, "mjs_sysid: need one gain per mode");
  const Eigen::Index n = traj.n();
  const Eigen::Index p = traj.p();
  detail::check_trajectory(traj, controller, num_modes);
  config.validate(n, p);
  detail::require(noise.sigma_w > 0.0, "mjs_sysid: sigma_w must be positive");
  detail::require(p == 0 || noise.sigma_z > 0.0, "mjs_sysid: sigma_z must be positive unless B is known");

  SysidResult out = detail::empty_result(traj, num_modes, n, p);
  for (int i = 0; i < num_modes; ++i) {
    const auto idx = clip_indices(traj, noise, config, i);
    out.samples_per_mode[static_cast<std::size_t>(i)] = static_cast<int>(idx.size());
    if (static_cast<int>(idx.size()) < config.min_samples_per_mode) {
      out.flagged_modes.push_back(i);
      continue;
    }
    MatrixXd phi(static_cast<Eigen::Index>(idx.size()), n + p);
    MatrixXd y(static_cast<Eigen::Index>(idx.size()), n);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      phi.row(row).head(n) = traj.x(idx[r]).transpose() / noise.sigma_w;
      if (p > 0) phi.row(row).tail(p) = traj.z(idx[r]).transpose() / noise.sigma_z;
      y.row(row) = traj.x(idx[r] + 1).transpose();
    }
    const MatrixXd theta = detail::least_squares(phi, y);
    const auto k = static_cast<std::size_t>(i);
    out.theta1[k] = theta.leftCols(n);
    out.theta2[k] = theta.rightCols(p);
    out.B_hat[k] = p > 0 ? MatrixXd(out.theta2[k] / noise.sigma_z) : MatrixXd::Zero(n, 0);
    out.A_hat[k] = out.theta1[k] / noise.sigma_w - out.B_hat[k] * controller.K[k];
  }
  return out;
}

/// Identification with known input matrices: regress x_{k+1} - B_i u_k on
/// x_k / sigma_w and echo the supplied B.
inline SysidResult mjs_sysid_known_B(const Trajectory& traj, const ModeController& controller,
                                     const MatrixList& known_b, const NoiseSpec& noise, const SysidConfig& config) {
  const int s = static_cast<int>(known_b.size());
  const Eigen::Index n = traj.n();
  const Eigen::Index p = traj.p();
  detail::require_shape(s >= 1, "mjs_sysid_known_B: need one B per mode");
  for (const auto& b : known_b)
    detail::require_shape(b.rows() == n && b.cols() == p, "mjs_sysid_known_B: B_i must be n x p");
  detail::check_trajectory(traj, controller, s);
  SysidConfig cfg = config;
  cfg.known_B = true;
  cfg.validate(n, p);
  detail::require(noise.sigma_w > 0.0, "mjs_sysid_known_B: sigma_w must be positive");

  SysidResult out = detail::empty_result(traj, s, n, p);
  out.B_hat = known_b;
  for (int i = 0; i < s; ++i) {
    const auto idx = clip_indices(traj, noise, cfg, i);
    out.samples_per_mode[static_cast<std::size_t>(i)] = static_cast<int>(idx.size());
    if (static_cast<int>(idx.size()) < cfg.min_samples_per_mode) {
      out.flagged_modes.push_back(i);
      continue;
    }
    const auto k = static_cast<std::size_t>(i);
    MatrixXd phi(static_cast<Eigen::Index>(idx.size()), n);
    MatrixXd y(static_cast<Eigen::Index>(idx.size()), n);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      phi.row(row) = traj.x(idx[r]).transpose() / noise.sigma_w;
      y.row(row) = (traj.x(idx[r] + 1) - known_b[k] * traj.u(idx[r])).transpose();
    }
    out.theta1[k] = detail::least_squares(phi, y);
    out.A_hat[k] = out.theta1[k] / noise.sigma_w;
  }
  return out;
}

struct EstimationError {
  double err_A = 0.0;
  double err_B = 0.0;
  /// ||T_hat - T||_inf, the max absolute row sum.
  double err_T = 0.0;
  /// max_j ||Psi_hat_j - Psi_j|| / ||Psi_j||, Psi_j = [A_j, B_j].
  double rel_Psi = 0.0;
};

inline EstimationError estimation_error(const SysidResult& result, const MjsModel& truth) {
  const int s = truth.s();
  detail::require_shape(result.A_hat.size() == static_cast<std::size_t>(s) &&
                            result.B_hat.size() == static_cast<std::size_t>(s) && result.T_hat.num_modes() == s,
                        "estimation_error: mode count mismatch");
  EstimationError e;
  for (int i = 0; i < s; ++i) {
    const auto k = static_cast<std::size_t>(i);
    detail::require_shape(result.A_hat[k].rows() == truth.n() && result.A_hat[k].cols() == truth.n() &&
                              result.B_hat[k].rows() == truth.n() && result.B_hat[k].cols() == truth.p(),
                          "estimation_error: shape mismatch");
    const MatrixXd da = result.A_hat[k] - truth.A(i);
    const MatrixXd db = result.B_hat[k] - truth.B(i);
    e.err_A = std::max(e.err_A, spectral_norm(da));
    e.err_B = std::max(e.err_B, spectral_norm(db));
    MatrixXd dpsi(truth.n(), truth.n() + truth.p());
    dpsi << da, db;
    MatrixXd psi(truth.n(), truth.n() + truth.p());
    psi << truth.A(i), truth.B(i);
    const double psi_norm = spectral_norm(psi);
    if (psi_norm > 0.0) e.rel_Psi = std::max(e.rel_Psi, spectral_norm(dpsi) / psi_norm);
  }
  e.err_T = (result.T_hat.transition() - truth.chain().transition()).cwiseAbs().rowwise().sum().maxCoeff();
  return e;
}

}  // namespace mjslqr
