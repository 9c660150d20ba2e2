#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "mjslqr/errors.hpp"
#include "mjslqr/linalg.hpp"
#include "mjslqr/model.hpp"

namespace mjslqr {

/// Exact per-mode second moments Sigma_i(t) = E[x_t x_t^T 1{w(t) = i}]
/// together with the mode marginals pi_t, for t = 0..horizon.
struct CovarianceSequence {
  std::vector<MatrixList> sigma;
  std::vector<VectorXd> pi;

  /// s_t = [vec(Sigma_1(t)); ...; vec(Sigma_s(t))].
  VectorXd stacked(int t) const { return stack_vec(sigma[static_cast<std::size_t>(t)]); }

  /// E||x_t||^2 = sum_i tr(Sigma_i(t)).
  double second_moment(int t) const {
    double out = 0.0;
    for (const auto& m : sigma[static_cast<std::size_t>(t)]) out += m.trace();
    return out;
  }

  int horizon() const { return static_cast<int>(sigma.size()) - 1; }
};

namespace detail {

inline void require_psd_input(const MatrixXd& m, const char* what) {
  if (!is_psd(m, 1e-10)) throw NotPsd(std::string(what) + " is not positive semidefinite");
}

}  // namespace detail

/// Propagate the stacked covariances
///   Sigma_i(t+1) = sum_j T_ji L_j Sigma_j(t) L_j^T
///                + sum_j pi_t(j) T_ji B_j Sigma_z B_j^T + pi_{t+1}(i) Sigma_w,
/// the block form of s_{t+1} = L~ s_t + B~_{t+1} vec(Sigma_z) + Pi~_{t+1} vec(Sigma_w).
/// Accepts general PSD noise covariances.
inline CovarianceSequence covariance_recursion(const MjsModel& model, const ModeController& controller,
                                               const MatrixXd& sigma_w, const MatrixXd& sigma_z,
                                               const MatrixList& initial_covariances,
                                               const VectorXd& initial_mode_dist, int horizon) {
  const int s = model.s();
  const Eigen::Index n = model.n();
  const Eigen::Index p = model.p();
  detail::require(horizon >= 0, "covariance_recursion: horizon must be nonnegative");
  validate_distribution(initial_mode_dist, s, "covariance_recursion");
  detail::require_shape(sigma_w.rows() == n && sigma_w.cols() == n, "covariance_recursion: Sigma_w must be n x n");
  detail::require_shape(sigma_z.rows() == p && sigma_z.cols() == p, "covariance_recursion: Sigma_z must be p x p");
  detail::require_shape(initial_covariances.size() == static_cast<std::size_t>(s),
                        "covariance_recursion: need one initial covariance per mode");
  detail::require_psd_input(sigma_w, "Sigma_w");
  detail::require_psd_input(sigma_z, "Sigma_z");
  for (const auto& c : initial_covariances) {
    detail::require_shape(c.rows() == n && c.cols() == n, "covariance_recursion: Sigma_i(0) must be n x n");
    detail::require_psd_input(c, "Sigma_i(0)");
  }

  const auto closed = closed_loop(model, controller);
  const auto& t = model.chain().transition();

  // B_j Sigma_z B_j^T is time invariant.
  MatrixList excitation;
  excitation.reserve(static_cast<std::size_t>(s));
  for (int j = 0; j < s; ++j) excitation.push_back(model.B(j) * sigma_z * model.B(j).transpose());

  CovarianceSequence out;
  out.sigma.reserve(static_cast<std::size_t>(horizon) + 1);
  out.pi.reserve(static_cast<std::size_t>(horizon) + 1);
  out.sigma.push_back(initial_covariances);
  out.pi.push_back(initial_mode_dist);

  for (int k = 0; k < horizon; ++k) {
    const auto& prev = out.sigma.back();
    const VectorXd& pi_k = out.pi.back();
    const VectorXd pi_next = t.transpose() * pi_k;

    MatrixList propagated(static_cast<std::size_t>(s), MatrixXd::Zero(n, n));
    for (int j = 0; j < s; ++j) {
      const auto& lj = closed[static_cast<std::size_t>(j)];
      const MatrixXd moved = lj * prev[static_cast<std::size_t>(j)] * lj.transpose();
      for (int i = 0; i < s; ++i) {
        const double tji = t(j, i);
        if (tji == 0.0) continue;
        propagated[static_cast<std::size_t>(i)] += tji * (moved + pi_k(j) * excitation[static_cast<std::size_t>(j)]);
      }
    }
    for (int i = 0; i < s; ++i) propagated[static_cast<std::size_t>(i)] += pi_next(i) * sigma_w;

    out.sigma.push_back(std::move(propagated));
    out.pi.push_back(pi_next);
  }
  return out;
}

/// Isotropic-noise overload with a deterministic initial state:
/// Sigma_i(0) = pi_0(i) x0 x0^T.
inline CovarianceSequence covariance_recursion(const MjsModel& model, const ModeController& controller,
                                               const NoiseSpec& noise, const VectorXd& x0,
                                               const VectorXd& initial_mode_dist, int horizon) {
  detail::require_shape(x0.size() == model.n(), "covariance_recursion: x0 has wrong dimension");
  validate_distribution(initial_mode_dist, model.s(), "covariance_recursion");
  MatrixList initial;
  const MatrixXd outer = x0 * x0.transpose();
  for (int i = 0; i < model.s(); ++i) initial.push_back(initial_mode_dist(i) * outer);
  const double vw = noise.sigma_w * noise.sigma_w;
  const double vz = noise.sigma_z * noise.sigma_z;
  return covariance_recursion(model, controller, vw * MatrixXd::Identity(model.n(), model.n()),
                              vz * MatrixXd::Identity(model.p(), model.p()), initial, initial_mode_dist, horizon);
}

/// Constants with ||M^k|| <= tau rho^k.
struct DecayPair {
  double tau = 1.0;
  double rho = 0.0;
};

/// tau = max_{k <= k_cap} ||M^k|| / rho^k at rho = rho(M) + margin.
///
/// A finite scan, so it under-approximates sup_k; with a positive margin the
/// ratio decays past the transient and the scan captures the maximum.
inline DecayPair fit_decay_pair(const MatrixXd& m, double margin = 1e-3, int k_cap = 200) {
  detail::require(margin >= 0.0 && k_cap >= 0, "fit_decay_pair: invalid margin or cap");
  const double rho = spectral_radius(m) + margin;
  if (rho >= 1.0) throw InvalidDecayPair("fit_decay_pair: rho(M) + margin >= 1");
  if (rho == 0.0) return {1.0, 0.0};
  double tau = 1.0;
  MatrixXd power = MatrixXd::Identity(m.rows(), m.cols());
  double scale = 1.0;
  for (int k = 1; k <= k_cap; ++k) {
    power = power * m;
    scale *= rho;
    tau = std::max(tau, spectral_norm(power) / scale);
  }
  return {tau, rho};
}

/// Upper bound on E||x_t||^2, t = 0..horizon:
///   sqrt(n s) tau rho^t E||x_0||^2 + n sqrt(s) (||B||^2 sigma_z^2 + sigma_w^2) tau / (1 - rho).
inline std::vector<double> second_moment_bound(const MjsModel& model, const NoiseSpec& noise,
                                               double x0_second_moment, const DecayPair& decay, int horizon) {
  if (!(decay.rho >= 0.0 && decay.rho < 1.0)) throw InvalidDecayPair("second_moment_bound: rho must be in [0,1)");
  if (!(decay.tau >= 1.0)) throw InvalidDecayPair("second_moment_bound: tau must be >= 1");
  detail::require(x0_second_moment >= 0.0 && horizon >= 0, "second_moment_bound: invalid arguments");
  const double n = static_cast<double>(model.n());
  const double s = static_cast<double>(model.s());
  const double b_norm = max_spectral_norm(model.B());
  const double forcing = n * std::sqrt(s) *
                         (b_norm * b_norm * noise.sigma_z * noise.sigma_z + noise.sigma_w * noise.sigma_w) *
                         decay.tau / (1.0 - decay.rho);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(horizon) + 1);
  double rho_t = 1.0;
  for (int t = 0; t <= horizon; ++t) {
    out.push_back(std::sqrt(n * s) * decay.tau * rho_t * x0_second_moment + forcing);
    rho_t *= decay.rho;
  }
  return out;
}

/// Same bound with (tau, rho) fitted to the closed-loop augmented matrix.
inline std::vector<double> second_moment_bound(const MjsModel& model, const ModeController& controller,
                                               const NoiseSpec& noise, double x0_second_moment, int horizon,
                                               double margin = 1e-3, int k_cap = 200) {
  const auto decay = fit_decay_pair(augmented_matrix(model, controller).matrix, margin, k_cap);
  return second_moment_bound(model, noise, x0_second_moment, decay, horizon);
}

}  // namespace mjslqr
