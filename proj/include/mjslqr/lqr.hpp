#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mjslqr/errors.hpp"
#include "mjslqr/linalg.hpp"
#include "mjslqr/model.hpp"
#include "mjslqr/moments.hpp"

namespace mjslqr {

/// Mode-dependent quadratic cost x^T Q_{w(t)} x + u^T R_{w(t)} u.
class CostSpec {
 public:
  CostSpec(MatrixList q, MatrixList r) : q_(std::move(q)), r_(std::move(r)) {
    detail::require_shape(!q_.empty() && q_.size() == r_.size(), "CostSpec: need one Q and one R per mode");
    for (auto& m : q_) {
      detail::require_shape(m.rows() == m.cols(), "CostSpec: Q_i must be square");
      m = symmetrize(m);
      detail::require(m.size() == 0 || min_eigenvalue_symmetric(m) >= -1e-10, "CostSpec: Q_i must be PSD");
    }
    for (auto& m : r_) {
      detail::require_shape(m.rows() == m.cols(), "CostSpec: R_i must be square");
      m = symmetrize(m);
      detail::require(m.size() == 0 || min_eigenvalue_symmetric(m) > 0.0, "CostSpec: R_i must be PD");
    }
  }

  static CostSpec identity(const MjsModel& model) {
    const auto s = static_cast<std::size_t>(model.s());
    return {MatrixList(s, MatrixXd::Identity(model.n(), model.n())),
            MatrixList(s, MatrixXd::Identity(model.p(), model.p()))};
  }

  const MatrixList& Q() const { return q_; }
  const MatrixList& R() const { return r_; }
  const MatrixXd& Q(int mode) const { return q_[static_cast<std::size_t>(mode)]; }
  const MatrixXd& R(int mode) const { return r_[static_cast<std::size_t>(mode)]; }

 private:
  MatrixList q_;
  MatrixList r_;
};

inline void check_compatible(const MjsModel& model, const CostSpec& cost) {
  detail::require_shape(cost.Q().size() == static_cast<std::size_t>(model.s()), "cost: need one Q/R per mode");
  for (int i = 0; i < model.s(); ++i) {
    detail::require_shape(cost.Q(i).rows() == model.n(), "cost: Q_i must be n x n");
    detail::require_shape(cost.R(i).rows() == model.p(), "cost: R_i must be p x p");
  }
}

struct CdareSolution {
  MatrixList P;
  int iterations = 0;
  /// max_j ||P_j^(k+1) - P_j^(k)|| (spectral norm) at the last iteration.
  double final_residual = 0.0;
  /// The same quantity for every iteration, in order.
  std::vector<double> update_norms;
};

/// Value iteration stopped without meeting the tolerance; carries the last iterate.
class CdareNoConvergence : public NoConvergence {
 public:
  CdareNoConvergence(const std::string& what, CdareSolution last)
      : NoConvergence(what), last_(std::move(last)) {}
  const CdareSolution& last_iterate() const { return last_; }

 private:
  CdareSolution last_;
};

/// phi_j(P) = sum_k [T]_jk P_k.
inline MatrixXd coupling(const MatrixList& p, const MarkovChain& chain, int j) {
  detail::require_shape(p.size() == static_cast<std::size_t>(chain.num_modes()), "coupling: need s matrices");
  detail::require(j >= 0 && j < chain.num_modes(), "coupling: mode out of range");
  MatrixXd out = MatrixXd::Zero(p.front().rows(), p.front().cols());
  for (int k = 0; k < chain.num_modes(); ++k) {
    detail::require_shape(p[static_cast<std::size_t>(k)].rows() == out.rows() &&
                              p[static_cast<std::size_t>(k)].cols() == out.cols(),
                          "coupling: P_k shapes differ");
    const double w = chain(j, k);
    if (w != 0.0) out += w * p[static_cast<std::size_t>(k)];
  }
  return out;
}

namespace detail {

/// Cholesky of R_j + B_j^T phi_j B_j; signals an invalid cost when it fails.
inline Eigen::LLT<MatrixXd> inner_factor(const MatrixXd& r, const MatrixXd& b, const MatrixXd& phi) {
  Eigen::LLT<MatrixXd> llt(symmetrize(r + b.transpose() * phi * b));
  if (llt.info() != Eigen::Success) throw SingularInnerSolve("R_j + B_j^T phi_j B_j is not positive definite");
  if (r.size() > 0) {
    const VectorXd d = llt.matrixL().toDenseMatrix().diagonal();
    if (d.minCoeff() <= 1e-12 * std::max(1.0, d.maxCoeff()))
      throw SingularInnerSolve("R_j + B_j^T phi_j B_j is numerically singular");
  }
  return llt;
}

/// Right-hand side of the coupled Riccati equations for mode j.
inline MatrixXd riccati_map(const MjsModel& model, const CostSpec& cost, const MatrixList& p, int j) {
  const MatrixXd phi = coupling(p, model.chain(), j);
  const MatrixXd& a = model.A(j);
  const MatrixXd& b = model.B(j);
  MatrixXd next = a.transpose() * phi * a + cost.Q(j);
  if (b.cols() > 0) {
    const MatrixXd bpa = b.transpose() * phi * a;
    next -= bpa.transpose() * inner_factor(cost.R(j), b, phi).solve(bpa);
  }
  return symmetrize(next);
}

}  // namespace detail

/// Max-mode spectral-norm distance between P and the cDARE right-hand side at P.
inline double cdare_residual(const MjsModel& model, const CostSpec& cost, const MatrixList& p) {
  double out = 0.0;
  for (int j = 0; j < model.s(); ++j)
    out = std::max(out, symmetric_spectral_norm(detail::riccati_map(model, cost, p, j) - p[static_cast<std::size_t>(j)]));
  return out;
}

/// Solve the coupled discrete-time algebraic Riccati equations by value
/// iteration from P^(0) = Q, stopping once max_j ||P_j^(k+1) - P_j^(k)|| <= tol.
inline CdareSolution solve_cdare(const MjsModel& model, const CostSpec& cost, double tol = 1e-6,
                                 int max_iter = 10000) {
  check_compatible(model, cost);
  detail::require(tol > 0.0 && max_iter >= 1, "solve_cdare: invalid tolerance or iteration cap");
  CdareSolution sol;
  sol.P = cost.Q();
  const int s = model.s();
  for (int it = 1; it <= max_iter; ++it) {
    MatrixList next(static_cast<std::size_t>(s));
    double change = 0.0;
    for (int j = 0; j < s; ++j) {
      next[static_cast<std::size_t>(j)] = detail::riccati_map(model, cost, sol.P, j);
      change = std::max(change, symmetric_spectral_norm(next[static_cast<std::size_t>(j)] - sol.P[static_cast<std::size_t>(j)]));
    }
    if (!std::isfinite(change)) {
      sol.iterations = it;
      sol.final_residual = change;
      throw CdareNoConvergence("solve_cdare: value iteration diverged", std::move(sol));
    }
    sol.P = std::move(next);
    sol.iterations = it;
    sol.final_residual = change;
    sol.update_norms.push_back(change);
    if (change <= tol) return sol;
  }
  throw CdareNoConvergence("solve_cdare: iteration cap reached", std::move(sol));
}

/// K_j = -(R_j + B_j^T phi_j B_j)^{-1} B_j^T phi_j A_j.
inline ModeController optimal_controller(const MjsModel& model, const CostSpec& cost, const CdareSolution& solution) {
  check_compatible(model, cost);
  detail::require_shape(solution.P.size() == static_cast<std::size_t>(model.s()), "optimal_controller: need s P matrices");
  ModeController out;
  for (int j = 0; j < model.s(); ++j) {
    const MatrixXd& b = model.B(j);
    if (b.cols() == 0) {
      out.K.push_back(MatrixXd::Zero(0, model.n()));
      continue;
    }
    const MatrixXd phi = coupling(solution.P, model.chain(), j);
    out.K.push_back(-detail::inner_factor(cost.R(j), b, phi).solve(b.transpose() * phi * model.A(j)));
  }
  return out;
}

/// Expected cumulative cost sum_{t=1}^T E[x_t^T Q x_t + u_t^T R u_t] split by source.
struct CostDecomposition {
  double initial_state = 0.0;  // S_0: driven by x_0
  double exploration_state = 0.0;  // S_z1: exploration entering through the state
  double exploration_input = 0.0;  // S_z2: tr(R~_t Sigma_z) directly
  double process_noise = 0.0;  // S_w
  double total() const { return initial_state + exploration_state + exploration_input + process_noise; }
};

namespace detail {

inline MatrixList closed_loop_weights(const CostSpec& cost, const ModeController& controller) {
  MatrixList m;
  for (std::size_t i = 0; i < cost.Q().size(); ++i)
    m.push_back(cost.Q()[i] + controller.K[i].transpose() * cost.R()[i] * controller.K[i]);
  return m;
}

/// sum_{t=1}^T [ sum_i tr(M_i Sigma_i(t)) ] for a covariance sequence.
inline double state_cost_sum(const MatrixList& m, const CovarianceSequence& cov) {
  double out = 0.0;
  for (int t = 1; t <= cov.horizon(); ++t)
    for (std::size_t i = 0; i < m.size(); ++i)
      out += (m[i].cwiseProduct(cov.sigma[static_cast<std::size_t>(t)][i])).sum();
  return out;
}

/// sum_{t=1}^T tr(R~_t Sigma_z), R~_t = sum_i pi_t(i) R_i.
inline double exploration_input_sum(const CostSpec& cost, const MatrixXd& sigma_z, const CovarianceSequence& cov) {
  double out = 0.0;
  for (int t = 1; t <= cov.horizon(); ++t)
    for (std::size_t i = 0; i < cost.R().size(); ++i)
      out += cov.pi[static_cast<std::size_t>(t)](static_cast<Eigen::Index>(i)) *
             (cost.R()[i].cwiseProduct(sigma_z)).sum();
  return out;
}

}  // namespace detail

/// Exact expected cost over t = 1..horizon from the covariance recursion
/// (general noise covariances, general initial per-mode covariances).
inline double finite_horizon_cost(const MjsModel& model, const ModeController& controller,
                                  const MatrixXd& sigma_w, const MatrixXd& sigma_z,
                                  const MatrixList& initial_covariances, const VectorXd& initial_mode_dist,
                                  const CostSpec& cost, int horizon) {
  check_compatible(model, cost);
  detail::require(horizon >= 1, "finite_horizon_cost: horizon must be positive");
  const auto cov = covariance_recursion(model, controller, sigma_w, sigma_z, initial_covariances,
                                        initial_mode_dist, horizon);
  const auto m = detail::closed_loop_weights(cost, controller);
  return detail::state_cost_sum(m, cov) + detail::exploration_input_sum(cost, sigma_z, cov);
}

inline double finite_horizon_cost(const MjsModel& model, const ModeController& controller, const NoiseSpec& noise,
                                  const VectorXd& x0, const VectorXd& omega0_dist, const CostSpec& cost,
                                  int horizon) {
  check_compatible(model, cost);
  detail::require(horizon >= 1, "finite_horizon_cost: horizon must be positive");
  const auto cov = covariance_recursion(model, controller, noise, x0, omega0_dist, horizon);
  const auto m = detail::closed_loop_weights(cost, controller);
  const MatrixXd sigma_z = noise.sigma_z * noise.sigma_z * MatrixXd::Identity(model.p(), model.p());
  return detail::state_cost_sum(m, cov) + detail::exploration_input_sum(cost, sigma_z, cov);
}

/// The four cost contributions, each computed from its own recursion with the
/// other sources switched off.
inline CostDecomposition finite_horizon_cost_terms(const MjsModel& model, const ModeController& controller,
                                                   const NoiseSpec& noise, const VectorXd& x0,
                                                   const VectorXd& omega0_dist, const CostSpec& cost, int horizon) {
  check_compatible(model, cost);
  detail::require(horizon >= 1, "finite_horizon_cost_terms: horizon must be positive");
  const Eigen::Index n = model.n();
  const Eigen::Index p = model.p();
  const auto m = detail::closed_loop_weights(cost, controller);
  const MatrixXd zero_w = MatrixXd::Zero(n, n);
  const MatrixXd zero_z = MatrixXd::Zero(p, p);
  const MatrixXd sigma_w = noise.sigma_w * noise.sigma_w * MatrixXd::Identity(n, n);
  const MatrixXd sigma_z = noise.sigma_z * noise.sigma_z * MatrixXd::Identity(p, p);
  MatrixList from_x0;
  MatrixList zero_init(static_cast<std::size_t>(model.s()), zero_w);
  for (int i = 0; i < model.s(); ++i) from_x0.push_back(omega0_dist(i) * x0 * x0.transpose());

  CostDecomposition out;
  const auto cov0 = covariance_recursion(model, controller, zero_w, zero_z, from_x0, omega0_dist, horizon);
  out.initial_state = detail::state_cost_sum(m, cov0);
  const auto covz = covariance_recursion(model, controller, zero_w, sigma_z, zero_init, omega0_dist, horizon);
  out.exploration_state = detail::state_cost_sum(m, covz);
  out.exploration_input = detail::exploration_input_sum(cost, sigma_z, covz);
  const auto covw = covariance_recursion(model, controller, sigma_w, zero_z, zero_init, omega0_dist, horizon);
  out.process_noise = detail::state_cost_sum(m, covw);
  return out;
}

/// Infinite-horizon average cost without exploration,
///   J = tr(M H^{-1}((I - L~)^{-1} (pi_inf (x) I_{n^2}) vec(sigma_w^2 I))),
/// from one dense solve of size s n^2 plus a residual-correction pass.
inline double infinite_horizon_avg_cost(const MjsModel& model, const ModeController& controller, double sigma_w,
                                        const CostSpec& cost) {
  check_compatible(model, cost);
  detail::require(sigma_w >= 0.0, "infinite_horizon_avg_cost: sigma_w must be nonnegative");
  const auto aug = augmented_matrix(model, controller);
  const double rho = spectral_radius(aug.matrix);
  if (rho >= 1.0 - 1e-10) throw NotMss("infinite_horizon_avg_cost: closed loop is not mean-square stable");

  const Eigen::Index n = model.n();
  const int s = model.s();
  const VectorXd pi = stationary_distribution(model.chain()).pi;
  const VectorXd noise_vec = vec(sigma_w * sigma_w * MatrixXd::Identity(n, n));
  VectorXd rhs(s * n * n);
  for (int i = 0; i < s; ++i) rhs.segment(i * n * n, n * n) = pi(i) * noise_vec;

  const MatrixXd system = MatrixXd::Identity(aug.matrix.rows(), aug.matrix.cols()) - aug.matrix;
  Eigen::PartialPivLU<MatrixXd> lu(system);
  VectorXd y = lu.solve(rhs);
  y += lu.solve(rhs - system * y);

  const auto m = detail::closed_loop_weights(cost, controller);
  const auto blocks = unstack_vec(y, n, s);
  double j = 0.0;
  for (int i = 0; i < s; ++i)
    j += (m[static_cast<std::size_t>(i)].cwiseProduct(blocks[static_cast<std::size_t>(i)])).sum();
  return j;
}

}  // namespace mjslqr
