#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mjslqr/errors.hpp"
#include "mjslqr/lqr.hpp"
#include "mjslqr/model.hpp"
#include "mjslqr/random.hpp"
#include "mjslqr/sysid.hpp"

namespace mjslqr {

/// Geometric epoch lengths T_i = floor(T0 gamma^i), i = 0..num_epochs-1.
struct EpochSchedule {
  int T0 = 2000;
  double gamma = 2.0;
  int num_epochs = 5;

  void validate() const {
    detail::require(T0 >= 2, "EpochSchedule: T0 must be at least 2");
    detail::require(gamma > 1.0 && std::isfinite(gamma), "EpochSchedule: gamma must exceed 1");
    detail::require(num_epochs >= 1, "EpochSchedule: need at least one epoch");
  }

  int length(int epoch) const {
    return static_cast<int>(std::floor(static_cast<double>(T0) * std::pow(gamma, epoch)));
  }

  long total() const {
    long out = 0;
    for (int i = 0; i < num_epochs; ++i) out += length(i);
    return out;
  }
};

struct AdaptiveOptions {
  /// Use the true B, no exploration (sigma_z = 0) and known-B identification.
  bool known_B = false;
  /// Skip identification and hand the true model to the controller synthesis.
  bool oracle_model = false;
  /// Keep the concatenated trajectory of the whole run.
  bool keep_trajectory = false;
  double cdare_tol = 1e-6;
  int cdare_max_iter = 10000;
};

struct EpochRecord {
  int epoch = 0;
  int length = 0;
  /// Global index of the epoch's first step.
  long start = 0;
  double sigma_z = 0.0;
  ModeController controller;
  std::optional<SysidResult> sysid;
  EstimationError errors;
  /// Realized sum of x^T Q x + u^T R u over the epoch's steps.
  double cost = 0.0;
  /// Controller synthesis failed after this epoch; the controller was reused.
  bool cdare_failed = false;
  /// Identification hit rank-deficient regressors.
  bool estimation_degenerate = false;
  std::string failure;
};

struct AdaptiveRunRecord {
  std::vector<EpochRecord> epochs;
  ModeController k_star;
  double j_star = 0.0;
  bool initial_controller_mss = true;
  double initial_rho = 0.0;
  /// Realized cost of each step, indexed by the step at which u_t is applied.
  std::vector<double> step_costs;
  /// (t, Regret(t)) at every epoch boundary.
  std::vector<std::pair<long, double>> regret_samples;
  std::optional<Trajectory> trajectory;

  long total_steps() const { return static_cast<long>(step_costs.size()); }
};

/// Realized regret over the first `horizon_prefix` steps: sum of step costs minus prefix * J*.
inline double regret(const AdaptiveRunRecord& record, long horizon_prefix) {
  detail::require(horizon_prefix >= 0 && horizon_prefix <= record.total_steps(),
                  "regret: prefix exceeds the run length");
  double sum = 0.0;
  for (long t = 0; t < horizon_prefix; ++t) sum += record.step_costs[static_cast<std::size_t>(t)];
  return sum - static_cast<double>(horizon_prefix) * record.j_star;
}

/// Regret accrued inside one epoch: its realized cost minus T_i J*.
inline double epoch_regret(const AdaptiveRunRecord& record, int epoch) {
  const auto& e = record.epochs.at(static_cast<std::size_t>(epoch));
  return e.cost - static_cast<double>(e.length) * record.j_star;
}

namespace detail {

inline void append_trajectory(Trajectory& total, const Trajectory& part) {
  if (total.states.cols() == 0) {
    total = part;
    return;
  }
  const Eigen::Index add = part.inputs.cols();
  auto grow = [](MatrixXd& m, Eigen::Index cols) {
    MatrixXd next(m.rows(), m.cols() + cols);
    next.leftCols(m.cols()) = m;
    m.swap(next);
  };
  grow(total.states, add);
  total.states.rightCols(add) = part.states.rightCols(add);
  for (auto pair : {std::pair{&total.explorations, &part.explorations}, std::pair{&total.inputs, &part.inputs},
                     std::pair{&total.disturbances, &part.disturbances}}) {
    grow(*pair.first, add);
    pair.first->rightCols(add) = *pair.second;
  }
  total.modes.insert(total.modes.end(), part.modes.begin() + 1, part.modes.end());
}

}  // namespace detail

/// Epoch-based certainty-equivalent adaptive control.
///
/// Each epoch i evolves the true system for T_i steps under
/// u_t = K^(i) x_t + z_t with sigma_{z,i}^2 = sigma_w^2 / sqrt(T_i), identifies the
/// model from that epoch's data, and sets K^(i+1) to the optimal controller of the
/// estimate. Epochs continue the same trajectory. If synthesis fails on an
/// estimate, K^(i) is reused. J* is computed from the true model for scoring.
inline AdaptiveRunRecord adaptive_mjs_lqr(const MjsModel& model, const CostSpec& cost, double sigma_w,
                                          const ModeController& initial_controller, const EpochSchedule& schedule,
                                          const SysidConfig& sysid_config, std::uint64_t seed,
                                          const AdaptiveOptions& options = {}) {
  schedule.validate();
  check_compatible(model, initial_controller);
  check_compatible(model, cost);
  detail::require(sigma_w > 0.0, "adaptive_mjs_lqr: sigma_w must be positive");

  AdaptiveRunRecord record;
  // Scoring reference; the iteration cap in `options` only governs synthesis on estimates.
  const auto truth_solution = solve_cdare(model, cost, options.cdare_tol);
  record.k_star = optimal_controller(model, cost, truth_solution);
  record.j_star = infinite_horizon_avg_cost(model, record.k_star, sigma_w, cost);
  const auto initial_mss = is_mss(model, initial_controller);
  record.initial_controller_mss = initial_mss.mss;
  record.initial_rho = initial_mss.rho;

  SimulationStreams streams(seed);
  VectorXd x = VectorXd::Zero(model.n());
  int mode = streams.modes.categorical(uniform_distribution(model.s()));
  ModeController controller = initial_controller;
  record.step_costs.reserve(static_cast<std::size_t>(schedule.total()));
  if (options.keep_trajectory) record.trajectory.emplace();

  long start = 0;
  for (int i = 0; i < schedule.num_epochs; ++i) {
    EpochRecord epoch;
    epoch.epoch = i;
    epoch.length = schedule.length(i);
    epoch.start = start;
    epoch.sigma_z = options.known_B ? 0.0 : sigma_w / std::pow(static_cast<double>(epoch.length), 0.25);
    epoch.controller = controller;

    const NoiseSpec noise(sigma_w, epoch.sigma_z);
    const Trajectory traj = simulate_from(model, controller, noise, x, mode, epoch.length, streams);
    for (int t = 0; t < epoch.length; ++t) {
      const int m = traj.modes[static_cast<std::size_t>(t)];
      const double c = traj.x(t).dot(cost.Q(m) * traj.x(t)) + traj.u(t).dot(cost.R(m) * traj.u(t));
      record.step_costs.push_back(c);
      epoch.cost += c;
    }

    std::optional<MjsModel> estimate;
    if (options.oracle_model) {
      estimate = model;
    } else {
      try {
        SysidResult id = options.known_B ? mjs_sysid_known_B(traj, controller, model.B(), noise, sysid_config)
                                         : mjs_sysid(traj, controller, noise, sysid_config);
        epoch.errors = estimation_error(id, model);
        estimate = id.model();
        epoch.sysid = std::move(id);
      } catch (const DegenerateRegressors& e) {
        epoch.estimation_degenerate = true;
        epoch.failure = e.what();
      }
    }

    if (estimate) {
      try {
        const auto sol = solve_cdare(*estimate, cost, options.cdare_tol, options.cdare_max_iter);
        controller = optimal_controller(*estimate, cost, sol);
      } catch (const NoConvergence& e) {
        epoch.cdare_failed = true;
        epoch.failure = e.what();
      } catch (const SingularInnerSolve& e) {
        epoch.cdare_failed = true;
        epoch.failure = e.what();
      }
    } else {
      epoch.cdare_failed = true;
    }

    x = traj.states.col(epoch.length);
    mode = traj.modes.back();
    if (record.trajectory) detail::append_trajectory(*record.trajectory, traj);
    start += epoch.length;
    record.epochs.push_back(std::move(epoch));
    record.regret_samples.emplace_back(start, regret(record, start));
  }
  return record;
}

/// Model and cost drawn the way the synthetic benchmarks are generated.
struct RandomProblem {
  MjsModel model;
  CostSpec cost;
};

/// Standard-normal A_i rescaled to ||A_i|| = spectral_cap, standard-normal B_i,
/// Q_j = G G^T, R_j = H H^T (regularized to min eigenvalue >= 1e-6) and rows of
/// T drawn from Dirichlet with concentration s on the diagonal and 1 elsewhere.
inline RandomProblem random_model(int n, int p, int s, double spectral_cap, std::uint64_t seed) {
  detail::require(n >= 1 && p >= 1 && s >= 1, "random_model: n, p, s must be positive");
  detail::require(spectral_cap > 0.0, "random_model: spectral_cap must be positive");
  Rng rng(seed);
  for (int attempt = 0; attempt < 10; ++attempt) {
    MatrixList a, b, q, r;
    for (int i = 0; i < s; ++i) {
      MatrixXd ai = rng.normal_matrix(n, n);
      const double norm = spectral_norm(ai);
      if (norm > 0.0) ai *= spectral_cap / norm;
      a.push_back(std::move(ai));
      b.push_back(rng.normal_matrix(n, p));
    }
    for (int i = 0; i < s; ++i) {
      const MatrixXd g = rng.normal_matrix(n, n);
      q.push_back(g * g.transpose());
      const MatrixXd h = rng.normal_matrix(p, p);
      MatrixXd ri = symmetrize(h * h.transpose());
      const double lambda_min = min_eigenvalue_symmetric(ri);
      if (lambda_min < 1e-6) ri += (1e-6 - lambda_min) * MatrixXd::Identity(p, p);
      r.push_back(std::move(ri));
    }
    MatrixXd t(s, s);
    for (int i = 0; i < s; ++i) {
      VectorXd alpha = VectorXd::Ones(s);
      alpha(i) = static_cast<double>(s);
      t.row(i) = rng.dirichlet(alpha).transpose();
    }
    MjsModel model(std::move(a), std::move(b), MarkovChain(std::move(t)));
    if (is_mss(model, ModeController::zeros(model)).mss) return {std::move(model), CostSpec(std::move(q), std::move(r))};
  }
  throw Error("random_model: could not draw an open-loop mean-square stable model in 10 attempts");
}

}  // namespace mjslqr
