#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mjslqr/errors.hpp"
#include "mjslqr/linalg.hpp"
#include "mjslqr/markov.hpp"
#include "mjslqr/random.hpp"

namespace mjslqr {

/// Markov jump linear system x_{t+1} = A_{w(t)} x_t + B_{w(t)} u_t + w_t.
///
/// p = 0 is allowed (autonomous system); B_i are then n x 0.
class MjsModel {
 public:
  MjsModel(MatrixList a, MatrixList b, MarkovChain chain)
      : a_(std::move(a)), b_(std::move(b)), chain_(std::move(chain)) {
    const auto s = static_cast<std::size_t>(chain_.num_modes());
    detail::require_shape(a_.size() == s && b_.size() == s,
                          "MjsModel: need one A and one B per mode");
    const Eigen::Index n = a_.front().rows();
    const Eigen::Index p = b_.front().cols();
    detail::require(n >= 1, "MjsModel: state dimension must be positive");
    for (std::size_t i = 0; i < s; ++i) {
      detail::require_shape(a_[i].rows() == n && a_[i].cols() == n, "MjsModel: A_i must be n x n");
      detail::require_shape(b_[i].rows() == n && b_[i].cols() == p, "MjsModel: B_i must be n x p");
      detail::require(a_[i].allFinite() && b_[i].allFinite(), "MjsModel: non-finite entry");
    }
  }

  const MatrixList& A() const { return a_; }
  const MatrixList& B() const { return b_; }
  const MatrixXd& A(int mode) const { return a_[static_cast<std::size_t>(mode)]; }
  const MatrixXd& B(int mode) const { return b_[static_cast<std::size_t>(mode)]; }
  const MarkovChain& chain() const { return chain_; }

  Eigen::Index n() const { return a_.front().rows(); }
  Eigen::Index p() const { return b_.front().cols(); }
  int s() const { return chain_.num_modes(); }

 private:
  MatrixList a_;
  MatrixList b_;
  MarkovChain chain_;
};

/// Mode-dependent state feedback u_t = K_{w(t)} x_t.
struct ModeController {
  MatrixList K;

  static ModeController zeros(const MjsModel& model) {
    return {MatrixList(static_cast<std::size_t>(model.s()), MatrixXd::Zero(model.p(), model.n()))};
  }

  const MatrixXd& operator[](int mode) const { return K[static_cast<std::size_t>(mode)]; }
};

inline void check_compatible(const MjsModel& model, const ModeController& controller) {
  detail::require_shape(controller.K.size() == static_cast<std::size_t>(model.s()),
                        "controller: need one gain per mode");
  for (const auto& k : controller.K) {
    detail::require_shape(k.rows() == model.p() && k.cols() == model.n(),
                          "controller: K_i must be p x n");
  }
}

/// Isotropic process noise N(0, sigma_w^2 I) and exploration noise N(0, sigma_z^2 I).
struct NoiseSpec {
  double sigma_w = 0.0;
  double sigma_z = 0.0;

  NoiseSpec() = default;
  NoiseSpec(double w, double z) : sigma_w(w), sigma_z(z) {
    detail::require(sigma_w >= 0.0 && sigma_z >= 0.0 && std::isfinite(sigma_w) && std::isfinite(sigma_z),
                    "NoiseSpec: standard deviations must be finite and nonnegative");
  }
};

/// Recorded rollout. Column t of `states` is x_t (t = 0..T); columns of
/// `explorations`, `inputs`, `disturbances` are z_t, u_t, w_t (t = 0..T-1).
struct Trajectory {
  MatrixXd states;
  ModeSequence modes;
  MatrixXd explorations;
  MatrixXd inputs;
  MatrixXd disturbances;

  int horizon() const { return static_cast<int>(inputs.cols()); }
  Eigen::Index n() const { return states.rows(); }
  Eigen::Index p() const { return inputs.rows(); }
  auto x(int t) const { return states.col(t); }
  auto z(int t) const { return explorations.col(t); }
  auto u(int t) const { return inputs.col(t); }
};

inline MatrixList closed_loop(const MjsModel& model, const ModeController& controller) {
  check_compatible(model, controller);
  MatrixList out;
  out.reserve(static_cast<std::size_t>(model.s()));
  for (int i = 0; i < model.s(); ++i) out.push_back(model.A(i) + model.B(i) * controller[i]);
  return out;
}

/// The sn^2 x sn^2 second-moment propagator with blocks [T]_ji (L_j (x) L_j).
struct AugmentedMatrix {
  MatrixXd matrix;
  Eigen::Index block_size = 0;
  int num_modes = 0;

  auto block(int i, int j) const {
    return matrix.block(i * block_size, j * block_size, block_size, block_size);
  }
};

inline AugmentedMatrix augmented_matrix(const MarkovChain& chain, const MatrixList& closed) {
  const int s = chain.num_modes();
  detail::require_shape(closed.size() == static_cast<std::size_t>(s), "augmented_matrix: need s matrices");
  const Eigen::Index n = closed.front().rows();
  const Eigen::Index nn = n * n;
  AugmentedMatrix out{MatrixXd::Zero(s * nn, s * nn), nn, s};
  for (int j = 0; j < s; ++j) {
    const MatrixXd kj = kron(closed[static_cast<std::size_t>(j)], closed[static_cast<std::size_t>(j)]);
    for (int i = 0; i < s; ++i) {
      const double weight = chain(j, i);
      if (weight != 0.0) out.matrix.block(i * nn, j * nn, nn, nn) = weight * kj;
    }
  }
  return out;
}

inline AugmentedMatrix augmented_matrix(const MjsModel& model, const ModeController& controller) {
  return augmented_matrix(model.chain(), closed_loop(model, controller));
}

struct MssReport {
  bool mss = false;
  double rho = 0.0;
};

/// Mean-square stability: rho(L~) < 1 - margin.
inline MssReport is_mss(const MjsModel& model, const ModeController& controller, double margin = 0.0,
                        const SpectralRadiusOptions& opt = {}) {
  const double rho = spectral_radius(augmented_matrix(model, controller).matrix, opt);
  return {rho < 1.0 - margin, rho};
}

/// Independent random streams for one rollout: modes, process noise, exploration.
/// Keeping them separate means w_t and w(t) do not depend on p or sigma_z.
struct SimulationStreams {
  Rng modes;
  Rng process;
  Rng exploration;

  explicit SimulationStreams(std::uint64_t seed)
      : modes(derive_seed(seed, {1})), process(derive_seed(seed, {2})), exploration(derive_seed(seed, {3})) {}
};

/// Continue a rollout from a known state and mode, drawing from `streams`.
inline Trajectory simulate_from(const MjsModel& model, const ModeController& controller, const NoiseSpec& noise,
                                const VectorXd& x0, int mode0, int horizon, SimulationStreams& streams) {
  check_compatible(model, controller);
  detail::require(horizon >= 1, "simulate: horizon must be positive");
  detail::require_shape(x0.size() == model.n(), "simulate: x0 has wrong dimension");
  detail::require(mode0 >= 0 && mode0 < model.s(), "simulate: initial mode out of range");

  const Eigen::Index n = model.n();
  const Eigen::Index p = model.p();
  Trajectory traj;
  traj.states.resize(n, horizon + 1);
  traj.modes.resize(static_cast<std::size_t>(horizon) + 1);
  traj.explorations.resize(p, horizon);
  traj.inputs.resize(p, horizon);
  traj.disturbances.resize(n, horizon);

  traj.states.col(0) = x0;
  traj.modes[0] = mode0;
  const auto& t = model.chain().transition();
  for (int k = 0; k < horizon; ++k) {
    const int mode = traj.modes[static_cast<std::size_t>(k)];
    VectorXd z = noise.sigma_z * streams.exploration.normal_vector(p);
    VectorXd w = noise.sigma_w * streams.process.normal_vector(n);
    VectorXd u = controller[mode] * traj.states.col(k) + z;
    traj.states.col(k + 1) = model.A(mode) * traj.states.col(k) + model.B(mode) * u + w;
    traj.explorations.col(k) = z;
    traj.inputs.col(k) = u;
    traj.disturbances.col(k) = w;
    traj.modes[static_cast<std::size_t>(k) + 1] = streams.modes.categorical(t.row(mode).transpose());
  }
  return traj;
}

/// Rollout of the closed loop u_t = K_{w(t)} x_t + z_t with the initial mode
/// drawn from `omega0_dist`. Deterministic given the seed.
inline Trajectory simulate(const MjsModel& model, const ModeController& controller, const NoiseSpec& noise,
                           const VectorXd& x0, const VectorXd& omega0_dist, int horizon, std::uint64_t seed) {
  validate_distribution(omega0_dist, model.s(), "simulate");
  SimulationStreams streams(seed);
  const int mode0 = streams.modes.categorical(omega0_dist);
  return simulate_from(model, controller, noise, x0, mode0, horizon, streams);
}

inline VectorXd uniform_distribution(int s) { return VectorXd::Constant(s, 1.0 / s); }

}  // namespace mjslqr
