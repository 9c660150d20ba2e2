#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <queue>
#include <vector>

#include <Eigen/Dense>

#include "mjslqr/errors.hpp"
#include "mjslqr/random.hpp"

namespace mjslqr {

/// Modes are indexed 0..s-1 throughout the library.
using ModeSequence = std::vector<int>;

/// Finite Markov chain given by a row-stochastic transition matrix,
/// [T]_ij = P(next = j | current = i).
class MarkovChain {
 public:
  static constexpr double kRowSumTolerance = 1e-12;

  explicit MarkovChain(Eigen::MatrixXd transition) : t_(std::move(transition)) {
    detail::require(t_.rows() >= 1, "MarkovChain: at least one mode is required");
    detail::require_shape(t_.rows() == t_.cols(), "MarkovChain: transition matrix must be square");
    detail::require(t_.allFinite(), "MarkovChain: non-finite transition probability");
    detail::require((t_.array() >= 0.0).all() && (t_.array() <= 1.0).all(),
                    "MarkovChain: transition probabilities must lie in [0,1]");
    for (Eigen::Index i = 0; i < t_.rows(); ++i) {
      detail::require(std::abs(t_.row(i).sum() - 1.0) <= kRowSumTolerance,
                      "MarkovChain: every row must sum to 1");
    }
  }

  const Eigen::MatrixXd& transition() const { return t_; }
  int num_modes() const { return static_cast<int>(t_.rows()); }
  double operator()(int from, int to) const { return t_(from, to); }

 private:
  Eigen::MatrixXd t_;
};

struct StationaryDistribution {
  Eigen::VectorXd pi;
  double pi_min = 0.0;
};

/// Irreducible and aperiodic, decided on the support graph of T.
///
/// Irreducibility is mutual reachability from mode 0. The period of an
/// irreducible chain is gcd over support edges (u, v) of level(u) + 1 - level(v),
/// where level is the BFS distance from mode 0.
inline bool is_ergodic(const MarkovChain& chain) {
  const auto& t = chain.transition();
  const int s = chain.num_modes();

  auto bfs = [&](bool reversed) {
    std::vector<int> level(static_cast<std::size_t>(s), -1);
    std::queue<int> frontier;
    level[0] = 0;
    frontier.push(0);
    while (!frontier.empty()) {
      const int u = frontier.front();
      frontier.pop();
      for (int v = 0; v < s; ++v) {
        const double w = reversed ? t(v, u) : t(u, v);
        if (w > 0.0 && level[static_cast<std::size_t>(v)] < 0) {
          level[static_cast<std::size_t>(v)] = level[static_cast<std::size_t>(u)] + 1;
          frontier.push(v);
        }
      }
    }
    return level;
  };

  const auto level = bfs(false);
  const auto back = bfs(true);
  for (int v = 0; v < s; ++v) {
    if (level[static_cast<std::size_t>(v)] < 0 || back[static_cast<std::size_t>(v)] < 0) return false;
  }

  int period = 0;
  for (int u = 0; u < s; ++u) {
    for (int v = 0; v < s; ++v) {
      if (t(u, v) <= 0.0) continue;
      const int diff = level[static_cast<std::size_t>(u)] + 1 - level[static_cast<std::size_t>(v)];
      period = std::gcd(period, std::abs(diff));
    }
  }
  return period == 1;
}

/// Unique stationary distribution of an ergodic chain, from the bordered
/// system [T^T - I; 1^T] pi = [0; 1] solved in the least-squares sense.
inline StationaryDistribution stationary_distribution(const MarkovChain& chain) {
  if (!is_ergodic(chain)) throw NotErgodic("stationary_distribution: chain is not ergodic");
  const int s = chain.num_modes();
  const auto& t = chain.transition();

  Eigen::MatrixXd bordered(s + 1, s);
  bordered.topRows(s) = t.transpose() - Eigen::MatrixXd::Identity(s, s);
  bordered.row(s).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(s + 1);
  rhs(s) = 1.0;

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(bordered);
  if (qr.rank() != s) throw NotErgodic("stationary_distribution: eigenvalue 1 is not simple");
  Eigen::VectorXd pi = qr.solve(rhs);
  // One step of iterative refinement.
  pi += qr.solve(rhs - bordered * pi);

  if ((pi.array() <= 0.0).any()) {
    throw NotErgodic("stationary_distribution: stationary vector is not strictly positive");
  }
  pi /= pi.sum();
  return {pi, pi.minCoeff()};
}

/// max_i ||row_i(T^t) - pi||_1 for t = 1..horizon.
inline std::vector<double> distance_to_stationarity(const MarkovChain& chain, int horizon) {
  detail::require(horizon >= 1, "distance_to_stationarity: horizon must be positive");
  const auto pi = stationary_distribution(chain).pi;
  const auto& t = chain.transition();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(horizon));
  Eigen::MatrixXd power = t;
  for (int k = 1; k <= horizon; ++k) {
    const Eigen::MatrixXd diff = power.rowwise() - pi.transpose();
    out.push_back(diff.cwiseAbs().rowwise().sum().maxCoeff());
    power = power * t;
  }
  return out;
}

/// Smallest t <= cap with max_i ||row_i(T^t) - pi||_1 <= epsilon.
///
/// With the default epsilon = 0.5 this is the usual mixing time t_MC(1/4),
/// since total variation is half the l1 distance.
inline int mixing_time(const MarkovChain& chain, double epsilon = 0.5, int cap = 100000) {
  detail::require(epsilon > 0.0 && epsilon < 1.0, "mixing_time: epsilon must be in (0,1)");
  detail::require(cap >= 1, "mixing_time: cap must be positive");
  const auto pi = stationary_distribution(chain).pi;
  const auto& t = chain.transition();
  Eigen::MatrixXd power = t;
  for (int k = 1; k <= cap; ++k) {
    const Eigen::MatrixXd diff = power.rowwise() - pi.transpose();
    if (diff.cwiseAbs().rowwise().sum().maxCoeff() <= epsilon) return k;
    power = power * t;
  }
  throw CapExceeded("mixing_time: no t <= cap meets the threshold");
}

inline void validate_distribution(const Eigen::VectorXd& dist, int s, const char* what) {
  detail::require_shape(dist.size() == s, std::string(what) + ": distribution has wrong length");
  detail::require((dist.array() >= 0.0).all() && std::abs(dist.sum() - 1.0) <= 1e-10,
                  std::string(what) + ": not a probability vector");
}

/// Mode path of the given length starting from a fixed mode, drawn from rng.
inline ModeSequence sample_path_from(const MarkovChain& chain, int start_mode, int length, Rng& rng) {
  detail::require(length >= 1, "sample_path: length must be positive");
  detail::require(start_mode >= 0 && start_mode < chain.num_modes(), "sample_path: bad start mode");
  ModeSequence modes(static_cast<std::size_t>(length));
  modes[0] = start_mode;
  for (std::size_t k = 1; k < modes.size(); ++k) {
    modes[k] = rng.categorical(chain.transition().row(modes[k - 1]).transpose());
  }
  return modes;
}

inline ModeSequence sample_path(const MarkovChain& chain, const Eigen::VectorXd& initial_dist,
                                int length, std::uint64_t seed) {
  validate_distribution(initial_dist, chain.num_modes(), "sample_path");
  Rng rng(seed);
  const int start = rng.categorical(initial_dist);
  return sample_path_from(chain, start, length, rng);
}

struct TransitionEstimate {
  MarkovChain chain;
  /// Number of transitions leaving each mode.
  std::vector<long> visits;
  /// Modes never left during the sequence; their rows are uniform.
  std::vector<bool> unvisited;
  Eigen::MatrixXd counts;
};

/// Empirical transition frequencies [T]_ji = #(j -> i) / #(j -> .).
inline TransitionEstimate estimate_transition(const ModeSequence& modes, int num_modes) {
  detail::require(modes.size() >= 2, "estimate_transition: need at least two modes");
  detail::require(num_modes >= 1, "estimate_transition: num_modes must be positive");
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(num_modes, num_modes);
  for (std::size_t k = 1; k < modes.size(); ++k) {
    const int from = modes[k - 1];
    const int to = modes[k];
    detail::require(from >= 0 && from < num_modes && to >= 0 && to < num_modes,
                    "estimate_transition: mode out of range");
    counts(from, to) += 1.0;
  }
  Eigen::MatrixXd t(num_modes, num_modes);
  std::vector<long> visits(static_cast<std::size_t>(num_modes));
  std::vector<bool> unvisited(static_cast<std::size_t>(num_modes), false);
  for (int j = 0; j < num_modes; ++j) {
    const double total = counts.row(j).sum();
    visits[static_cast<std::size_t>(j)] = static_cast<long>(total);
    if (total == 0.0) {
      t.row(j).setConstant(1.0 / num_modes);
      unvisited[static_cast<std::size_t>(j)] = true;
    } else {
      t.row(j) = counts.row(j) / total;
    }
  }
  return {MarkovChain(std::move(t)), std::move(visits), std::move(unvisited), std::move(counts)};
}

}  // namespace mjslqr
