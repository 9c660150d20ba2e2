#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "mjslqr/errors.hpp"

namespace mjslqr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// A list of per-mode matrices, indexed by mode 0..s-1.
using MatrixList = std::vector<MatrixXd>;

struct SpectralRadiusOptions {
  /// Dimensions above this use power iteration instead of a dense eigensolve.
  Eigen::Index dense_threshold = 400;
  double tolerance = 1e-8;
  int max_iterations = 100000;
};

namespace detail {

inline double power_iteration_radius(const MatrixXd& m, const SpectralRadiusOptions& opt) {
  const Eigen::Index dim = m.rows();
  // Positive start vector; for the augmented second-moment operators this is
  // in the interior of the cone their Perron vector lives in.
  VectorXd v = VectorXd::Ones(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) += 1e-3 * std::sin(1.0 + static_cast<double>(i));
  v.normalize();

  double previous_step = -1.0;
  double previous_estimate = -1.0;
  for (int it = 0; it < opt.max_iterations; ++it) {
    VectorXd w = m * v;
    const double step = w.norm();
    if (step == 0.0) return 0.0;
    if (!std::isfinite(step)) throw NoConvergence("spectral_radius: power iteration overflow");
    v = w / step;
    if (previous_step > 0.0) {
      // Geometric mean of two consecutive growth factors; tolerates a
      // dominant pair of eigenvalues +-lambda.
      const double estimate = std::sqrt(step * previous_step);
      if (previous_estimate > 0.0 &&
          std::abs(estimate - previous_estimate) <= opt.tolerance * estimate) {
        return estimate;
      }
      previous_estimate = estimate;
    }
    previous_step = step;
  }
  throw NoConvergence("spectral_radius: power iteration did not converge within the iteration cap");
}

}  // namespace detail

/// Largest eigenvalue modulus of a square matrix.
inline double spectral_radius(const MatrixXd& m, const SpectralRadiusOptions& opt = {}) {
  detail::require_shape(m.rows() == m.cols(), "spectral_radius: matrix must be square");
  detail::require(m.allFinite(), "spectral_radius: matrix has non-finite entries");
  if (m.size() == 0) return 0.0;
  if (m.rows() <= opt.dense_threshold) {
    Eigen::EigenSolver<MatrixXd> solver(m, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success)
      throw NoConvergence("spectral_radius: dense eigensolver failed");
    return solver.eigenvalues().cwiseAbs().maxCoeff();
  }
  return detail::power_iteration_radius(m, opt);
}

/// Operator 2-norm.
inline double spectral_norm(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() == 1 || m.cols() == 1) return m.norm();
  return Eigen::JacobiSVD<MatrixXd>(m).singularValues()(0);
}

/// Spectral norm of a symmetric matrix via its eigenvalues.
inline double symmetric_spectral_norm(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

inline MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

inline double min_eigenvalue_symmetric(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(symmetrize(m), Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

/// PSD within an absolute tolerance scaled by the matrix magnitude.
inline bool is_psd(const MatrixXd& m, double tol = 1e-8) {
  if (m.size() == 0) return true;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return min_eigenvalue_symmetric(m) >= -tol * scale;
}

inline MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
  return Eigen::kroneckerProduct(a, b).eval();
}

/// Column-stacking vectorization, so that (B^T (x) A) vec(X) = vec(A X B).
inline VectorXd vec(const MatrixXd& m) {
  return Eigen::Map<const VectorXd>(m.data(), m.size());
}

inline MatrixXd unvec(const Eigen::Ref<const VectorXd>& v, Eigen::Index rows, Eigen::Index cols) {
  detail::require_shape(v.size() == rows * cols, "unvec: size mismatch");
  MatrixXd m(rows, cols);
  Eigen::Map<VectorXd>(m.data(), m.size()) = v;
  return m;
}

/// Stack vec(V_1), ..., vec(V_s) into one column (the H map).
inline VectorXd stack_vec(const MatrixList& blocks) {
  Eigen::Index total = 0;
  for (const auto& b : blocks) total += b.size();
  VectorXd out(total);
  Eigen::Index offset = 0;
  for (const auto& b : blocks) {
    out.segment(offset, b.size()) = vec(b);
    offset += b.size();
  }
  return out;
}

/// Inverse of stack_vec for s square n x n blocks.
inline MatrixList unstack_vec(const Eigen::Ref<const VectorXd>& v, Eigen::Index n, Eigen::Index s) {
  detail::require_shape(v.size() == s * n * n, "unstack_vec: size mismatch");
  MatrixList out;
  out.reserve(static_cast<std::size_t>(s));
  for (Eigen::Index i = 0; i < s; ++i) out.push_back(unvec(v.segment(i * n * n, n * n), n, n));
  return out;
}

/// max_i ||M_i||, the norm of a list of matrices used throughout the bounds.
inline double max_spectral_norm(const MatrixList& ms) {
  double out = 0.0;
  for (const auto& m : ms) out = std::max(out, spectral_norm(m));
  return out;
}

}  // namespace mjslqr
