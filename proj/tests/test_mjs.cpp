#include <cmath>

#include <gtest/gtest.h>

#include "mjslqr/adaptive.hpp"
#include "mjslqr/moments.hpp"

using namespace mjslqr;

namespace {

MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

MarkovChain chain(std::initializer_list<std::initializer_list<double>> rows) {
  const auto s = static_cast<Eigen::Index>(rows.size());
  MatrixXd t(s, s);
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) t(i, j++) = v;
    ++i;
  }
  return MarkovChain(t);
}

/// Fig. 1 style autonomous model: scalar modes 1.2 and 0.7.
MjsModel unstable_mode_model() {
  return MjsModel({scalar(1.2), scalar(0.7)}, {MatrixXd::Zero(1, 0), MatrixXd::Zero(1, 0)},
                  chain({{0.6, 0.4}, {0.3, 0.7}}));
}

MjsModel scalar_model(double a, double b) {
  return MjsModel({scalar(a)}, {scalar(b)}, MarkovChain(MatrixXd::Ones(1, 1)));
}

}  // namespace

TEST(ClosedLoop, ScalarExample) {
  const MjsModel m({scalar(1.2), scalar(0.7)}, {scalar(1.0), scalar(1.0)}, chain({{0.6, 0.4}, {0.3, 0.7}}));
  const auto l = closed_loop(m, {{scalar(-0.5), scalar(-0.5)}});
  EXPECT_DOUBLE_EQ(l[0](0, 0), 0.7);
  EXPECT_DOUBLE_EQ(l[1](0, 0), 0.2);
}

TEST(ClosedLoop, ZeroGainAndZeroInputMatrix) {
  const auto problem = random_model(3, 2, 2, 0.5, 4);
  const auto l = closed_loop(problem.model, ModeController::zeros(problem.model));
  for (int i = 0; i < 2; ++i) EXPECT_EQ(l[static_cast<std::size_t>(i)], problem.model.A(i));

  const MjsModel null_b(problem.model.A(), {MatrixXd::Zero(3, 2), MatrixXd::Zero(3, 2)}, problem.model.chain());
  Rng rng(1);
  const ModeController k{{rng.normal_matrix(2, 3), rng.normal_matrix(2, 3)}};
  const auto l2 = closed_loop(null_b, k);
  for (int i = 0; i < 2; ++i) EXPECT_EQ(l2[static_cast<std::size_t>(i)], problem.model.A(i));
}

TEST(ClosedLoop, ShapeMismatch) {
  const auto m = unstable_mode_model();
  EXPECT_THROW(closed_loop(m, {{MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1)}}), ShapeMismatch);
  EXPECT_THROW(closed_loop(m, {{MatrixXd::Zero(0, 1)}}), ShapeMismatch);
}

TEST(AugmentedMatrix, UnstableModeHandComputed) {
  const auto aug = augmented_matrix(unstable_mode_model(), ModeController::zeros(unstable_mode_model()));
  MatrixXd expected(2, 2);
  expected << 0.864, 0.147, 0.576, 0.343;
  EXPECT_LE((aug.matrix - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(AugmentedMatrix, BlocksAreWeightedKroneckers) {
  const auto problem = random_model(3, 2, 3, 0.5, 8);
  Rng rng(2);
  ModeController k{{0.1 * rng.normal_matrix(2, 3), 0.1 * rng.normal_matrix(2, 3), 0.1 * rng.normal_matrix(2, 3)}};
  const auto aug = augmented_matrix(problem.model, k);
  const auto l = closed_loop(problem.model, k);
  EXPECT_EQ(aug.matrix.rows(), 3 * 9);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      // Independent Kronecker product by definition of its entries.
      const auto& lj = l[static_cast<std::size_t>(j)];
      MatrixXd kr(9, 9);
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) kr.block(3 * a, 3 * b, 3, 3) = lj(a, b) * lj;
      EXPECT_LE((aug.block(i, j) - problem.model.chain()(j, i) * kr).cwiseAbs().maxCoeff(), 1e-15);
    }
  }
}

TEST(AugmentedMatrix, SingleModeAndNilpotent) {
  const auto m = scalar_model(0.3, 0.0);
  EXPECT_NEAR(augmented_matrix(m, ModeController::zeros(m)).matrix(0, 0), 0.09, 1e-16);
  const MjsModel zero({scalar(0.0), scalar(0.0)}, {MatrixXd::Zero(1, 0), MatrixXd::Zero(1, 0)},
                      chain({{0.5, 0.5}, {0.5, 0.5}}));
  EXPECT_TRUE(augmented_matrix(zero, ModeController::zeros(zero)).matrix.isZero());
}

TEST(SpectralRadius, DiagonalAndCounterexample) {
  EXPECT_NEAR(spectral_radius(Eigen::Vector2d(0.5, -0.9).asDiagonal().toDenseMatrix()), 0.9, 1e-14);
  const MjsModel m({scalar(2.0), scalar(0.5)}, {MatrixXd::Zero(1, 0), MatrixXd::Zero(1, 0)},
                   chain({{0.1, 0.9}, {0.1, 0.9}}));
  const auto aug = augmented_matrix(m, ModeController::zeros(m));
  MatrixXd expected(2, 2);
  expected << 0.4, 0.025, 3.6, 0.225;
  EXPECT_LE((aug.matrix - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_NEAR(spectral_radius(aug.matrix), 0.625, 1e-12);
}

TEST(SpectralRadius, PowerIterationAgreesWithDensePath) {
  const auto problem = random_model(4, 2, 3, 0.9, 17);
  const auto aug = augmented_matrix(problem.model, ModeController::zeros(problem.model));
  SpectralRadiusOptions power;
  power.dense_threshold = 0;
  power.tolerance = 1e-12;
  const double dense = spectral_radius(aug.matrix);
  EXPECT_NEAR(spectral_radius(aug.matrix, power), dense, 1e-8 * dense);
}

TEST(IsMss, UnstableModeAndBoundaryCases) {
  const auto mixed = is_mss(unstable_mode_model(), ModeController::zeros(unstable_mode_model()));
  EXPECT_TRUE(mixed.mss);
  // Roots of x^2 - 1.207 x + 0.211680 (trace and determinant of the 2x2 matrix).
  const double tr = 1.207, det = 0.864 * 0.343 - 0.147 * 0.576;
  EXPECT_NEAR(mixed.rho, 0.5 * (tr + std::sqrt(tr * tr - 4 * det)), 1e-12);
  EXPECT_NEAR(mixed.rho, 0.9941, 1e-3);

  const auto unit = scalar_model(1.0, 0.0);
  EXPECT_FALSE(is_mss(unit, ModeController::zeros(unit)).mss);
  EXPECT_FALSE(is_mss(unstable_mode_model(), ModeController::zeros(unstable_mode_model()), 0.01).mss);
}

TEST(IsMss, SmallNormModelsAreStable) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto problem = random_model(3, 2, 4, 0.5, seed);
    for (int i = 0; i < 4; ++i) EXPECT_LE(spectral_norm(problem.model.A(i)), 0.5 + 1e-10);
    EXPECT_TRUE(is_mss(problem.model, ModeController::zeros(problem.model)).mss);
  }
}

TEST(Simulate, DeterministicScalarDecay) {
  const auto m = scalar_model(0.5, 0.0);
  const auto traj = simulate(m, ModeController::zeros(m), NoiseSpec(0, 0), VectorXd::Ones(1), VectorXd::Ones(1), 20, 3);
  for (int t = 0; t <= 20; ++t) EXPECT_DOUBLE_EQ(traj.x(t)(0), std::pow(0.5, t));
}

TEST(Simulate, SameSeedSameTrajectoryAndInputsRecomputable) {
  const auto problem = random_model(3, 2, 3, 0.5, 12);
  Rng rng(4);
  ModeController k{{0.1 * rng.normal_matrix(2, 3), 0.1 * rng.normal_matrix(2, 3), 0.1 * rng.normal_matrix(2, 3)}};
  const NoiseSpec noise(0.1, 0.2);
  const VectorXd x0 = VectorXd::Ones(3);
  const auto a = simulate(problem.model, k, noise, x0, uniform_distribution(3), 500, 77);
  const auto b = simulate(problem.model, k, noise, x0, uniform_distribution(3), 500, 77);
  EXPECT_EQ(a.states, b.states);
  EXPECT_EQ(a.modes, b.modes);
  for (int t = 0; t < 500; ++t) {
    const int mode = a.modes[static_cast<std::size_t>(t)];
    EXPECT_LE((a.u(t) - (k[mode] * a.x(t) + a.z(t))).norm(), 1e-14);
    const VectorXd next = problem.model.A(mode) * a.x(t) + problem.model.B(mode) * a.u(t) + a.disturbances.col(t);
    EXPECT_LE((a.x(t + 1) - next).norm(), 1e-14);
  }
}

TEST(Simulate, ScalarStationaryVariance) {
  const auto m = scalar_model(0.5, 0.0);
  const int horizon = 100000;
  const auto traj = simulate(m, ModeController::zeros(m), NoiseSpec(1, 0), VectorXd::Zero(1), VectorXd::Ones(1),
                             horizon, 5);
  const Eigen::ArrayXd sq = traj.states.row(0).tail(horizon).array().square();
  const double mean = sq.mean();
  // Var(x^2) = 2 v^2 with v = 4/3; lag-k correlation of x^2 is 0.25^k, so the
  // variance of the mean is inflated by 1 + 2 sum_k 0.25^k = 5/3.
  const double var = 2.0 * (4.0 / 3.0) * (4.0 / 3.0) * (5.0 / 3.0);
  EXPECT_NEAR(mean, 4.0 / 3.0, 3.0 * std::sqrt(var / horizon));
}

TEST(Simulate, ExplorationHasNoEffectWithoutInputs) {
  const auto problem = random_model(3, 2, 2, 0.5, 31);
  const MjsModel zero_b(problem.model.A(), {MatrixXd::Zero(3, 2), MatrixXd::Zero(3, 2)}, problem.model.chain());
  const MjsModel no_input(problem.model.A(), {MatrixXd::Zero(3, 0), MatrixXd::Zero(3, 0)}, problem.model.chain());
  const VectorXd x0 = VectorXd::Ones(3);
  const auto a = simulate(zero_b, ModeController::zeros(zero_b), NoiseSpec(0.1, 0.5), x0, uniform_distribution(2), 200, 8);
  const auto b = simulate(no_input, ModeController::zeros(no_input), NoiseSpec(0.1, 0.0), x0, uniform_distribution(2), 200, 8);
  EXPECT_EQ(a.states, b.states);
  EXPECT_EQ(a.modes, b.modes);
}

TEST(CovarianceRecursion, NoExcitationStaysZero) {
  const auto problem = random_model(2, 2, 2, 0.5, 3);
  const auto cov = covariance_recursion(problem.model, ModeController::zeros(problem.model), NoiseSpec(0, 0),
                                        VectorXd::Zero(2), uniform_distribution(2), 20);
  for (int t = 0; t <= 20; ++t) EXPECT_TRUE(cov.stacked(t).isZero());
}

TEST(CovarianceRecursion, ScalarGeometricSeries) {
  const auto m = scalar_model(0.5, 0.0);
  const auto cov = covariance_recursion(m, ModeController::zeros(m), NoiseSpec(1, 0), VectorXd::Zero(1),
                                        VectorXd::Ones(1), 40);
  for (int t = 0; t <= 40; ++t) {
    double expected = 0.0;
    for (int k = 0; k < t; ++k) expected += std::pow(0.25, k);
    EXPECT_NEAR(cov.second_moment(t), expected, 1e-14);
  }
  EXPECT_NEAR(cov.second_moment(40), 4.0 / 3.0, 1e-12);
}

// The block update must agree with the stacked Kronecker form
//   s_{t+1} = L~ s_t + B~_{t+1} vec(Sigma_z) + Pi~_{t+1} vec(Sigma_w),
// where block i of B~_{t+1} is sum_j pi_t(j) T_ji (B_j (x) B_j).
TEST(CovarianceRecursion, MatchesKroneckerForm) {
  const auto problem = random_model(3, 2, 3, 0.6, 19);
  const auto& model = problem.model;
  Rng rng(6);
  ModeController k;
  for (int i = 0; i < 3; ++i) k.K.push_back(0.1 * rng.normal_matrix(2, 3));
  const MatrixXd g = rng.normal_matrix(3, 3), h = rng.normal_matrix(2, 2);
  const MatrixXd sw = 0.01 * g * g.transpose(), sz = 0.04 * h * h.transpose();
  VectorXd pi0(3);
  pi0 << 0.2, 0.5, 0.3;
  MatrixList init;
  for (int i = 0; i < 3; ++i) {
    const MatrixXd f = rng.normal_matrix(3, 3);
    init.push_back(pi0(i) * f * f.transpose());
  }
  const int horizon = 15;
  const auto cov = covariance_recursion(model, k, sw, sz, init, pi0, horizon);

  const MatrixXd lt = augmented_matrix(model, k).matrix;
  const auto& t = model.chain().transition();
  VectorXd s = stack_vec(init);
  VectorXd pi = pi0;
  for (int step = 0; step < horizon; ++step) {
    const VectorXd pi_next = t.transpose() * pi;
    VectorXd forcing = VectorXd::Zero(27);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j)
        forcing.segment(9 * i, 9) += pi(j) * t(j, i) * kron(model.B(j), model.B(j)) * vec(sz);
      forcing.segment(9 * i, 9) += pi_next(i) * vec(sw);
    }
    s = lt * s + forcing;
    pi = pi_next;
    EXPECT_LE((cov.stacked(step + 1) - s).norm(), 1e-12 * (1.0 + s.norm()));
    EXPECT_LE((cov.pi[static_cast<std::size_t>(step + 1)] - pi).norm(), 1e-15);
  }
}

TEST(CovarianceRecursion, BlocksSymmetricPsd) {
  const auto problem = random_model(3, 2, 3, 0.9, 23);
  const auto cov = covariance_recursion(problem.model, ModeController::zeros(problem.model), NoiseSpec(0.3, 0.2),
                                        VectorXd::Ones(3), uniform_distribution(3), 50);
  for (int t = 0; t <= 50; ++t) {
    for (const auto& b : cov.sigma[static_cast<std::size_t>(t)]) {
      EXPECT_LE((b - b.transpose()).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_GE(min_eigenvalue_symmetric(symmetrize(b)), -1e-8);
    }
  }
}

TEST(CovarianceRecursion, TraceConvergesUnderMss) {
  const auto m = unstable_mode_model();
  const double rho = is_mss(m, ModeController::zeros(m)).rho;
  const int horizon = static_cast<int>(30.0 / (1.0 - rho));
  const auto cov = covariance_recursion(m, ModeController::zeros(m), NoiseSpec(1, 0), VectorXd::Zero(1),
                                        VectorXd::Constant(2, 0.5), horizon);
  EXPECT_LT(std::abs(cov.second_moment(horizon) - cov.second_moment(horizon - 1)), 1e-6);
}

TEST(CovarianceRecursion, RejectsIndefiniteInputs) {
  const auto problem = random_model(2, 1, 2, 0.5, 1);
  MatrixList init(2, MatrixXd::Zero(2, 2));
  MatrixXd bad = MatrixXd::Identity(2, 2);
  bad(1, 1) = -1;
  EXPECT_THROW(covariance_recursion(problem.model, ModeController::zeros(problem.model), bad, MatrixXd::Zero(1, 1),
                                    init, uniform_distribution(2), 3),
               NotPsd);
  EXPECT_THROW(covariance_recursion(problem.model, ModeController::zeros(problem.model), MatrixXd::Zero(3, 3),
                                    MatrixXd::Zero(1, 1), init, uniform_distribution(2), 3),
               ShapeMismatch);
}

TEST(SecondMomentBound, ScalarPlugIn) {
  const auto m = scalar_model(0.5, 0.0);
  const auto bound = second_moment_bound(m, NoiseSpec(1, 0), 0.0, DecayPair{1.0, 0.25}, 10);
  for (double b : bound) EXPECT_NEAR(b, 4.0 / 3.0, 1e-15);
  const auto zero = second_moment_bound(m, NoiseSpec(0, 0), 0.0, DecayPair{1.0, 0.25}, 10);
  for (double b : zero) EXPECT_EQ(b, 0.0);
  EXPECT_THROW(second_moment_bound(m, NoiseSpec(1, 0), 0.0, DecayPair{1.0, 1.0}, 10), InvalidDecayPair);
}

TEST(SecondMomentBound, DominatesExactRecursion) {
  const auto m = unstable_mode_model();
  const NoiseSpec noise(1.0, 0.0);
  const VectorXd x0 = VectorXd::Constant(1, 2.0);
  const auto bound = second_moment_bound(m, ModeController::zeros(m), noise, x0.squaredNorm(), 100);
  const auto cov = covariance_recursion(m, ModeController::zeros(m), noise, x0, VectorXd::Constant(2, 0.5), 100);
  for (int t = 0; t <= 100; ++t) EXPECT_GE(bound[static_cast<std::size_t>(t)], cov.second_moment(t));

  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto problem = random_model(2, 1, 2, 0.8, seed);
    const NoiseSpec nz(0.1, 0.1);
    const auto b2 = second_moment_bound(problem.model, ModeController::zeros(problem.model), nz, 2.0, 60);
    const auto c2 = covariance_recursion(problem.model, ModeController::zeros(problem.model), nz, VectorXd::Ones(2),
                                         uniform_distribution(2), 60);
    for (int t = 0; t <= 60; ++t) EXPECT_GE(b2[static_cast<std::size_t>(t)], c2.second_moment(t));
  }
}
