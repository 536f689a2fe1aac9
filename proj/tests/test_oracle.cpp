#include "overparam/descent.hpp"
#include "overparam/oracle.hpp"

#include <gtest/gtest.h>

using namespace overparam;

TEST(Compare, RelativeGap) {
  const OracleReport r = compare("x", 3.0, 1.0);
  EXPECT_EQ(r.quantity, "x");
  EXPECT_DOUBLE_EQ(r.relative_error, 2.0 / 4.0);
  EXPECT_DOUBLE_EQ(compare("y", -1.0, -1.0).relative_error, 0.0);
  EXPECT_DOUBLE_EQ(relative_matrix_gap(Matrix::Identity(2, 2), Matrix::Zero(2, 2)), std::sqrt(2.0) / (1 + std::sqrt(2.0)));
}

TEST(FdJacobian, LinearIsExactData) {
  Rng rng(1);
  const Matrix X = rng.normal_matrix(4, 6);
  const LinearModel m(X, Vector::Zero(4));
  const Matrix J = fd_jacobian(m, rng.normal_vector(6));
  EXPECT_LE((J - X).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FdJacobian, GlmAtOrigin) {
  Rng rng(2);
  const GLMModel m(rng.normal_matrix(5, 8), Vector::Zero(5), Activation::tanh_linear(0.3));
  const ParamVector zero = ParamVector::Zero(8);
  const Matrix J = fd_jacobian(m, zero, 1e-6);
  EXPECT_LE(relative_matrix_gap(J, jacobian(m, zero)), 1e-7);
}

TEST(FdJacobian, LowRankSeven) {
  const Index d = 3, r = 2, n = 4;
  Rng rng(7);
  std::vector<Matrix> Xs;
  for (Index i = 0; i < n; ++i) Xs.push_back(rng.normal_matrix(d, d));
  const LowRankModel m(Xs, rng.normal_vector(n), d, r);
  const ParamVector theta = rng.normal_vector(d * r);
  EXPECT_LE(relative_matrix_gap(fd_jacobian(m, theta), jacobian(m, theta)), 1e-5);
}

TEST(FdJacobian, AllFamiliesAtRandomPoints) {
  Rng rng(3);
  std::vector<Matrix> Xs;
  for (int i = 0; i < 3; ++i) Xs.push_back(rng.normal_matrix(4, 4));
  const LinearModel lin(rng.normal_matrix(3, 5), rng.normal_vector(3));
  const GLMModel glm(rng.normal_matrix(3, 5), rng.normal_vector(3), Activation::softplus_linear(0.4));
  const LowRankModel low(Xs, rng.normal_vector(3), 4, 2);
  const ShallowNetModel net(rng.normal_matrix(3, 4), rng.normal_vector(3), random_unit_vector(rng, 5),
                            Activation::tanh_linear(0.3));
  for (const Model* m : std::initializer_list<const Model*>{&lin, &glm, &low, &net}) {
    for (int k = 0; k < 20; ++k) {
      const ParamVector theta = rng.normal_vector(m->param_dim());
      EXPECT_LE(relative_matrix_gap(fd_jacobian(*m, theta), jacobian(*m, theta)), 1e-5) << m->family();
    }
  }
}

TEST(FdJacobian, RejectsNonpositiveStep) {
  const LinearModel m(Matrix::Identity(2, 2), Vector::Zero(2));
  EXPECT_THROW(fd_jacobian(m, ParamVector::Zero(2), 0.0), ContractError);
  EXPECT_DOUBLE_EQ(default_fd_step((ParamVector(2) << -3, 1).finished()), 4e-6);
}

TEST(FdGradient, Quadratic) {
  auto fn = [](const ParamVector& t) { return t.squaredNorm() + 3.0 * t[0]; };
  const ParamVector g = fd_gradient(fn, (ParamVector(2) << 1, -2).finished());
  EXPECT_NEAR(g[0], 5.0, 1e-7);
  EXPECT_NEAR(g[1], -4.0, 1e-7);
}

TEST(EnumerateSgd, ConstantFunction) {
  Rng rng(4);
  const LinearModel m(rng.normal_matrix(6, 3), rng.normal_vector(6));
  EXPECT_DOUBLE_EQ(enumerate_sgd_expectation(m, rng.normal_vector(3), 0.1, [](const ParamVector&) { return 2.5; }),
                   2.5);
}

TEST(EnumerateSgd, IdentityExample) {
  const LinearModel m(Matrix::Identity(2, 2), Vector::Zero(2));
  auto sq = [&](const ParamVector& t) { return residual(m, t).squaredNorm(); };
  EXPECT_DOUBLE_EQ(enumerate_sgd_expectation(m, ParamVector::Ones(2), 0.5, sq), 1.25);
}

TEST(EnumerateSgd, MatchesSampledMean) {
  Rng rng(5);
  const GLMModel m(rng.normal_matrix(7, 4), rng.normal_vector(7), Activation::tanh_linear(0.3));
  const ParamVector theta = rng.normal_vector(4);
  const double eta = 0.05;
  auto sq = [&](const ParamVector& t) { return residual(m, t).squaredNorm(); };
  const double exact = enumerate_sgd_expectation(m, theta, eta, sq);

  std::vector<double> per_index(7);
  for (Index i = 0; i < 7; ++i) per_index[i] = sq(theta - eta * per_sample_gradient(m, theta, i));
  const std::uint64_t draws = 100000;
  double sum = 0.0, sum_sq = 0.0;
  std::vector<double> counts(7, 0.0);
  for (std::uint64_t s = 0; s < draws; ++s) {
    const Index i = sgd_index(99, s, 7);
    counts[i] += 1.0;
    sum += per_index[i];
    sum_sq += per_index[i] * per_index[i];
  }
  const double mean = sum / draws;
  const double se = std::sqrt(std::max(0.0, sum_sq / draws - mean * mean) / draws);
  EXPECT_LE(std::abs(mean - exact), 3.0 * se);

  const double p = 1.0 / 7.0, count_se = std::sqrt(draws * p * (1 - p));
  for (double c : counts) EXPECT_LE(std::abs(c - draws * p), 3.0 * count_se);
}

TEST(EnumerateSgd, Cap) {
  const Index n = kEnumerationCap + 1;
  const LinearModel m(Matrix::Ones(n, 1), Vector::Zero(n));
  EXPECT_THROW(enumerate_sgd_expectation(m, ParamVector::Zero(1), 0.1, [](const ParamVector&) { return 0.0; }),
               CapacityError);
}

TEST(PseudoInverse, Examples) {
  const Vector z = (Vector(3) << 1, -2, 3).finished();
  EXPECT_LE((pseudo_inverse_solution(Matrix::Identity(3, 3), z) - z).norm(), 1e-15);
  const ParamVector t = pseudo_inverse_solution((Matrix(1, 2) << 1, 0).finished(), (Vector(1) << 2).finished());
  EXPECT_DOUBLE_EQ(t[0], 2.0);
  EXPECT_DOUBLE_EQ(t[1], 0.0);
}

TEST(PseudoInverse, RandomFullRank) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix X = rng.normal_matrix(3, 7);
    const Vector z = rng.normal_vector(3);
    const ParamVector t = pseudo_inverse_solution(X, z);
    EXPECT_LE((X * t - z).norm(), 1e-10 * (1.0 + z.norm()));
    // lies in the row space
    const ParamVector back = X.transpose() * (X * X.transpose()).ldlt().solve(X * t);
    EXPECT_LE((back - t).norm(), 1e-10 * (1.0 + t.norm()));
  }
}

TEST(PseudoInverse, Singular) {
  Matrix X(2, 3);
  X << 1, 1, 1, 2, 2, 2;
  EXPECT_THROW(pseudo_inverse_solution(X, Vector::Ones(2)), RankDeficientError);
}

TEST(LowRankInit, RademacherInterval) {
  Vector y(100);
  Rng rng(8);
  for (Index i = 0; i < 100; ++i) y[i] = rng.rademacher();
  EXPECT_DOUBLE_EQ(y.norm(), 10.0);
  const InitInterval iv = lowrank_init_interval(4, 100, y.norm());
  EXPECT_NEAR(iv.low, 0.7071, 5e-5);
  EXPECT_NEAR(iv.high, 1.4142, 5e-5);
}

TEST(LowRankInit, ScalarCase) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ParamVector t = lowrank_init(1, 1, 1, 1.0, seed);
    ASSERT_EQ(t.size(), 1);
    EXPECT_GE(std::abs(t[0]), 1.0);
    EXPECT_LE(std::abs(t[0]), 2.0);
  }
}

TEST(LowRankInit, SingularValuesInsideInterval) {
  const Index d = 12, r = 3, n = 30;
  const InitInterval iv = lowrank_init_interval(r, n, 5.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ParamVector t = lowrank_init(d, r, n, 5.0, seed);
    const Matrix Theta = Eigen::Map<const Matrix>(t.data(), d, r);
    const Vector sv = Eigen::JacobiSVD<Matrix>(Theta).singularValues();
    EXPECT_GE(sv.minCoeff(), iv.low - 1e-12);
    EXPECT_LE(sv.maxCoeff(), iv.high + 1e-12);
  }
  EXPECT_EQ(lowrank_init(d, r, n, 5.0, 3), lowrank_init(d, r, n, 5.0, 3));
  EXPECT_THROW(lowrank_init(2, 3, 1, 1.0, 0), ContractError);
}
