#include "test_util.hpp"

#include "gkeb/errors.hpp"
#include "gkeb/gengk.hpp"
#include "gkeb/problems.hpp"

#include <gtest/gtest.h>

using namespace gkeb;
using gkeb::testing::random_matrix;

namespace {

struct HeatSetup {
  ProblemInstance prob;
  std::shared_ptr<CovarianceOperator> Q;
  NoiseCovariance R;
  Vector mu;
};

HeatSetup heat_setup(Index n) {
  ProblemInstance p = make_heat_problem(n, 1.0, 0.02, 7);
  auto Q = build_cov_operator(p.grid, {1.5, 0.2562 * 0.2562, 0.0566}, 0, CovBackend::FftGrid);
  return {p, Q, NoiseCovariance(8.73e-7, n), Vector::Zero(n)};
}

}  // namespace

TEST(GenGK, IdentityChainBreaksDownAfterOneStep) {
  IdentityOperator A(3), Q(3);
  const NoiseCovariance R(1.0, 3);
  const Vector d = Vector::Unit(3, 0);
  const auto f = gengk_bidiag(A, R, Q, Vector::Zero(3), d, 3);
  EXPECT_DOUBLE_EQ(f.beta1(), 1.0);
  EXPECT_DOUBLE_EQ(f.alphas[0], 1.0);
  EXPECT_EQ(f.U.col(0), d);
  EXPECT_EQ(f.V.col(0), d);
  ASSERT_TRUE(f.breakdown_at.has_value());
  EXPECT_EQ(*f.breakdown_at, 1);
  EXPECT_EQ(f.k, 1);
  EXPECT_EQ(f.betas[1], 0.0);
}

TEST(GenGK, RandomDenseRelations) {
  auto A = std::make_shared<DenseOperator>(random_matrix(10, 8, 3));
  const GridSpec g = GridSpec::line(8, 0.125);
  auto Q = build_cov_operator(g, {2.5, 1.0, 0.3}, 0, CovBackend::Dense);
  const NoiseCovariance R(0.3, 10);
  const Vector d = random_matrix(10, 1, 4).col(0);
  const Vector mu = random_matrix(8, 1, 5).col(0);
  const auto f = gengk_bidiag(*A, R, *Q, mu, d, 8);
  const auto res = verify_relations(f, *A, R, *Q, mu, d);
  EXPECT_LT(res.init, 1e-12);
  EXPECT_LT(res.forward, 1e-12);
  EXPECT_LT(res.adjoint, 1e-12);
  EXPECT_LT(orthogonality_defect(f, R, *Q).max(), 1e-10);
}

TEST(GenGK, RankDeficientRunsToBreakdown) {
  const Matrix L = random_matrix(12, 3, 1), Rm = random_matrix(3, 9, 2);
  DenseOperator A(L * Rm);  // rank 3
  IdentityOperator Q(9);
  const NoiseCovariance R(1.0, 12);
  const Vector d = random_matrix(12, 1, 8).col(0);
  const auto f = gengk_bidiag(A, R, Q, Vector::Zero(9), d, 9);
  ASSERT_TRUE(f.breakdown_at.has_value());
  EXPECT_LE(f.k, 4);
  const auto res = verify_relations(f, A, R, Q, Vector::Zero(9), d);
  EXPECT_LT(res.max(), 1e-12);
}

TEST(GenGK, ZeroedColumnIsDetected) {
  DenseOperator A(random_matrix(10, 8, 3));
  IdentityOperator Q(8);
  const NoiseCovariance R(1.0, 10);
  const Vector d = random_matrix(10, 1, 4).col(0);
  auto f = gengk_bidiag(A, R, Q, Vector::Zero(8), d, 5);
  f.U.col(0).setZero();
  EXPECT_GT(verify_relations(f, A, R, Q, Vector::Zero(8), d).init, 1e-2);
}

TEST(GenGK, InitializationOnly) {
  DenseOperator A(random_matrix(6, 5, 3));
  IdentityOperator Q(5);
  const NoiseCovariance R(2.0, 6);
  const Vector d = random_matrix(6, 1, 9).col(0);
  const auto f = gengk_bidiag(A, R, Q, Vector::Zero(5), d, 0);
  EXPECT_EQ(f.k, 0);
  EXPECT_EQ(f.B().rows(), 1);
  EXPECT_EQ(f.B().cols(), 0);
  EXPECT_LT(verify_relations(f, A, R, Q, Vector::Zero(5), d).init, 1e-14);
}

TEST(GenGK, RejectsOversizedK) {
  DenseOperator A(random_matrix(6, 5, 3));
  IdentityOperator Q(5);
  const NoiseCovariance R(1.0, 6);
  EXPECT_THROW(gengk_bidiag(A, R, Q, Vector::Zero(5), Vector::Ones(6), 6), ValidationError);
  EXPECT_THROW(gengk_bidiag(A, R, Q, Vector::Zero(4), Vector::Ones(6), 2), ValidationError);
}

TEST(GenGK, ZeroResidualGivesEmptyFactorization) {
  DenseOperator A(random_matrix(6, 5, 3));
  IdentityOperator Q(5);
  const NoiseCovariance R(1.0, 6);
  const Vector mu = Vector::Ones(5);
  const Vector d = A.matrix() * mu;
  const auto f = gengk_bidiag(A, R, Q, mu, d, 3);
  EXPECT_EQ(f.k, 0);
  EXPECT_EQ(f.beta1(), 0.0);
}

TEST(GenGK, NonFiniteOperatorOutputReportsIteration) {
  Matrix M = random_matrix(4, 4, 1);
  M(2, 1) = 1e308;
  DenseOperator A(M * 1e10);
  IdentityOperator Q(4);
  const NoiseCovariance R(1.0, 4);
  try {
    gengk_bidiag(A, R, Q, Vector::Zero(4), Vector::Ones(4), 3);
    FAIL() << "expected a numerical error";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos);
  }
}

TEST(GenGK, CoefficientsNonnegative) {
  auto s = heat_setup(64);
  const auto f = gengk_bidiag(*s.prob.A, s.R, *s.Q, s.mu, s.prob.d, 20);
  EXPECT_TRUE((f.alphas.array() >= 0.0).all());
  EXPECT_TRUE((f.betas.array() >= 0.0).all());
}

TEST(GenGK, HeatCounterContract) {
  auto s = heat_setup(256);
  s.prob.A->reset_counts();
  const auto f = gengk_bidiag(*s.prob.A, s.R, *s.Q, s.mu, s.prob.d, 22);
  EXPECT_FALSE(f.breakdown_at.has_value());
  EXPECT_EQ(f.k, 22);
  EXPECT_EQ(s.prob.A->counts().forward, 23);
  EXPECT_EQ(s.prob.A->counts().adjoint, 23);
  EXPECT_EQ(s.Q->counts().forward, 23);
}

TEST(GenGK, ReorthogonalizationPreventsLossOfOrthogonality) {
  auto s = heat_setup(256);
  const auto with = gengk_bidiag(*s.prob.A, s.R, *s.Q, s.mu, s.prob.d, 50, true);
  const auto without = gengk_bidiag(*s.prob.A, s.R, *s.Q, s.mu, s.prob.d, 50, false);
  EXPECT_LT(orthogonality_defect(with, s.R, *s.Q).u, 1e-10);
  EXPECT_LT(orthogonality_defect(with, s.R, *s.Q).v, 1e-10);
  EXPECT_GT(orthogonality_defect(without, s.R, *s.Q).u, 1e-6);
  EXPECT_LT(verify_relations(with, *s.prob.A, s.R, *s.Q, s.mu, s.prob.d).max(), 1e-10);
}

TEST(GenGK, TallOperatorBreaksDownThroughAlpha) {
  DenseOperator A(random_matrix(9, 4, 12));
  IdentityOperator Q(4);
  const NoiseCovariance R(0.5, 9);
  const Vector d = random_matrix(9, 1, 13).col(0);
  const auto f = gengk_bidiag(A, R, Q, Vector::Zero(4), d, 4);
  EXPECT_EQ(f.k, 4);
  EXPECT_LT(f.alphas[4], 1e-10 * f.alphas.head(4).maxCoeff());
  EXPECT_LT(verify_relations(f, A, R, Q, Vector::Zero(4), d).max(), 1e-12);
}
