#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "modaltl/linalg/symmetric_eigen.hpp"
#include "modaltl/random.hpp"

using namespace modaltl;
using namespace modaltl::linalg;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_spd(Eigen::Index n, std::uint64_t seed, double shift) {
    Rng rng(seed);
    MatrixXd a(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) a(i, j) = standard_normal(rng);
    return a * a.transpose() + shift * MatrixXd::Identity(n, n);
}

MatrixXd random_symmetric(Eigen::Index n, std::uint64_t seed) {
    Rng rng(seed);
    MatrixXd a(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) a(i, j) = standard_normal(rng);
    return 0.5 * (a + a.transpose());
}

}  // namespace

TEST(Cholesky, ReproducesMatrix) {
    const MatrixXd a = random_spd(12, 1, 1.0);
    const MatrixXd l = cholesky_lower(a);
    EXPECT_LT((l * l.transpose() - a).norm(), 1e-10 * a.norm());
    EXPECT_EQ(l.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().norm(), 0.0);
}

TEST(Cholesky, RejectsIndefinite) {
    MatrixXd a = MatrixXd::Identity(3, 3);
    a(1, 1) = -1.0;
    EXPECT_THROW(cholesky_lower(a), SingularMassError);
}

TEST(Householder, SimilarityPreserved) {
    const MatrixXd a = random_symmetric(9, 3);
    HouseholderTridiagonalization h(a);
    MatrixXd t = MatrixXd::Zero(9, 9);
    t.diagonal() = h.tri.diag;
    t.diagonal(1) = h.tri.offdiag;
    t.diagonal(-1) = h.tri.offdiag;
    const MatrixXd q = h.q();
    EXPECT_LT((q.transpose() * q - MatrixXd::Identity(9, 9)).norm(), 1e-12);
    EXPECT_LT((q * t * q.transpose() - a).norm(), 1e-12 * a.norm());
}

TEST(SymmetricEigen, MatchesReference) {
    const MatrixXd a = random_symmetric(20, 4);
    const auto ours = symmetric_eigen(a);
    Eigen::SelfAdjointEigenSolver<MatrixXd> ref(a);
    EXPECT_LT((ours.values - ref.eigenvalues()).cwiseAbs().maxCoeff(), 1e-11);
    EXPECT_LT((a * ours.vectors - ours.vectors * ours.values.asDiagonal()).norm(), 1e-10);
}

TEST(SymmetricEigen, LowestSubsetViaInverseIteration) {
    const MatrixXd a = random_symmetric(40, 5);
    const auto low = symmetric_eigen_lowest(a, 6);
    Eigen::SelfAdjointEigenSolver<MatrixXd> ref(a);
    for (Eigen::Index k = 0; k < 6; ++k) {
        EXPECT_NEAR(low.values(k), ref.eigenvalues()(k), 1e-11);
        const VectorXd v = low.vectors.col(k);
        EXPECT_LT((a * v - low.values(k) * v).norm(), 1e-10);
    }
    EXPECT_LT((low.vectors.transpose() * low.vectors - MatrixXd::Identity(6, 6)).norm(), 1e-10);
}

TEST(ImplicitQl, DiagonalInputIsFixedPoint) {
    VectorXd d(4);
    d << 3, 1, 4, 1.5;
    VectorXd e = VectorXd::Zero(3);
    implicit_ql(d, e);
    std::sort(d.data(), d.data() + 4);
    EXPECT_DOUBLE_EQ(d(0), 1.0);
    EXPECT_DOUBLE_EQ(d(3), 4.0);
}

TEST(ImplicitQl, ReportsNonConvergence) {
    VectorXd d = VectorXd::LinSpaced(30, 1.0, 2.0);
    VectorXd e = VectorXd::Constant(29, 0.7);
    EXPECT_THROW(implicit_ql(d, e, nullptr, 0), EigensolverError);
}

TEST(GeneralizedEigen, ResidualsAndMOrthonormality) {
    const MatrixXd k = random_spd(30, 6, 0.5);
    const MatrixXd m = random_spd(30, 7, 5.0);
    const auto res = generalized_symmetric_eigen(k, m, 8);
    Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> ref(k, m);
    for (Eigen::Index r = 0; r < 8; ++r) {
        EXPECT_NEAR(res.eigenvalues(r), ref.eigenvalues()(r), 1e-10 * ref.eigenvalues()(r));
        const VectorXd v = res.eigenvectors.col(r);
        EXPECT_LT((k * v - res.eigenvalues(r) * m * v).norm() / (k * v).norm(), 1e-8);
    }
    const MatrixXd g = res.eigenvectors.transpose() * m * res.eigenvectors;
    EXPECT_LT((g - MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(GeneralizedEigen, SingularMassRaises) {
    const MatrixXd k = random_spd(5, 8, 1.0);
    MatrixXd m = MatrixXd::Identity(5, 5);
    m(4, 4) = 0.0;
    EXPECT_THROW(generalized_symmetric_eigen(k, m, 2), SingularMassError);
}
