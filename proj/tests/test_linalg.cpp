#include <gtest/gtest.h>

#include <cmath>

#include "spgahoc/linalg.hpp"
#include "spgahoc/rng.hpp"

using namespace spgahoc;

namespace {

Matrix random_matrix(Rng& rng, Index d, double scale = 1.0) {
    Matrix m(d, d);
    for (Index j = 0; j < d; ++j)
        for (Index i = 0; i < d; ++i) m(i, j) = scale * rng.normal();
    return m;
}

// Independent oracle: exp of a symmetric matrix through its eigendecomposition.
Matrix expm_symmetric(const Matrix& s) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
    return eig.eigenvectors() * eig.eigenvalues().array().exp().matrix().asDiagonal() *
           eig.eigenvectors().transpose();
}

double rel_err(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

}  // namespace

TEST(MatExp, ZeroGivesIdentityExactly) {
    const Matrix e = mat_exp(Matrix::Zero(3, 3));
    EXPECT_EQ(e, Matrix::Identity(3, 3));
}

TEST(MatExp, NilpotentTruncates) {
    Matrix n(2, 2);
    n << 0, 1, 0, 0;
    Matrix expect(2, 2);
    expect << 1, 1, 0, 1;
    EXPECT_LT((mat_exp(n) - expect).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(MatExp, DiagonalMatchesScalarExp) {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = 1.0;
    m(1, 1) = 2.0;
    const Matrix e = mat_exp(m);
    EXPECT_NEAR(e(0, 0), std::exp(1.0), 1e-12 * std::exp(1.0));
    EXPECT_NEAR(e(1, 1), std::exp(2.0), 1e-12 * std::exp(2.0));
    EXPECT_EQ(e(0, 1), 0.0);
}

TEST(MatExp, SymmetricAgreesWithEigendecomposition) {
    Rng rng(11);
    for (int trial = 0; trial < 60; ++trial) {
        const Index d = 1 + static_cast<Index>(rng.below(10));
        // Scales chosen to exercise every Padé order, including scaling and squaring.
        const double scale = std::pow(10.0, rng.uniform(-3.0, 0.7));
        Matrix a = random_matrix(rng, d, scale);
        const Matrix s = 0.5 * (a + a.transpose());
        EXPECT_LE(rel_err(mat_exp(s), expm_symmetric(s)), 1e-10) << "d=" << d << " scale=" << scale;
    }
}

TEST(MatExp, SimilarityInvariance) {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Index d = 2 + static_cast<Index>(rng.below(6));
        const Matrix m = random_matrix(rng, d, 0.5);
        Matrix p = random_matrix(rng, d) + 3.0 * Matrix::Identity(d, d);
        const Matrix pinv = p.inverse();
        EXPECT_LE(rel_err(mat_exp(pinv * m * p), pinv * mat_exp(m) * p), 1e-8);
    }
}

TEST(MatExp, NilpotentTraceEqualsDimension) {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const Index d = 2 + static_cast<Index>(rng.below(7));
        Matrix m = Matrix::Zero(d, d);
        for (Index i = 0; i < d; ++i)
            for (Index j = i + 1; j < d; ++j) m(i, j) = rng.uniform(0.0, 2.0);
        // Hide the triangular structure behind a permutation.
        Eigen::PermutationMatrix<Eigen::Dynamic> perm(d);
        perm.setIdentity();
        for (Index i = d - 1; i > 0; --i) std::swap(perm.indices()[i], perm.indices()[rng.below(i + 1)]);
        const Matrix pm = perm * m * perm.transpose();
        EXPECT_NEAR(mat_exp(pm).trace(), static_cast<double>(d), 1e-10);
    }
}

TEST(MatExp, LargeNormUsesSquaringAndOverflowIsFlagged) {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = 30.0;
    auto r = mat_exp_checked(m);
    EXPECT_TRUE(r.finite);
    EXPECT_GT(r.squarings, 0);
    EXPECT_EQ(r.pade_order, 13);
    EXPECT_NEAR(r.value(0, 0), std::exp(30.0), 1e-12 * std::exp(30.0));

    m(0, 0) = 1000.0;
    auto big = mat_exp_checked(m);
    EXPECT_FALSE(big.finite);
    EXPECT_THROW(mat_exp(m), std::overflow_error);
}

TEST(MatExp, RejectsBadInput) {
    EXPECT_THROW(mat_exp(Matrix::Zero(2, 3)), std::invalid_argument);
    Matrix m = Matrix::Zero(2, 2);
    m(0, 1) = std::nan("");
    EXPECT_THROW(mat_exp(m), std::invalid_argument);
}

TEST(SpectralRadius, StrictlyUpperTriangularIsZero) {
    Matrix a = Matrix::Zero(4, 4);
    a(0, 1) = 1.0;
    a(1, 2) = 2.0;
    a(0, 3) = 0.5;
    a(2, 3) = 3.0;
    EXPECT_NEAR(spectral_radius(a).value, 0.0, 1e-9);
}

TEST(SpectralRadius, ScaledThreeCycle) {
    for (double a : {0.1, 0.7, 2.5}) {
        Matrix p = Matrix::Zero(3, 3);
        p(0, 1) = p(1, 2) = p(2, 0) = a;
        EXPECT_NEAR(spectral_radius(p).value, a, 1e-9 * a);
    }
}

TEST(SpectralRadius, SymmetricTwoByTwo) {
    Matrix a(2, 2);
    a << 0, 2, 2, 0;
    EXPECT_NEAR(spectral_radius(a).value, 2.0, 1e-9);
}

TEST(SpectralRadius, PeriodicNonSymmetricFallsBackToWindowMean) {
    Matrix a(2, 2);
    a << 0, 4, 1, 0;  // eigenvalues ±2, the iterate oscillates
    auto r = spectral_radius(a);
    EXPECT_NEAR(r.value, 2.0, 1e-6);
}

TEST(SpectralRadius, MatchesEigenvaluesOnPositiveMatrices) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Index d = 2 + static_cast<Index>(rng.below(8));
        Matrix a(d, d);
        for (Index j = 0; j < d; ++j)
            for (Index i = 0; i < d; ++i) a(i, j) = rng.uniform(0.01, 1.0);
        const double oracle = Eigen::EigenSolver<Matrix>(a, false).eigenvalues().cwiseAbs().maxCoeff();
        auto r = spectral_radius(a);
        EXPECT_TRUE(r.converged);
        EXPECT_NEAR(r.value, oracle, 1e-6 * oracle);
    }
}

TEST(SpectralRadius, RejectsNegativeEntries) {
    Matrix a = Matrix::Zero(2, 2);
    a(0, 1) = -1.0;
    EXPECT_THROW(spectral_radius(a), std::invalid_argument);
}

TEST(SpectralRadius, NonConvergenceIsFlagged) {
    Matrix a(2, 2);
    a << 0, 4, 1, 0;
    PowerIterationOptions opt;
    opt.max_iterations = 5;
    auto r = spectral_radius(a, opt);
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.iterations, 5);
}

TEST(DagSupport, BasicCases) {
    BoolAdjacency up(4);
    up.set(0, 1);
    up.set(1, 2);
    up.set(0, 3);
    EXPECT_TRUE(is_dag_support(up));

    BoolAdjacency two(2);
    two.set(0, 1);
    two.set(1, 0);
    EXPECT_FALSE(is_dag_support(two));

    EXPECT_TRUE(is_dag_support(BoolAdjacency(5)));
}

TEST(DagSupport, SelfLoopRejected) {
    BoolAdjacency b(3);
    EXPECT_THROW(b.set(1, 1), std::invalid_argument);
}

// Cross-oracle: a nonnegative matrix is nilpotent exactly when its support is acyclic.
TEST(DagSupport, SpectralRadiusZeroIffAcyclic) {
    Rng rng(2024);
    int dags = 0, cyclic = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const Index d = 2 + static_cast<Index>(rng.below(7));
        const double p = rng.uniform(0.05, 0.5);
        Matrix a = Matrix::Zero(d, d);
        for (Index i = 0; i < d; ++i)
            for (Index j = 0; j < d; ++j)
                if (i != j && rng.uniform() < p) a(i, j) = rng.uniform(0.1, 1.0);
        const bool dag = is_dag_support(support(a));
        const double rho = spectral_radius(a).value;
        (dag ? dags : cyclic)++;
        if (dag)
            EXPECT_LT(rho, 1e-9) << "trial " << trial;
        else
            EXPECT_GT(rho, 1e-3) << "trial " << trial;
    }
    EXPECT_GT(dags, 100);
    EXPECT_GT(cyclic, 100);
}

TEST(Norms, FrobeniusAndHadamard) {
    EXPECT_EQ(frobenius_norm(Matrix::Zero(3, 3)), 0.0);
    EXPECT_DOUBLE_EQ(frobenius_norm(Matrix::Identity(2, 2)), std::sqrt(2.0));
    Matrix m(2, 2);
    m << 1, 2, 3, 4;
    const Matrix h = hadamard(m, Matrix::Identity(2, 2));
    EXPECT_EQ(h(0, 0), 1.0);
    EXPECT_EQ(h(1, 1), 4.0);
    EXPECT_EQ(h(0, 1), 0.0);
    EXPECT_EQ(h(1, 0), 0.0);
    EXPECT_DOUBLE_EQ(frobenius_inner(m, m), 30.0);
    EXPECT_THROW(hadamard(m, Matrix::Zero(3, 3)), std::invalid_argument);
    EXPECT_THROW(frobenius_inner(m, Matrix::Zero(2, 3)), std::invalid_argument);
}

TEST(TopologicalOrder, RespectsEdges) {
    BoolAdjacency b(5);
    b.set(3, 1);
    b.set(1, 0);
    b.set(4, 3);
    b.set(2, 0);
    const auto order = topological_order(b);
    std::vector<Index> pos(5);
    for (Index k = 0; k < 5; ++k) pos[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = k;
    for (Index i = 0; i < 5; ++i)
        for (Index j = 0; j < 5; ++j)
            if (b(i, j)) { EXPECT_LT(pos[static_cast<std::size_t>(i)], pos[static_cast<std::size_t>(j)]); }
    b.set(0, 4);
    EXPECT_THROW(topological_order(b), std::invalid_argument);
}
