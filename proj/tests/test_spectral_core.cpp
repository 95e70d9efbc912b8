#include "ratelab/noise.hpp"
#include "ratelab/spectral_core.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace ratelab;
using std::numbers::pi;

namespace {

Eigen::MatrixXd random_matrix(int r, int c, std::uint32_t tag) {
    Eigen::MatrixXd A(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) A(i, j) = counter_normals(11, tag, i, j, 0)[0];
    return A;
}

}  // namespace

TEST(EigenBasis, FirstEigenvalues) {
    EXPECT_NEAR(build_basis(Bc::dirichlet, 1).lambdas[0], pi * pi, 1e-12);
    EXPECT_NEAR(build_basis(Bc::dirichlet, 2).lambdas[1], 4 * pi * pi, 1e-12);
    EXPECT_NEAR(build_basis(Bc::neumann_meanzero, 1).lambdas[0], pi * pi, 1e-12);
    EXPECT_THROW(build_basis(Bc::dirichlet, 0), std::invalid_argument);
}

TEST(EigenBasis, EigenfunctionsOrthonormal) {
    for (Bc bc : {Bc::dirichlet, Bc::neumann_meanzero}) {
        const EigenBasis b = build_basis(bc, 5);
        // composite midpoint rule is exact for trig polynomials of low degree
        const int n = 4000;
        for (int i = 1; i <= 5; ++i)
            for (int j = 1; j <= 5; ++j) {
                double s = 0;
                for (int m = 0; m < n; ++m) {
                    const double x = (m + 0.5) / n;
                    s += b.eigenfunction(i, x) * b.eigenfunction(j, x) / n;
                }
                EXPECT_NEAR(s, i == j ? 1.0 : 0.0, 1e-9);
            }
    }
}

TEST(HdotNorm, Examples) {
    const EigenBasis b = build_basis(Bc::dirichlet, 4);
    Eigen::VectorXd e1 = Eigen::VectorXd::Unit(4, 0);
    EXPECT_NEAR(hdot_norm(b, e1, 0), 1.0, 1e-15);
    EXPECT_NEAR(hdot_norm(b, e1, 1), pi, 1e-13);
    EXPECT_NEAR(hdot_norm(b, e1, -1), 1 / pi, 1e-15);
}

TEST(Schatten, Examples) {
    EXPECT_NEAR(schatten(1, Eigen::Matrix2d::Identity()), 2.0, 1e-14);
    EXPECT_NEAR(schatten(2, Eigen::Vector2d(3, 4).asDiagonal().toDenseMatrix()), 5.0, 1e-14);
    const Eigen::MatrixXd d = Eigen::Vector2d(1, -1).asDiagonal().toDenseMatrix();
    EXPECT_NEAR(trace(d), 0.0, 1e-15);
    EXPECT_NEAR(schatten(1, d), 2.0, 1e-14);
    EXPECT_THROW(schatten(3, d), std::invalid_argument);
}

TEST(Schatten, TraceHsIdentityRandom) {
    for (std::uint32_t t = 0; t < 20; ++t) {
        const Eigen::MatrixXd T = random_matrix(7, 4 + t % 5, t);
        const double hs2 = std::pow(schatten(2, T), 2);
        EXPECT_NEAR(schatten(1, T.transpose() * T) / hs2, 1.0, 1e-10);
        EXPECT_NEAR(schatten(1, T * T.transpose()) / hs2, 1.0, 1e-10);
    }
}

TEST(Schatten, HolderForTraceNormRandom) {
    for (std::uint32_t t = 0; t < 100; ++t) {
        const Eigen::MatrixXd T = random_matrix(6, 5, 100 + t), S = random_matrix(5, 6, 300 + t);
        EXPECT_LE(schatten(1, T * S), schatten(2, T) * schatten(2, S) * (1 + 1e-12));
    }
}

TEST(Schatten, CyclicTrace) {
    for (std::uint32_t t = 0; t < 20; ++t) {
        const Eigen::MatrixXd T = random_matrix(6, 9, 500 + t), S = random_matrix(9, 6, 600 + t);
        const double a = trace(T * S), b = trace(S * T);
        EXPECT_NEAR(a, b, 1e-10 * std::max(1.0, std::abs(a)));
    }
}

TEST(CovarianceSpec, Validation) {
    EXPECT_THROW(CovarianceSpec::diagonal(Eigen::Vector2d(1, -1)).validate(), std::invalid_argument);
    Eigen::Matrix2d asym;
    asym << 1, 0.5, 0.4, 1;
    EXPECT_THROW(CovarianceSpec::dense(asym).validate(), std::invalid_argument);
    Eigen::Matrix2d indef;
    indef << 1, 2, 2, 1;
    EXPECT_THROW(CovarianceSpec::dense(indef).validate(), std::invalid_argument);
    EXPECT_NO_THROW(CovarianceSpec::identity(3).validate());
}

TEST(CheckAq, IdentityAllEqual) {
    const EigenBasis b = build_basis(Bc::dirichlet, 16);
    for (double s : {-1.0, -0.3, 0.0, 0.4}) {
        const AqReport r = check_aq(CovarianceSpec::identity(16), b, s, 1.0);
        const double sum = b.lambdas.array().pow(s).sum();
        EXPECT_NEAR(r.lhs / sum, 1.0, 1e-12);
        EXPECT_TRUE(r.equal_all);
        EXPECT_TRUE(r.all_inequalities_hold);
    }
}

TEST(CheckAq, InverseLambdaEqualities) {
    const EigenBasis b = build_basis(Bc::dirichlet, 16);
    const AqReport r = check_aq(CovarianceSpec::power_family(b, 1.0), b, 0.0, 1.0);
    EXPECT_TRUE(r.equal_lhs_mid);
    EXPECT_TRUE(r.equal_mid_c2);
    EXPECT_TRUE(r.all_inequalities_hold);
}

TEST(CheckAq, Dense3x3Strict) {
    const EigenBasis b = build_basis(Bc::dirichlet, 3);
    Eigen::Matrix3d Q;
    Q << 2, 0.6, 0.3, 0.6, 1, 0.2, 0.3, 0.2, 0.5;
    const double s = 0.5, alpha = 1.0;
    const AqReport r = check_aq(CovarianceSpec::dense(Q), b, s, alpha);
    // direct matrix arithmetic
    const Eigen::VectorXd l = b.lambdas;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(Q);
    const Eigen::Matrix3d sqrtQ = es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
                                  es.eigenvectors().transpose();
    const Eigen::Matrix3d Ls2 = l.array().pow(s / 2).matrix().asDiagonal();
    const double lhs = (Ls2 * sqrtQ).squaredNorm();
    const Eigen::Matrix3d LsaQ = l.array().pow(s + alpha).matrix().asDiagonal() * Q;
    const double rhs = Eigen::JacobiSVD<Eigen::Matrix3d>(LsaQ).singularValues()[0] * l.array().pow(-alpha).sum();
    EXPECT_NEAR(r.lhs, lhs, 1e-12 * lhs);
    EXPECT_NEAR(r.rhs, rhs, 1e-12 * rhs);
    EXPECT_LT(r.lhs, r.rhs);
    EXPECT_TRUE(r.all_inequalities_hold);
}

TEST(TraceCondition, TwoTermSum) {
    const EigenBasis b = build_basis(Bc::dirichlet, 2);
    const TraceReport r = trace_condition(CovarianceSpec::identity(2), b, 0.0);
    EXPECT_NEAR(r.K2, 5 / (4 * pi * pi), 1e-15);
    EXPECT_NEAR(r.K2, 0.126651, 1e-6);
}

TEST(TraceCondition, HarmonicDivergenceFlagged) {
    const EigenBasis b = build_basis(Bc::dirichlet, 4096);
    const TraceReport r = trace_condition(CovarianceSpec::identity(4096), b, 0.5);
    EXPECT_TRUE(r.divergent);
}

TEST(TraceCondition, PowerFamilyConverges) {
    const EigenBasis b = build_basis(Bc::dirichlet, 4096);
    const double gamma = 0.25;
    const TraceReport r = trace_condition(CovarianceSpec::power_family(b, gamma), b, 0.6);
    EXPECT_FALSE(r.divergent);
    EXPECT_LT(r.tail_slope, -0.05);
    // block sums of j^{2(beta - gamma - 1/2)} decay with slope 2 (beta - beta*)
    EXPECT_NEAR(r.tail_slope, 2 * (0.6 - (gamma + 0.5)), 0.05);
    const TraceReport d = trace_condition(CovarianceSpec::power_family(b, gamma), b, 0.9);
    EXPECT_TRUE(d.divergent);
}
