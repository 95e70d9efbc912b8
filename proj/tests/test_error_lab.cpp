#include "ratelab/error_lab.hpp"
#include "ratelab/noise.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace ratelab;
using std::numbers::pi;

namespace {

ModelSpec wave_model(int J, double gamma, bool with_x0) {
    const EigenBasis b = build_basis(Bc::dirichlet, J);
    Eigen::VectorXd X0 = Eigen::VectorXd::Zero(2 * J);
    if (with_x0)
        for (int i = 0; i < 2 * J; ++i) X0[i] = counter_normals(17, 0, i, 0, 0)[0] / (1 + i % J);
    return ModelSpec::make(Family::wave, J, CovarianceSpec::power_family(b, gamma), X0);
}

// E exp(-1/2 x^T M x) for x ~ N(mu, S), by direct dense algebra
double gauss_exp_oracle(const Eigen::VectorXd& mu, const Eigen::MatrixXd& S, const Eigen::MatrixXd& M) {
    const int n = int(mu.size());
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) + S * M;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    const double quad = mu.dot(M * lu.solve(mu));
    return std::exp(-0.5 * quad) / std::sqrt(lu.determinant());
}

}  // namespace

TEST(WeakErrorExact, IdenticalLawsGiveZero) {
    const ModelSpec m = wave_model(16, 0.25, true);
    const GaussianLaw l = mild_law(m, 0.8);
    const Eigen::VectorXd psi = Eigen::VectorXd::Ones(16);
    EXPECT_EQ(weak_error_exact(l, l, TestFunctional::sine(psi)), 0.0);
    EXPECT_EQ(weak_error_exact(l, l, TestFunctional::gauss_exp_identity(2.0, Component::full)), 0.0);
}

TEST(WeakErrorExact, SineAgainstGaussHermite) {
    const int J = 12;
    const ModelSpec m = wave_model(J, 0.0, true);
    const GaussianLaw A = mild_law(m, 0.6);
    const GaussianLaw B = discrete_law({m, make_scheme("backward_euler"), 0.05, 12, nullptr}, m.X0);
    Eigen::VectorXd psi(J);
    for (int j = 0; j < J; ++j) psi[j] = counter_normals(3, 1, j, 0, 0)[0];
    psi.normalize();
    const auto [x, w] = oracle::gauss_hermite_prob(60);
    auto gh = [&](const GaussianLaw& L) {
        const double mu = psi.dot(L.mean.head(J));
        const double var = psi.dot(L.full_cov().topLeftCorner(J, J) * psi);
        double s = 0;
        for (int i = 0; i < x.size(); ++i) s += w[i] * std::sin(mu + std::sqrt(var) * x[i]);
        return s;
    };
    const TestFunctional F = TestFunctional::sine(psi);
    EXPECT_NEAR(expectation(A, F), gh(A), 1e-13);
    EXPECT_NEAR(weak_error_exact(A, B, F), gh(B) - gh(A), 1e-13);

    // centred case: the sine expectation vanishes, cosine-type factors cancel
    const ModelSpec m0 = wave_model(J, 0.0, false);
    EXPECT_NEAR(expectation(mild_law(m0, 0.6), F), 0.0, 1e-15);
}

TEST(WeakErrorExact, GaussExpAgainstDenseAlgebra) {
    const int J = 10;
    const ModelSpec m = wave_model(J, 0.25, true);
    const GaussianLaw L = discrete_law({m, make_scheme("crank_nicolson"), 0.1, 6, nullptr}, m.X0);
    Eigen::MatrixXd Fm(2 * J, 2);
    for (int i = 0; i < 2 * J; ++i)
        for (int r = 0; r < 2; ++r) Fm(i, r) = counter_normals(4, r, i, 0, 0)[0];
    const TestFunctional F = TestFunctional::gauss_exp(Fm, Component::full);
    EXPECT_NEAR(expectation(L, F), gauss_exp_oracle(L.mean, L.full_cov(), Fm * Fm.transpose()), 1e-13);
    const TestFunctional Fi = TestFunctional::gauss_exp_identity(3.0, Component::first);
    const Eigen::MatrixXd M = 3.0 * Eigen::MatrixXd::Identity(J, J);
    EXPECT_NEAR(expectation(L, Fi), gauss_exp_oracle(L.mean.head(J), L.full_cov().topLeftCorner(J, J), M), 1e-13);
}

TEST(WeakErrorExact, QuadraticScalesWithQ) {
    const int J = 20;
    const ModelSpec m = wave_model(J, 0.25, false);
    ModelSpec m3 = m;
    m3.Q = m.Q.scaled(3.0);
    Eigen::VectorXd u = Eigen::VectorXd::LinSpaced(J, 1.0, 2.0);
    const TestFunctional F = TestFunctional::quadratic(u * u.transpose(), Eigen::VectorXd::Zero(J));
    const RationalScheme sch = make_scheme("backward_euler");
    for (long long N : {8LL, 64LL}) {
        const double e1 = weak_error_exact(mild_law(m, 1.0), discrete_law({m, sch, 1.0 / N, N, nullptr}, m.X0), F);
        const double e3 = weak_error_exact(mild_law(m3, 1.0), discrete_law({m3, sch, 1.0 / N, N, nullptr}, m3.X0), F);
        EXPECT_NEAR(e3, 3.0 * e1, 1e-12 * std::abs(e3));
    }
}

TEST(WeakErrorExact, FrameMismatchThrows) {
    const ModelSpec m = wave_model(8, 0.25, false);
    const FemSpace s = assemble_fem(0.25, Bc::dirichlet);
    const FullyDiscrete fd = fully_discrete_law(s, make_scheme("backward_euler"), 0.1, 4, m, false);
    EXPECT_THROW(weak_error_exact(mild_law(m, 0.4), fd.law, TestFunctional::sine(Eigen::VectorXd::Ones(8))),
                 std::invalid_argument);
}

TEST(StrongErrorExact, IdenticalProcessesGiveZero) {
    const ModelSpec m = wave_model(8, 0.25, true);
    JointLaw j = temporal_joint({m, make_scheme("crank_nicolson"), 0.1, 5, nullptr});
    j.a = j.b;
    j.cross.clear();
    for (int c = 0; c < 2; ++c) j.cross.push_back(j.b.blocks.col(c * 3));
    EXPECT_NEAR(strong_error_exact(j, Component::full), 0.0, 1e-7);
}

TEST(StrongErrorExact, MatchesIsometryForm) {
    for (const char* p : {"backward_euler", "crank_nicolson"})
        for (long long N : {1LL, 7LL, 64LL}) {
            const ModelSpec m = wave_model(24, 0.25, true);
            const DiscreteLawRequest req{m, make_scheme(p), 0.75 / N, N, nullptr};
            for (Component c : {Component::first, Component::full}) {
                const double a = strong_error_exact(temporal_joint(req), c);
                const double b = strong_error_isometry(req, c);
                EXPECT_NEAR(a, b, 1e-10 * std::max(1.0, b)) << p << " N=" << N;
            }
        }
}

TEST(MonteCarlo, StrongWithinThreeSe) {
    const ModelSpec m = wave_model(16, 0.25, true);
    const DiscreteLawRequest req{m, make_scheme("backward_euler"), 0.75 / 16, 16, nullptr};
    const double exact = strong_error_exact(temporal_joint(req));
    const McEstimate mc = strong_error_mc(req, Component::first, 10000, 2024);
    EXPECT_LE(std::abs(mc.estimate - exact), 3 * mc.standard_error);
}

TEST(MonteCarlo, WeakWithinThreeSeForCatalogue) {
    const int J = 12;
    const ModelSpec m = wave_model(J, 0.25, true);
    const DiscreteLawRequest req{m, make_scheme("crank_nicolson"), 0.75 / 8, 8, nullptr};
    const GaussianLaw A = mild_law(m, 0.75), B = discrete_law(req, m.X0);
    const Eigen::VectorXd psi = Eigen::VectorXd::Constant(J, 3.0);
    const Eigen::VectorXd u = Eigen::VectorXd::LinSpaced(J, 1.0, 0.1);
    const std::vector<TestFunctional> Fs = {
        TestFunctional::sine(psi), TestFunctional::gauss_exp_identity(4.0, Component::first),
        TestFunctional::gauss_exp(2 * u, Component::first),
        TestFunctional::quadratic(u * u.transpose(), u, Component::first)};
    for (const auto& F : Fs) {
        const double exact = weak_error_exact(A, B, F);
        const McEstimate mc = weak_error_mc(req, F, 10000, 7);
        EXPECT_LE(std::abs(mc.estimate - exact), 3 * mc.standard_error) << F.describe();
    }
}

TEST(MonteCarlo, QuadraticRankOneWithLargeSample) {
    const int J = 6;
    const ModelSpec m = wave_model(J, 0.0, true);
    const DiscreteLawRequest req{m, make_scheme("backward_euler"), 0.1, 6, nullptr};
    const Eigen::VectorXd u = Eigen::VectorXd::LinSpaced(J, 1.0, -1.0);
    const TestFunctional F = TestFunctional::quadratic(u * u.transpose(), Eigen::VectorXd::Zero(J));
    const double exact = weak_error_exact(mild_law(m, 0.6), discrete_law(req, m.X0), F);
    const McEstimate mc = weak_error_mc(req, F, 100000, 11, 4);
    EXPECT_LE(std::abs(mc.estimate - exact), 3 * mc.standard_error);
}

TEST(MonteCarlo, FemFrameClosure) {
    const int J = 32;
    const ModelSpec m = wave_model(J, 0.25, false);
    const FemSpace s = assemble_fem(0.125, Bc::dirichlet);
    const RationalScheme sch = make_scheme("crank_nicolson");
    const DiscreteLawRequest req{m, sch, 0.75 / 16, 16, &s};
    const FullyDiscrete fd = fully_discrete_law(s, sch, 0.75 / 16, 16, m, true);
    const double exact = strong_error_exact(fd.joint);
    const McEstimate mc = strong_error_mc(req, Component::first, 10000, 5);
    EXPECT_LE(std::abs(mc.estimate - exact), 3 * mc.standard_error);
    const CrossGramian G = cross_gramian(s, m.basis);
    const TestFunctional F = TestFunctional::gauss_exp_identity(10.0);
    const double we = weak_error_exact(mild_law(m, 0.75), fd.law, F, nullptr, &G.G);
    const McEstimate mw = weak_error_mc(req, F, 10000, 5);
    EXPECT_LE(std::abs(mw.estimate - we), 3 * mw.standard_error);
}

TEST(MonteCarlo, DeterministicWhenNoiseFree) {
    const int J = 8;
    ModelSpec m = wave_model(J, 0.0, true);
    m.Q = CovarianceSpec::zero(J);
    const DiscreteLawRequest req{m, make_scheme("backward_euler"), 0.1, 5, nullptr};
    const TestFunctional F = TestFunctional::sine(Eigen::VectorXd::Ones(J));
    const McEstimate mc = weak_error_mc(req, F, 512, 1);
    EXPECT_EQ(mc.standard_error, 0.0);
    EXPECT_NEAR(mc.estimate, weak_error_exact(mild_law(m, 0.5), discrete_law(req, m.X0), F), 1e-13);
}

TEST(MonteCarlo, StandardErrorScaling) {
    const ModelSpec m = wave_model(8, 0.25, true);
    const DiscreteLawRequest req{m, make_scheme("backward_euler"), 0.1, 8, nullptr};
    const TestFunctional F = TestFunctional::sine(Eigen::VectorXd::Constant(8, 3.0));
    std::vector<RatePoint> pts;
    for (long n : {1024L, 2048L, 4096L, 8192L, 16384L}) pts.push_back({double(n), weak_error_mc(req, F, n, 3).standard_error, 0, 0});
    EXPECT_NEAR(fit_rate(pts).slope, -0.5, 0.05);
}

TEST(MonteCarlo, ReproducibleAcrossThreadCounts) {
    const ModelSpec m = wave_model(8, 0.25, true);
    const DiscreteLawRequest req{m, make_scheme("crank_nicolson"), 0.1, 8, nullptr};
    const TestFunctional F = TestFunctional::sine(Eigen::VectorXd::Ones(8));
    const McEstimate a = weak_error_mc(req, F, 3000, 9, 1), b = weak_error_mc(req, F, 3000, 9, 4);
    EXPECT_EQ(a.estimate, b.estimate);
    EXPECT_EQ(a.standard_error, b.standard_error);
}

TEST(Representation, ExactGroupGivesZero) {
    const ModelSpec m = wave_model(4, 0.0, true);
    Eigen::VectorXd u = Eigen::VectorXd::Unit(4, 0);
    const TestFunctional F = TestFunctional::quadratic(u * u.transpose(), Eigen::VectorXd::Zero(4));
    const RepresentationCheck r = representation_check(m, nullptr, 0.1, 8, F);
    EXPECT_NEAR(r.lhs, 0.0, 1e-14);
    EXPECT_NEAR(r.rhs_term1, 0.0, 1e-14);
    EXPECT_NEAR(r.rhs_term2, 0.0, 1e-14);
}

TEST(Representation, BackwardEulerSmallCase) {
    const int J = 4;
    const EigenBasis b = build_basis(Bc::dirichlet, J);
    Eigen::VectorXd X0 = Eigen::VectorXd::Zero(2 * J);
    X0[0] = 1.0;
    X0[J] = -0.5;
    const ModelSpec m = ModelSpec::make(Family::wave, J, CovarianceSpec::identity(J), X0);
    Eigen::VectorXd u = Eigen::VectorXd::Unit(J, 0);
    const TestFunctional F = TestFunctional::quadratic(u * u.transpose(), Eigen::VectorXd::Zero(J));
    const RationalScheme be = make_scheme("backward_euler");
    const RepresentationCheck r = representation_check(m, &be, 0.1, 8, F);
    EXPECT_GT(std::abs(r.lhs), 1e-6);
    EXPECT_LE(r.abs_gap, 1e-8 * std::abs(r.lhs));
    EXPECT_NEAR(r.rhs_term2, r.rhs_term2_f1, 1e-10 * std::max(1.0, std::abs(r.rhs_term2)));
    // lhs is E F(discrete) - E F(exact)
    const double direct = weak_error_exact(mild_law(m, 0.8), discrete_law({m, be, 0.1, 8, nullptr}, X0), F);
    EXPECT_NEAR(r.lhs, direct, 1e-12 * std::abs(direct));
}

TEST(FitRate, Examples) {
    const RateReport r = fit_rate({{1, 1}, {2, 4}, {4, 16}, {8, 64}});
    EXPECT_NEAR(r.slope, 2.0, 1e-12);
    EXPECT_NEAR(r.r2, 1.0, 1e-12);
    EXPECT_THROW(fit_rate({{1, 1}, {2, 4}}), std::invalid_argument);
    EXPECT_THROW(fit_rate({{1, 1}, {2, 4}, {4, 16}, {8, -1}}), std::invalid_argument);
    const RateReport z = fit_rate({{1, 1}, {2, 4}, {4, 16}, {8, 64}, {16, 0}});
    EXPECT_EQ(z.excluded_zero, 1);

    std::vector<RatePoint> jit, chc;
    const double T = 0.1, h = 1.0 / 128;
    for (int l = 4; l <= 12; ++l) {
        const double k = std::ldexp(1.0, -l);
        const double noise = 1 + 0.01 * counter_normals(8, l, 0, 0, 0)[0];
        jit.push_back({k, std::pow(k, 0.75) * noise, 0, k});
        chc.push_back({k, std::sqrt(k) * std::log(T / (std::pow(h, 4) + k)) * noise, h, k});
    }
    EXPECT_NEAR(fit_rate(jit).slope, 0.75, 0.02);
    EXPECT_NEAR(fit_rate(chc, "log_corrected", T).slope, 0.5, 0.03);
}
