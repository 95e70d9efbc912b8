#pragma once

#include "ratelab/fem1d.hpp"
#include "ratelab/models.hpp"
#include "ratelab/schemes.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace ratelab {

enum class Component { full, first, second };

std::string to_string(Component c);
Component component_from_string(const std::string& s);

// Test functionals are specified in continuous spectral coordinates of the
// selected component(s); a frame map (FEM cross Gramian) carries them to the
// discrete frame. gauss_exp with identity_scale > 0 uses M = c I in the
// law's own frame, i.e. the exact L2 norm of the represented function.
struct TestFunctional {
    enum class Kind { quadratic, sine, gauss_exp };
    Kind kind = Kind::sine;
    Component comp = Component::first;
    Eigen::VectorXd psi;     // sine
    Eigen::MatrixXd M;       // quadratic, symmetric
    Eigen::VectorXd m;       // quadratic linear part
    Eigen::MatrixXd factor;  // gauss_exp: M = factor factor^T
    double identity_scale = 0.0;

    static TestFunctional sine(Eigen::VectorXd psi, Component c = Component::first);
    static TestFunctional quadratic(Eigen::MatrixXd M, Eigen::VectorXd m, Component c = Component::first);
    static TestFunctional gauss_exp(Eigen::MatrixXd factor, Component c = Component::first);
    static TestFunctional gauss_exp_identity(double scale, Component c = Component::first);

    bool in_cb2() const { return kind != Kind::quadratic; }
    std::string describe() const;
};

// A functional resolved against one law layout (comps x n, optional map).
struct BoundFunctional {
    TestFunctional::Kind kind;
    std::vector<int> comps;
    int n = 0, dim = 0;
    Eigen::MatrixXd V;   // dim x r
    Eigen::VectorXd S;   // quadratic eigenvalues
    Eigen::VectorXd lin; // quadratic linear part in the layout
    double scale = 0.0;  // identity gauss_exp

    double value(const Eigen::VectorXd& x) const;
    double expectation(const GaussianLaw& law) const;
};

BoundFunctional bind(const TestFunctional& F, int comps, int n, const Eigen::MatrixXd* map = nullptr);

double expectation(const GaussianLaw& law, const TestFunctional& F, const Eigen::MatrixXd* map = nullptr);

// E[F(B)] - E[F(A)]; maps carry the functional into FEM frames
double weak_error_exact(const GaussianLaw& lawA, const GaussianLaw& lawB, const TestFunctional& F,
                        const Eigen::MatrixXd* mapA = nullptr, const Eigen::MatrixXd* mapB = nullptr);

JointLaw temporal_joint(const DiscreteLawRequest& req);

double strong_error_exact(const JointLaw& joint, Component sel = Component::first);

// independent check: (|(E~_k(T)-E(T))X0|^2 + int_0^T |(E~_k(T-s)-E(T-s))BQ^{1/2}|_HS^2 ds)^{1/2}
// on the spectral basis, integrated per step interval
double strong_error_isometry(const DiscreteLawRequest& req, Component sel = Component::first);

struct McEstimate {
    double estimate = 0;
    double standard_error = 0;
    long n_paths = 0;
};

// Paths run in chunks of kMcChunk; partial sums are reduced in chunk order.
constexpr long kMcChunk = 256;

McEstimate weak_error_mc(const DiscreteLawRequest& req, const TestFunctional& F, long n_paths,
                         std::uint64_t seed, int threads = 0);
McEstimate strong_error_mc(const DiscreteLawRequest& req, Component sel, long n_paths,
                           std::uint64_t seed, int threads = 0);

struct RepresentationCheck {
    double lhs = 0, rhs_term1 = 0, rhs_term2 = 0, abs_gap = 0;
    double rhs_term2_f1 = 0;
};

// scheme == nullptr replaces the scheme by the exact group
RepresentationCheck representation_check(const ModelSpec& model, const RationalScheme* scheme,
                                         double k, long long N, const TestFunctional& F);

struct RatePoint {
    double resolution = 0, error = 0;
    double h = 0, k = 0;
};

struct RateReport {
    std::vector<RatePoint> points;
    std::string hint = "plain";
    double slope = 0, intercept = 0, r2 = 0;
    double expected = 0, tolerance = 0;
    bool pass = false;
    int excluded_zero = 0;
};

// least squares on (log resolution, log error); log_corrected divides each
// error by log(T / (h^4 + k)) first
RateReport fit_rate(const std::vector<RatePoint>& points, const std::string& hint = "plain",
                    double T = 0.0, double expected = 0.0, double tolerance = 0.0);

}  // namespace ratelab
