#pragma once

#include "ratelab/spectral_core.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace ratelab {

enum class Family { wave, heat, chc };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

// Wave states use two components per mode (displacement, velocity), stored
// component-major: [x1_1..x1_n, x2_1..x2_n]. Parabolic states have one.
inline int components(Family f) { return f == Family::wave ? 2 : 1; }

struct ModelSpec {
    Family family = Family::wave;
    EigenBasis basis;
    CovarianceSpec Q;
    Eigen::VectorXd X0;

    static ModelSpec make(Family f, int J, CovarianceSpec Q, Eigen::VectorXd X0 = {});
    // per-mode generator eigenvalue: lambda (wave, heat) or lambda^2 (chc)
    double generator(int j) const;
    int dim() const { return components(family) * basis.J; }
};

struct Frame {
    enum class Kind { spectral, fem };
    Kind kind = Kind::spectral;
    Bc bc = Bc::dirichlet;
    int n = 0;       // modes per component
    double h = 0.0;  // mesh width, fem only
    bool operator==(const Frame& o) const {
        return kind == o.kind && bc == o.bc && n == o.n && h == o.h;
    }
    std::string describe() const;
};

// Covariance is either per-mode blocks (comps x comps, the modes are
// uncorrelated) or a full matrix in component-major order.
struct GaussianLaw {
    Frame frame;
    int comps = 1;
    Eigen::VectorXd mean;
    bool blockwise = true;
    Eigen::MatrixXd blocks;  // n x comps*comps, row j holds block j row-major
    Eigen::MatrixXd dense;

    int n() const { return frame.n; }
    int dim() const { return comps * frame.n; }
    Eigen::MatrixXd block(int j) const;
    Eigen::MatrixXd full_cov() const;
    // mean and covariance of V^T x
    void project(const Eigen::MatrixXd& V, Eigen::VectorXd& nu, Eigen::MatrixXd& C) const;
    // keeps only component c (0 = displacement)
    GaussianLaw component(int c) const;
    double cov_trace() const;
    double min_cov_eigenvalue() const;
};

Eigen::Matrix2d wave_group_mode(double lambda, double t);
double parabolic_factor(Family family, double lambda, double t);

// q * int_0^T of {sin^2/lambda, sin cos/sqrt(lambda), cos^2}(sqrt(lambda) u) du
Eigen::Matrix2d wave_cov_block(double lambda, double q, double T);
// q (1 - exp(-2 a T)) / (2 a)
double parabolic_variance(double a, double q, double T);

GaussianLaw mild_law(const ModelSpec& model, double T);

struct TraceIdentity {
    double lhs = 0, rhs = 0, abs_diff = 0;
};
TraceIdentity trace_identity_check(const CovarianceSpec& Q, const EigenBasis& basis, double T);

// max over modes of |(E(t)-E(s))|_{B(H^alpha,H)} / |t-s|^alpha
double holder_check(const EigenBasis& basis, double alpha, double t, double s);

// |X(T)|_{L2(Omega, H^beta)} for the wave product norm H^beta x H^{beta-1} or
// the scalar Hdot^beta norm
double regularity_norm(const ModelSpec& model, double T, double beta);

}  // namespace ratelab

namespace ratelab {

// Two coupled Gaussian laws (a approximates b). cross[c] holds
// E[(a_c - Ea_c)(b_c - Eb_c)^T] for component c, either as a full n_a x n_b
// matrix or, when cross_diagonal is set (common frame), as its diagonal.
// inner(i, j) is the L2 inner product of basis function i of a's frame with
// basis function j of b's frame; empty means the identity.
struct JointLaw {
    GaussianLaw a, b;
    std::vector<Eigen::MatrixXd> cross;
    bool cross_diagonal = true;
    Eigen::MatrixXd inner;
    // per component norm weights in b's frame (e.g. 1/lambda for velocity)
    std::vector<Eigen::VectorXd> weights;
};

}  // namespace ratelab
