#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace ratelab {

enum class Bc { dirichlet, neumann_meanzero };

std::string to_string(Bc bc);
Bc bc_from_string(const std::string& s);

// First J eigenpairs of -d^2/dx^2 on (0,1). Neumann drops the constant mode.
struct EigenBasis {
    Bc bc = Bc::dirichlet;
    int J = 0;
    Eigen::VectorXd lambdas;

    // sqrt(2) sin(j pi x) or sqrt(2) cos(j pi x), j = 1..J
    double eigenfunction(int j, double x) const;
};

EigenBasis build_basis(Bc bc, int J);

// (sum_j lambda_j^alpha c_j^2)^{1/2}
double hdot_norm(const EigenBasis& basis, const Eigen::VectorXd& coeffs, double alpha);

// product space H^alpha x H^{alpha-1}
double hdot_norm_pair(const EigenBasis& basis, const Eigen::VectorXd& x1,
                      const Eigen::VectorXd& x2, double alpha);

double schatten(int p, const Eigen::MatrixXd& op);
double schatten_diag(int p, const Eigen::VectorXd& diag);
double trace(const Eigen::MatrixXd& op);

struct CovarianceSpec {
    enum class Kind { diagonal, dense };
    Kind kind = Kind::diagonal;
    Eigen::VectorXd diag_weights;
    Eigen::MatrixXd dense_matrix;

    static CovarianceSpec diagonal(Eigen::VectorXd q);
    // q_j = lambda_j^{-gamma}
    static CovarianceSpec power_family(const EigenBasis& basis, double gamma);
    static CovarianceSpec identity(int J);
    static CovarianceSpec zero(int J);
    static CovarianceSpec dense(Eigen::MatrixXd Q);

    bool is_diagonal() const { return kind == Kind::diagonal; }
    int size() const;
    Eigen::MatrixXd as_matrix() const;
    // throws std::invalid_argument on negative weights / asymmetric / indefinite
    void validate() const;
    CovarianceSpec scaled(double c) const;
};

struct AqReport {
    double lhs = 0;   // |L^{s/2} Q^{1/2}|_HS^2
    double mid = 0;   // |L^s Q|_Tr
    double rhs = 0;   // |L^{s+alpha} Q|_B |L^{-alpha}|_Tr
    double c2 = 0;    // |L^{s+1/2} Q L^{-1/2}|_Tr
    bool all_inequalities_hold = false;
    bool equal_lhs_mid = false;
    bool equal_mid_c2 = false;
    bool equal_all = false;
};

AqReport check_aq(const CovarianceSpec& Q, const EigenBasis& basis, double s, double alpha,
                  double rel_tol = 1e-12);

struct TraceReport {
    double K2 = 0;
    double tail_slope = 0;
    bool divergent = false;
    std::vector<int> Js;
    std::vector<double> block_sums;
};

// K2 = |L^{beta-1/2} Q L^{-1/2}|_Tr on the basis truncation. The tail slope is
// fitted on dyadic block sums over J in {2^6..2^12} (diagonal Q only).
TraceReport trace_condition(const CovarianceSpec& Q, const EigenBasis& basis, double beta);

// sum_j lambda_j^e q_j (diagonal weights) with the same dyadic tail diagnostic.
TraceReport weighted_trace_sum(const Eigen::VectorXd& lambdas, const Eigen::VectorXd& q,
                               double exponent);

}  // namespace ratelab

#include <stdexcept>

namespace ratelab {

// Raised when a computed quantity violates a numerical invariant
// (e.g. an assembled quadratic form that should be nonnegative).
struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace ratelab
