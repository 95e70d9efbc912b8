#include "ratelab/spectral_core.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ratelab {

namespace {
constexpr double pi = std::numbers::pi;

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

Eigen::VectorXd pow_vec(const Eigen::VectorXd& v, double e) {
    return v.array().pow(e).matrix();
}
}  // namespace

std::string to_string(Bc bc) {
    return bc == Bc::dirichlet ? "dirichlet" : "neumann_meanzero";
}

Bc bc_from_string(const std::string& s) {
    if (s == "dirichlet") return Bc::dirichlet;
    if (s == "neumann_meanzero" || s == "neumann") return Bc::neumann_meanzero;
    throw std::invalid_argument("unknown boundary condition: " + s);
}

double EigenBasis::eigenfunction(int j, double x) const {
    const double w = j * pi * x;
    return std::sqrt(2.0) * (bc == Bc::dirichlet ? std::sin(w) : std::cos(w));
}

EigenBasis build_basis(Bc bc, int J) {
    if (J < 1) throw std::invalid_argument("build_basis: J must be positive");
    EigenBasis b;
    b.bc = bc;
    b.J = J;
    b.lambdas.resize(J);
    for (int j = 1; j <= J; ++j) b.lambdas[j - 1] = double(j) * j * pi * pi;
    return b;
}

double hdot_norm(const EigenBasis& basis, const Eigen::VectorXd& coeffs, double alpha) {
    if (coeffs.size() != basis.J) throw std::invalid_argument("hdot_norm: length mismatch");
    double s = 0;
    for (int j = 0; j < basis.J; ++j) s += std::pow(basis.lambdas[j], alpha) * coeffs[j] * coeffs[j];
    return std::sqrt(s);
}

double hdot_norm_pair(const EigenBasis& basis, const Eigen::VectorXd& x1,
                      const Eigen::VectorXd& x2, double alpha) {
    const double a = hdot_norm(basis, x1, alpha);
    const double b = hdot_norm(basis, x2, alpha - 1.0);
    return std::sqrt(a * a + b * b);
}

double schatten(int p, const Eigen::MatrixXd& op) {
    if (p == 2) return op.norm();
    if (p != 1) throw std::invalid_argument("schatten: only p = 1 and p = 2 are supported");
    if (op.size() == 0) return 0.0;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(op);
    return svd.singularValues().sum();
}

double schatten_diag(int p, const Eigen::VectorXd& diag) {
    if (p == 2) return diag.norm();
    if (p != 1) throw std::invalid_argument("schatten: only p = 1 and p = 2 are supported");
    return diag.cwiseAbs().sum();
}

double trace(const Eigen::MatrixXd& op) { return op.trace(); }

CovarianceSpec CovarianceSpec::diagonal(Eigen::VectorXd q) {
    CovarianceSpec c;
    c.kind = Kind::diagonal;
    c.diag_weights = std::move(q);
    c.validate();
    return c;
}

CovarianceSpec CovarianceSpec::power_family(const EigenBasis& basis, double gamma) {
    return diagonal(pow_vec(basis.lambdas, -gamma));
}

CovarianceSpec CovarianceSpec::identity(int J) { return diagonal(Eigen::VectorXd::Ones(J)); }

CovarianceSpec CovarianceSpec::zero(int J) { return diagonal(Eigen::VectorXd::Zero(J)); }

CovarianceSpec CovarianceSpec::dense(Eigen::MatrixXd Q) {
    CovarianceSpec c;
    c.kind = Kind::dense;
    c.dense_matrix = std::move(Q);
    c.validate();
    return c;
}

int CovarianceSpec::size() const {
    return int(is_diagonal() ? diag_weights.size() : dense_matrix.rows());
}

Eigen::MatrixXd CovarianceSpec::as_matrix() const {
    if (is_diagonal()) return diag_weights.asDiagonal();
    return dense_matrix;
}

void CovarianceSpec::validate() const {
    if (is_diagonal()) {
        for (int j = 0; j < diag_weights.size(); ++j)
            if (!(diag_weights[j] >= 0.0))
                throw std::invalid_argument("covariance: negative or NaN weight");
        return;
    }
    const auto& Q = dense_matrix;
    if (Q.rows() != Q.cols()) throw std::invalid_argument("covariance: matrix not square");
    if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw std::invalid_argument("covariance: matrix not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10)
        throw std::invalid_argument("covariance: matrix not positive semidefinite");
}

CovarianceSpec CovarianceSpec::scaled(double c) const {
    CovarianceSpec out = *this;
    out.diag_weights *= c;
    out.dense_matrix *= c;
    return out;
}

AqReport check_aq(const CovarianceSpec& Q, const EigenBasis& basis, double s, double alpha,
                  double rel_tol) {
    if (Q.size() != basis.J) throw std::invalid_argument("check_aq: size mismatch");
    if (!(alpha > 0)) throw std::invalid_argument("check_aq: alpha must be positive");
    Q.validate();
    const auto& lam = basis.lambdas;
    AqReport r;
    const double tr_neg = pow_vec(lam, -alpha).sum();
    if (Q.is_diagonal()) {
        const auto& q = Q.diag_weights;
        const Eigen::ArrayXd ls = lam.array().pow(s);
        r.lhs = (ls * q.array()).sum();
        r.mid = (ls * q.array()).abs().sum();
        r.rhs = (lam.array().pow(s + alpha) * q.array()).abs().maxCoeff() * tr_neg;
        r.c2 = r.mid;
    } else {
        const Eigen::MatrixXd& Qm = Q.dense_matrix;
        const Eigen::VectorXd ls2 = pow_vec(lam, s / 2);
        // |L^{s/2} Q^{1/2}|_HS^2 = Tr(L^{s/2} Q L^{s/2})
        r.lhs = (ls2.asDiagonal() * Qm * ls2.asDiagonal()).trace();
        r.mid = schatten(1, pow_vec(lam, s).asDiagonal() * Qm);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(pow_vec(lam, s + alpha).asDiagonal() * Qm);
        r.rhs = svd.singularValues()(0) * tr_neg;
        r.c2 = schatten(1, pow_vec(lam, s + 0.5).asDiagonal() * Qm * pow_vec(lam, -0.5).asDiagonal());
    }
    const double slack = rel_tol * std::max(1.0, r.rhs);
    r.all_inequalities_hold = r.lhs <= r.mid + slack && r.mid <= r.rhs + slack &&
                              r.lhs <= r.c2 + slack;
    auto close = [&](double a, double b) {
        return std::abs(a - b) <= rel_tol * std::max(std::abs(a), std::abs(b));
    };
    r.equal_lhs_mid = close(r.lhs, r.mid);
    r.equal_mid_c2 = close(r.mid, r.c2);
    r.equal_all = r.equal_lhs_mid && r.equal_mid_c2;
    return r;
}

TraceReport weighted_trace_sum(const Eigen::VectorXd& lambdas, const Eigen::VectorXd& q,
                               double exponent) {
    TraceReport r;
    const int J = int(lambdas.size());
    std::vector<double> terms(J);
    for (int j = 0; j < J; ++j) {
        terms[j] = std::pow(lambdas[j], exponent) * q[j];
        r.K2 += terms[j];
    }
    // dyadic blocks [2^n, 2^{n+1}) for 2^6 <= 2^{n+1} <= min(J, 2^12)
    std::vector<double> lx, ly;
    for (int n = 5; (2 << n) <= std::min(J, 4096); ++n) {
        double b = 0;
        for (int j = (1 << n); j < (2 << n); ++j) b += terms[j - 1];
        r.Js.push_back(2 << n);
        r.block_sums.push_back(b);
        if (b > 0) {
            lx.push_back(std::log(double(2 << n)));
            ly.push_back(std::log(b));
        }
    }
    if (lx.size() >= 2) {
        r.tail_slope = fit_slope(lx, ly);
        r.divergent = r.tail_slope > -0.05;
    } else {
        r.tail_slope = std::nan("");
        r.divergent = false;
    }
    return r;
}

TraceReport trace_condition(const CovarianceSpec& Q, const EigenBasis& basis, double beta) {
    if (beta < 0) throw std::invalid_argument("trace_condition: beta must be nonnegative");
    if (Q.size() != basis.J) throw std::invalid_argument("trace_condition: size mismatch");
    if (Q.is_diagonal()) return weighted_trace_sum(basis.lambdas, Q.diag_weights, beta - 1.0);
    TraceReport r;
    const auto& lam = basis.lambdas;
    r.K2 = schatten(1, pow_vec(lam, beta - 0.5).asDiagonal() * Q.dense_matrix *
                           pow_vec(lam, -0.5).asDiagonal());
    r.tail_slope = std::nan("");
    return r;
}

}  // namespace ratelab
