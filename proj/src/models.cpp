#include "ratelab/models.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ratelab {

std::string to_string(Family f) {
    switch (f) {
        case Family::wave: return "wave";
        case Family::heat: return "heat";
        case Family::chc: return "chc";
    }
    return "?";
}

Family family_from_string(const std::string& s) {
    if (s == "wave") return Family::wave;
    if (s == "heat") return Family::heat;
    if (s == "chc") return Family::chc;
    throw std::invalid_argument("unknown model family: " + s);
}

ModelSpec ModelSpec::make(Family f, int J, CovarianceSpec Q, Eigen::VectorXd X0) {
    ModelSpec m;
    m.family = f;
    m.basis = build_basis(f == Family::chc ? Bc::neumann_meanzero : Bc::dirichlet, J);
    if (Q.size() != J) throw std::invalid_argument("ModelSpec: Q size does not match J");
    m.Q = std::move(Q);
    if (X0.size() == 0) X0 = Eigen::VectorXd::Zero(m.dim());
    if (X0.size() != m.dim()) throw std::invalid_argument("ModelSpec: X0 size mismatch");
    m.X0 = std::move(X0);
    return m;
}

double ModelSpec::generator(int j) const {
    const double l = basis.lambdas[j];
    return family == Family::chc ? l * l : l;
}

std::string Frame::describe() const {
    if (kind == Kind::spectral) return "spectral(" + to_string(bc) + ", n=" + std::to_string(n) + ")";
    return "fem(" + to_string(bc) + ", n=" + std::to_string(n) + ", h=" + std::to_string(h) + ")";
}

Eigen::MatrixXd GaussianLaw::block(int j) const {
    Eigen::MatrixXd b(comps, comps);
    if (blockwise) {
        for (int r = 0; r < comps; ++r)
            for (int c = 0; c < comps; ++c) b(r, c) = blocks(j, r * comps + c);
    } else {
        const int nn = n();
        for (int r = 0; r < comps; ++r)
            for (int c = 0; c < comps; ++c) b(r, c) = dense(r * nn + j, c * nn + j);
    }
    return b;
}

Eigen::MatrixXd GaussianLaw::full_cov() const {
    if (!blockwise) return dense;
    const int nn = n();
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(dim(), dim());
    for (int j = 0; j < nn; ++j)
        for (int r = 0; r < comps; ++r)
            for (int c = 0; c < comps; ++c) S(r * nn + j, c * nn + j) = blocks(j, r * comps + c);
    return S;
}

void GaussianLaw::project(const Eigen::MatrixXd& V, Eigen::VectorXd& nu, Eigen::MatrixXd& C) const {
    if (V.rows() != dim()) throw std::invalid_argument("GaussianLaw::project: size mismatch");
    nu = V.transpose() * mean;
    if (!blockwise) {
        C = V.transpose() * dense * V;
        return;
    }
    const int nn = n();
    const int r = int(V.cols());
    C = Eigen::MatrixXd::Zero(r, r);
    for (int a = 0; a < comps; ++a)
        for (int b = 0; b < comps; ++b) {
            const Eigen::VectorXd w = blocks.col(a * comps + b);
            C += V.middleRows(a * nn, nn).transpose() * w.asDiagonal() * V.middleRows(b * nn, nn);
        }
}

GaussianLaw GaussianLaw::component(int c) const {
    if (c < 0 || c >= comps) throw std::invalid_argument("GaussianLaw::component: bad index");
    const int nn = n();
    GaussianLaw out;
    out.frame = frame;
    out.comps = 1;
    out.mean = mean.segment(c * nn, nn);
    out.blockwise = blockwise;
    if (blockwise) {
        out.blocks = blocks.col(c * comps + c);
    } else {
        out.dense = dense.block(c * nn, c * nn, nn, nn);
    }
    return out;
}

double GaussianLaw::cov_trace() const {
    if (!blockwise) return dense.trace();
    double t = 0;
    for (int c = 0; c < comps; ++c) t += blocks.col(c * comps + c).sum();
    return t;
}

double GaussianLaw::min_cov_eigenvalue() const {
    if (!blockwise) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense, Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }
    double m = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n(); ++j) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(block(j), Eigen::EigenvaluesOnly);
        m = std::min(m, es.eigenvalues().minCoeff());
    }
    return m;
}

Eigen::Matrix2d wave_group_mode(double lambda, double t) {
    if (!(lambda > 0)) throw std::invalid_argument("wave_group_mode: lambda must be positive");
    const double s = std::sqrt(lambda);
    const double c = std::cos(t * s), sn = std::sin(t * s);
    Eigen::Matrix2d E;
    E << c, sn / s, -s * sn, c;
    return E;
}

double parabolic_factor(Family family, double lambda, double t) {
    const double a = family == Family::chc ? lambda * lambda : lambda;
    return std::exp(-t * a);  // exp underflows to exactly 0
}

Eigen::Matrix2d wave_cov_block(double lambda, double q, double T) {
    const double s = std::sqrt(lambda);
    const double st = std::sin(s * T);
    const double osc = std::sin(2 * s * T) / (4 * s);
    Eigen::Matrix2d C;
    C(0, 0) = q / lambda * (T / 2 - osc);
    C(0, 1) = C(1, 0) = q * st * st / (2 * lambda);
    C(1, 1) = q * (T / 2 + osc);
    return C;
}

double parabolic_variance(double a, double q, double T) {
    if (q == 0.0) return 0.0;
    return q * (-std::expm1(-2 * a * T)) / (2 * a);
}

GaussianLaw mild_law(const ModelSpec& model, double T) {
    if (!model.Q.is_diagonal())
        throw std::invalid_argument("mild_law: dense Q is not supported");
    const int J = model.basis.J;
    const int d = components(model.family);
    GaussianLaw law;
    law.frame = {Frame::Kind::spectral, model.basis.bc, J, 0.0};
    law.comps = d;
    law.mean.resize(d * J);
    law.blocks.resize(J, d * d);
    const auto& q = model.Q.diag_weights;
    for (int j = 0; j < J; ++j) {
        const double lam = model.basis.lambdas[j];
        if (model.family == Family::wave) {
            const Eigen::Matrix2d E = wave_group_mode(lam, T);
            const Eigen::Vector2d x0(model.X0[j], model.X0[J + j]);
            const Eigen::Vector2d m = E * x0;
            law.mean[j] = m[0];
            law.mean[J + j] = m[1];
            const Eigen::Matrix2d C = wave_cov_block(lam, q[j], T);
            law.blocks.row(j) << C(0, 0), C(0, 1), C(1, 0), C(1, 1);
        } else {
            law.mean[j] = parabolic_factor(model.family, lam, T) * model.X0[j];
            law.blocks(j, 0) = parabolic_variance(model.generator(j), q[j], T);
        }
    }
    return law;
}

TraceIdentity trace_identity_check(const CovarianceSpec& Q, const EigenBasis& basis, double T) {
    if (!Q.is_diagonal()) throw std::invalid_argument("trace_identity_check: diagonal Q only");
    TraceIdentity r;
    for (int j = 0; j < basis.J; ++j) {
        const double lam = basis.lambdas[j];
        const Eigen::Matrix2d C = wave_cov_block(lam, Q.diag_weights[j], T);
        r.lhs += C(0, 0) + C(1, 1) / lam;
        r.rhs += Q.diag_weights[j] / lam;
    }
    r.rhs *= T;
    r.abs_diff = std::abs(r.lhs - r.rhs);
    return r;
}

double holder_check(const EigenBasis& basis, double alpha, double t, double s) {
    if (t == s) return 0.0;
    const double dt = std::abs(t - s);
    double best = 0;
    for (int j = 0; j < basis.J; ++j) {
        const double lam = basis.lambdas[j];
        // energy-weighted block difference is 2|sin(sqrt(lam) dt / 2)| times a rotation
        const double diff = 2 * std::abs(std::sin(std::sqrt(lam) * dt / 2));
        best = std::max(best, std::pow(lam, -alpha / 2) * diff);
    }
    return best / std::pow(dt, alpha);
}

double regularity_norm(const ModelSpec& model, double T, double beta) {
    const GaussianLaw law = mild_law(model, T);
    const int J = model.basis.J;
    double acc = 0;
    for (int j = 0; j < J; ++j) {
        const double lam = model.basis.lambdas[j];
        const double w1 = std::pow(lam, beta);
        acc += w1 * (law.mean[j] * law.mean[j] + law.blocks(j, 0));
        if (law.comps == 2) {
            const double w2 = std::pow(lam, beta - 1);
            acc += w2 * (law.mean[J + j] * law.mean[J + j] + law.blocks(j, 3));
        }
    }
    return std::sqrt(acc);
}

}  // namespace ratelab
