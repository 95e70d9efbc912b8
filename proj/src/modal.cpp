#include "ratelab/modal.hpp"

#include <cmath>
#include <stdexcept>

namespace ratelab {

cplx expm1c(cplx z) {
    const double x = z.real(), y = z.imag();
    if (y == 0.0) return {std::expm1(x), 0.0};
    const double sh = std::sin(y / 2);
    return {std::expm1(x) * std::cos(y) - 2 * sh * sh, std::exp(x) * std::sin(y)};
}

cplx geo0(cplx L, long long N) {
    if (N <= 0) return 0.0;
    if (L == cplx(0.0)) return double(N);
    if (std::isinf(L.real()) && L.real() < 0) return 1.0;
    const cplx den = expm1c(L);
    if (std::abs(den) < 1e-300) return double(N);
    return expm1c(double(N) * L) / den;
}

cplx geo1(cplx L, long long N) {
    if (std::isinf(L.real()) && L.real() < 0) return 0.0;
    return std::exp(L) * geo0(L, N);
}

cplx int_exp(cplx c, double T) {
    if (c == cplx(0.0)) return T;
    return expm1c(c * T) / c;
}

double ModalSystem::noise_cov(int i, int l) const {
    if (identity_noise()) return i == l ? q[i] : 0.0;
    return K(i, l);
}

std::vector<cplx> ModalSystem::to_modal(const Eigen::VectorXd& x) const {
    const int nn = n();
    if (x.size() != comps() * nn) throw std::invalid_argument("to_modal: state size mismatch");
    std::vector<cplx> u(nn);
    for (int i = 0; i < nn; ++i)
        u[i] = family == Family::wave ? cplx(x[i], x[nn + i] / s[i]) : cplx(x[i], 0.0);
    return u;
}

Eigen::VectorXd ModalSystem::from_modal(const std::vector<cplx>& u) const {
    const int nn = n();
    Eigen::VectorXd x(comps() * nn);
    for (int i = 0; i < nn; ++i) {
        x[i] = u[i].real();
        if (family == Family::wave) x[nn + i] = s[i] * u[i].imag();
    }
    return x;
}

cplx ModalSystem::propagator(int i) const {
    if (discrete) return N == 0 ? cplx(1.0) : std::exp(double(N) * logz[i]);
    return std::exp(T * rate[i]);
}

cplx ModalSystem::step_multiplier(int i) const {
    return discrete ? z[i] : std::exp(k * rate[i]);
}

namespace {

// sum over the noise of eta_i conj-or-not(eta_l) times the time factor
void pair_moments(const ModalSystem& A, int i, const ModalSystem& B, int l, double kab,
                  cplx& P, cplx& Cp) {
    if (kab == 0.0) {
        P = Cp = 0.0;
        return;
    }
    cplx tp, tc;
    if (!B.discrete) {
        if (A.discrete) {
            const cplx cb = std::conj(B.rate[l]), cc = B.rate[l];
            auto piece = [&](cplx c) {
                const cplx head = c == cplx(0.0) ? cplx(A.k) : expm1c(A.k * c) / c;
                return head * std::exp(A.logz[i]) * geo0(A.logz[i] + A.k * c, A.N);
            };
            tp = piece(cb);
            tc = piece(cc);
        } else {
            tp = int_exp(A.rate[i] + std::conj(B.rate[l]), A.T);
            tc = int_exp(A.rate[i] + B.rate[l], A.T);
        }
    } else {
        if (!A.discrete || A.N != B.N || A.k != B.k)
            throw std::invalid_argument("modal moments: discrete pair needs a common grid");
        tp = A.k * geo1(A.logz[i] + std::conj(B.logz[l]), A.N);
        tc = A.k * geo1(A.logz[i] + B.logz[l], A.N);
    }
    P = kab * A.eta[i] * std::conj(B.eta[l]) * tp;
    Cp = kab * A.eta[i] * B.eta[l] * tc;
}

// E[c_A c_B] for real coordinates c in {Re u, Im u}
double real_moment(cplx P, cplx Cp, int ca, int cb) {
    if (ca == 0 && cb == 0) return 0.5 * (P + Cp).real();
    if (ca == 1 && cb == 1) return 0.5 * (P - Cp).real();
    if (ca == 0 && cb == 1) return 0.5 * (Cp.imag() - P.imag());
    return 0.5 * (Cp.imag() + P.imag());
}

double comp_scale(const ModalSystem& S, int c, int i) { return c == 0 ? 1.0 : S.s[i]; }

}  // namespace

GaussianLaw modal_law(const ModalSystem& sys, const Eigen::VectorXd& x0) {
    const int nn = sys.n();
    const int d = sys.comps();
    GaussianLaw law;
    law.frame = sys.frame;
    law.comps = d;
    std::vector<cplx> u = sys.to_modal(x0);
    for (int i = 0; i < nn; ++i) u[i] *= sys.propagator(i);
    law.mean = sys.from_modal(u);
    const bool diag = sys.identity_noise();
    if (diag) {
        law.blockwise = true;
        law.blocks.resize(nn, d * d);
        for (int i = 0; i < nn; ++i) {
            cplx P, Cp;
            pair_moments(sys, i, sys, i, sys.noise_cov(i, i), P, Cp);
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b)
                    law.blocks(i, a * d + b) =
                        real_moment(P, Cp, a, b) * comp_scale(sys, a, i) * comp_scale(sys, b, i);
        }
        return law;
    }
    law.blockwise = false;
    law.dense = Eigen::MatrixXd::Zero(d * nn, d * nn);
    for (int i = 0; i < nn; ++i)
        for (int l = i; l < nn; ++l) {
            cplx P, Cp;
            pair_moments(sys, i, sys, l, sys.noise_cov(i, l), P, Cp);
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) {
                    const double v =
                        real_moment(P, Cp, a, b) * comp_scale(sys, a, i) * comp_scale(sys, b, l);
                    law.dense(a * nn + i, b * nn + l) = v;
                    law.dense(b * nn + l, a * nn + i) = v;
                }
        }
    return law;
}

void modal_cross(const ModalSystem& A, const ModalSystem& B, const Eigen::MatrixXd& Kab,
                 Eigen::MatrixXcd& P, Eigen::MatrixXcd& Cp) {
    if (Kab.rows() != A.n() || Kab.cols() != B.n())
        throw std::invalid_argument("modal_cross: coupling shape mismatch");
    P.resize(A.n(), B.n());
    Cp.resize(A.n(), B.n());
    for (int i = 0; i < A.n(); ++i)
        for (int l = 0; l < B.n(); ++l) {
            cplx p, c;
            pair_moments(A, i, B, l, Kab(i, l), p, c);
            P(i, l) = p;
            Cp(i, l) = c;
        }
}

Eigen::MatrixXd modal_cross_cov(const ModalSystem& A, const ModalSystem& B,
                                const Eigen::MatrixXd& Kab, int compA, int compB) {
    Eigen::MatrixXd out(A.n(), B.n());
    for (int i = 0; i < A.n(); ++i)
        for (int l = 0; l < B.n(); ++l) {
            cplx p, c;
            pair_moments(A, i, B, l, Kab(i, l), p, c);
            out(i, l) = real_moment(p, c, compA, compB) * comp_scale(A, compA, i) *
                        comp_scale(B, compB, l);
        }
    return out;
}

Eigen::VectorXd modal_cross_diag(const ModalSystem& A, const ModalSystem& B, int compA, int compB) {
    if (A.n() != B.n()) throw std::invalid_argument("modal_cross_diag: frame mismatch");
    Eigen::VectorXd out(A.n());
    for (int i = 0; i < A.n(); ++i) {
        cplx p, c;
        pair_moments(A, i, B, i, A.noise_cov(i, i), p, c);
        out[i] = real_moment(p, c, compA, compB) * comp_scale(A, compA, i) * comp_scale(B, compB, i);
    }
    return out;
}

}  // namespace ratelab
