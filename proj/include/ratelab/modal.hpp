#pragma once

#include "ratelab/models.hpp"

#include <Eigen/Dense>

#include <complex>
#include <vector>

namespace ratelab {

using cplx = std::complex<double>;

cplx expm1c(cplx z);
// sum_{p=0}^{N-1} exp(p L)
cplx geo0(cplx L, long long N);
// sum_{p=1}^{N} exp(p L)
cplx geo1(cplx L, long long N);
// int_0^T exp(t c) dt
cplx int_exp(cplx c, double T);

// A family of decoupled scalar complex modes u_i. Wave modes carry
// u = x1 + i x2 / s in energy coordinates; parabolic modes are real.
// Exact modes evolve as exp(t rate_i); discrete modes multiply by z_i each
// step of size k. Noise enters through u += eta_i dW_i, where dW has
// covariance K dt in the frame (K = map diag(q) map^T).
struct ModalSystem {
    Family family = Family::wave;
    Frame frame;
    bool discrete = false;
    double T = 0, k = 0;
    long long N = 0;
    Eigen::VectorXd lambdas;  // frame eigenvalues of the Laplacian
    std::vector<cplx> z, logz, rate, eta;
    Eigen::VectorXd s;  // sqrt(lambda), wave only
    Eigen::MatrixXd noise_map;  // frame x continuous modes; empty means identity
    Eigen::VectorXd q;          // continuous diagonal covariance
    Eigen::MatrixXd K;          // frame covariance, only when noise_map is set

    int n() const { return frame.n; }
    int comps() const { return components(family); }
    bool identity_noise() const { return noise_map.size() == 0; }
    double noise_cov(int i, int l) const;

    std::vector<cplx> to_modal(const Eigen::VectorXd& x) const;
    Eigen::VectorXd from_modal(const std::vector<cplx>& u) const;
    // multiplier over the whole horizon (z^N or exp(T rate))
    cplx propagator(int i) const;
    // one step of the exact flow or the scheme
    cplx step_multiplier(int i) const;
};

// covariance and mean of u(T) started from x0 (frame coordinates)
GaussianLaw modal_law(const ModalSystem& sys, const Eigen::VectorXd& x0);

// E[u_A,i conj(u_B,j)] and E[u_A,i u_B,j] for systems driven by the same
// continuous Wiener process; Kab is the noise cross covariance (n_A x n_B).
// B must be exact in time; A may be discrete on a grid with N k = T.
void modal_cross(const ModalSystem& A, const ModalSystem& B, const Eigen::MatrixXd& Kab,
                 Eigen::MatrixXcd& P, Eigen::MatrixXcd& Cp);

// real cross covariance between the state coordinates of A and B
Eigen::MatrixXd modal_cross_cov(const ModalSystem& A, const ModalSystem& B,
                                const Eigen::MatrixXd& Kab, int compA, int compB);

// diagonal-only variant for identical frames with identity noise coupling
Eigen::VectorXd modal_cross_diag(const ModalSystem& A, const ModalSystem& B, int compA, int compB);

}  // namespace ratelab
