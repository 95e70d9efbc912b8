#pragma once

// Independent numerical oracles used by the tests only.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <numbers>
#include <utility>
#include <vector>

namespace oracle {

// nodes/weights on [-1, 1] via Golub-Welsch
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_legendre(int n) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) {
        const double b = i / std::sqrt(4.0 * i * i - 1.0);
        J(i, i - 1) = J(i - 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    Eigen::VectorXd w = 2.0 * es.eigenvectors().row(0).transpose().array().square();
    return {es.eigenvalues(), w};
}

// probabilists' Hermite: integrates against the standard normal density
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_hermite_prob(int n) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(double(i));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    Eigen::VectorXd w = es.eigenvectors().row(0).transpose().array().square();
    return {es.eigenvalues(), w};
}

inline double gl_integrate(const std::function<double(double)>& f, double a, double b, int n = 64) {
    static thread_local int cached = 0;
    static thread_local Eigen::VectorXd x, w;
    if (cached != n) {
        std::tie(x, w) = gauss_legendre(n);
        cached = n;
    }
    double s = 0;
    for (int i = 0; i < n; ++i) s += w[i] * f(0.5 * (a + b) + 0.5 * (b - a) * x[i]);
    return 0.5 * (b - a) * s;
}

// adaptive Gauss-Legendre (7 vs 15 points on bisected panels)
inline double adaptive(const std::function<double(double)>& f, double a, double b, double tol = 1e-13,
                       int depth = 0) {
    const double whole = gl_integrate(f, a, b, 15);
    const double m = 0.5 * (a + b);
    const double halves = gl_integrate(f, a, m, 15) + gl_integrate(f, m, b, 15);
    const double scale = gl_integrate([&](double x) { return std::abs(f(x)); }, a, b, 15);
    if (depth > 20 || (depth >= 3 && std::abs(whole - halves) <= tol * scale)) return halves;
    return adaptive(f, a, m, tol, depth + 1) + adaptive(f, m, b, tol, depth + 1);
}

}  // namespace oracle
