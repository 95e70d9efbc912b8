#include "ratelab/schemes.hpp"

#include "ratelab/fem1d.hpp"
#include "ratelab/noise.hpp"

#include <cmath>
#include <stdexcept>

namespace ratelab {

namespace {

std::vector<double> trimmed(std::vector<double> c) {
    while (c.size() > 1 && c.back() == 0.0) c.pop_back();
    return c;
}

cplx poly(const std::vector<double>& c, cplx z) {
    cplx acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * z + *it;
    return acc;
}

double slope_of(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = double(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

bool denominator_hits_axis(const std::vector<double>& den) {
    const int d = int(den.size()) - 1;
    if (d < 1) return false;
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(d, d);
    for (int i = 1; i < d; ++i) C(i, i - 1) = 1.0;
    for (int i = 0; i < d; ++i) C(i, d - 1) = -den[i] / den[d];
    Eigen::EigenSolver<Eigen::MatrixXd> es(C, false);
    for (int i = 0; i < d; ++i) {
        const cplx r = es.eigenvalues()[i];
        if (std::abs(r.real()) <= 1e-12 * (1.0 + std::abs(r))) return true;
    }
    return false;
}

}  // namespace

cplx RationalScheme::operator()(cplx z) const { return poly(num, z) / poly(den, z); }

RationalScheme make_scheme(const std::string& preset, double b) {
    if (preset == "backward_euler") return make_scheme({1.0}, {1.0, 1.0}, b, preset);
    if (preset == "crank_nicolson") return make_scheme({1.0, -0.5}, {1.0, 0.5}, b, preset);
    if (preset == "explicit_euler") return make_scheme({1.0, -1.0}, {1.0}, b, preset);
    throw std::invalid_argument("unknown scheme preset: " + preset);
}

RationalScheme make_scheme(std::vector<double> num, std::vector<double> den, double b,
                           std::string name) {
    RationalScheme r;
    r.name = std::move(name);
    r.num = trimmed(std::move(num));
    r.den = trimmed(std::move(den));
    r.b = b;
    if (r.num.empty() || r.den.empty() || r.den[0] == 0.0 || std::abs(r.num[0] / r.den[0] - 1.0) > 1e-14)
        throw std::invalid_argument("make_scheme: R(0) must equal 1");
    if (!(b > 1e-3)) throw std::invalid_argument("make_scheme: b must exceed 1e-3");

    // order from the local error |R(iy) - exp(-iy)| on 40 log-spaced y in [1e-3, b]
    std::vector<double> lx, ly;
    for (int i = 0; i < 40; ++i) {
        const double y = std::exp(std::log(1e-3) + (std::log(b) - std::log(1e-3)) * i / 39.0);
        const double e = std::abs(r(cplx(0, y)) - std::exp(cplx(0, -y)));
        if (e > 0) {
            lx.push_back(std::log(y));
            ly.push_back(std::log(e));
        }
    }
    r.fitted_slope = lx.size() >= 2 ? slope_of(lx, ly) : 0.0;
    r.verified_order = std::max(0, int(std::floor(r.fitted_slope + 0.05)) - 1);

    // I-stability: log-spaced scan, the limit at infinity, and denominator roots
    bool ok = !denominator_hits_axis(r.den);
    for (int i = 0; ok && i < 2000; ++i) {
        const double y = std::pow(10.0, -6.0 + 12.0 * i / 1999.0);
        const cplx d = poly(r.den, cplx(0, y));
        if (std::abs(d) < 1e-300 || std::abs(r(cplx(0, y))) > 1.0 + 1e-12) ok = false;
    }
    if (ok) {
        if (r.num.size() > r.den.size()) ok = false;
        else if (r.num.size() == r.den.size() && std::abs(r.num.back() / r.den.back()) > 1.0 + 1e-12)
            ok = false;
    }
    r.i_stable = ok;
    return r;
}

Eigen::Matrix2d mode_step_wave(const RationalScheme& scheme, double k, double lambda) {
    if (!(lambda > 0)) throw std::invalid_argument("mode_step_wave: lambda must be positive");
    if (!scheme.i_stable) throw std::invalid_argument("mode_step_wave: scheme is not I-stable");
    const double s = std::sqrt(lambda);
    const cplx d = poly(scheme.den, cplx(0, k * s));
    if (std::abs(d) < 1e-14) throw std::domain_error("mode_step_wave: singular step");
    const cplx z = scheme(cplx(0, k * s));
    const double a = z.real(), b = z.imag() / s;
    Eigen::Matrix2d R;
    R << a, -b, b * lambda, a;
    return R;
}

void DiscreteLawRequest::validate() const {
    if (!scheme.i_stable) throw std::invalid_argument("scheme " + scheme.name + " is not I-stable");
    if (N < 0 || !(k > 0)) throw std::invalid_argument("discrete law: need k > 0 and N >= 0");
}

namespace {

void fill_modes(ModalSystem& sys, Family fam, const Eigen::VectorXd& lambdas,
                const RationalScheme* scheme) {
    const int n = int(lambdas.size());
    sys.family = fam;
    sys.lambdas = lambdas;
    sys.z.resize(n);
    sys.logz.resize(n);
    sys.rate.resize(n);
    sys.eta.resize(n);
    sys.s = lambdas.cwiseSqrt();
    for (int i = 0; i < n; ++i) {
        const double lam = lambdas[i];
        if (fam == Family::wave) {
            sys.rate[i] = cplx(0, -sys.s[i]);
            sys.eta[i] = cplx(0, 1.0 / sys.s[i]);
        } else {
            sys.rate[i] = -(fam == Family::chc ? lam * lam : lam);
            sys.eta[i] = 1.0;
        }
        if (scheme) {
            const cplx arg = fam == Family::wave ? cplx(0, sys.k * sys.s[i]) : -sys.k * sys.rate[i];
            sys.z[i] = (*scheme)(arg);
            sys.logz[i] = std::log(sys.z[i]);
        } else {
            sys.z[i] = std::exp(sys.k * sys.rate[i]);
            sys.logz[i] = sys.k * sys.rate[i];
        }
    }
}

}  // namespace

void fill_modal_modes(ModalSystem& sys, Family fam, const Eigen::VectorXd& lambdas,
                      const RationalScheme* scheme) {
    fill_modes(sys, fam, lambdas, scheme);
}

ModalSystem discrete_system(const DiscreteLawRequest& req) {
    req.validate();
    if (req.fem) {
        const CrossGramian G = cross_gramian(*req.fem, req.model.basis);
        return fem_system(*req.fem, G, req.model, &req.scheme, req.k, req.N, req.k * double(req.N));
    }
    if (!req.model.Q.is_diagonal()) throw std::invalid_argument("discrete law: dense Q is not supported");
    ModalSystem sys;
    sys.frame = {Frame::Kind::spectral, req.model.basis.bc, req.model.basis.J, 0.0};
    sys.discrete = true;
    sys.k = req.k;
    sys.N = req.N;
    sys.T = req.k * double(req.N);
    sys.q = req.model.Q.diag_weights;
    fill_modes(sys, req.model.family, req.model.basis.lambdas, &req.scheme);
    return sys;
}

ModalSystem exact_system(const ModelSpec& model, double T) {
    if (!model.Q.is_diagonal()) throw std::invalid_argument("exact system: dense Q is not supported");
    ModalSystem sys;
    sys.frame = {Frame::Kind::spectral, model.basis.bc, model.basis.J, 0.0};
    sys.discrete = false;
    sys.T = T;
    sys.q = model.Q.diag_weights;
    fill_modes(sys, model.family, model.basis.lambdas, nullptr);
    return sys;
}

Eigen::VectorXd frame_initial_state(const DiscreteLawRequest& req) {
    if (!req.fem) return req.model.X0;
    const CrossGramian G = cross_gramian(*req.fem, req.model.basis);
    return fem_initial_state(*req.fem, G, req.model);
}

Eigen::VectorXd evolve_discrete(const DiscreteLawRequest& req, const Eigen::VectorXd& X0,
                                const NoisePath& noise) {
    const ModalSystem sys = discrete_system(req);
    if (noise.J() != req.model.basis.J || noise.N != req.N ||
        std::abs(noise.k - req.k) > 1e-12 * req.k)
        throw std::invalid_argument("evolve_discrete: noise shape does not match the request");
    DiscreteLawRequest r0 = req;
    r0.model.X0 = X0;
    std::vector<cplx> u = sys.to_modal(frame_initial_state(r0));
    Eigen::VectorXd dW(sys.n());
    for (long long n = 0; n < req.N; ++n) {
        if (sys.identity_noise()) dW = noise.increments.col(n);
        else dW = sys.noise_map * noise.increments.col(n);
        for (int i = 0; i < sys.n(); ++i) u[i] = sys.z[i] * (u[i] + sys.eta[i] * dW[i]);
    }
    return sys.from_modal(u);
}

GaussianLaw discrete_law(const DiscreteLawRequest& req, const Eigen::VectorXd& X0) {
    const ModalSystem sys = discrete_system(req);
    DiscreteLawRequest r0 = req;
    r0.model.X0 = X0;
    return modal_law(sys, frame_initial_state(r0));
}

double interpolated_error_sup(const RationalScheme& scheme, double k, const EigenBasis& basis,
                              double alpha, double T, SampleMode mode, int subsamples) {
    if (!(k > 0) || !(T > 0)) throw std::invalid_argument("interpolated_error_sup: need k, T > 0");
    const long long N = std::llround(std::ceil(T / k - 1e-9));
    const int sub = mode == SampleMode::grid ? 1 : subsamples;
    std::vector<cplx> frac(sub);
    double best = 0;
    for (int j = 0; j < basis.J; ++j) {
        const double lam = basis.lambdas[j];
        const double s = std::sqrt(lam);
        const cplx z = scheme(cplx(0, k * s));
        for (int i = 0; i < sub; ++i) frac[i] = std::exp(cplx(0, -s * k * double(i + 1) / sub));
        const cplx step = std::exp(cplx(0, -s * k));
        cplx zn = 1.0, en = 1.0;  // z^{n-1}, exp(-i s t_{n-1})
        double m = 0;
        for (long long n = 1; n <= N; ++n) {
            zn *= z;
            for (int i = 0; i < sub; ++i) {
                const double t = (double(n - 1) + double(i + 1) / sub) * k;
                if (t > T + 1e-12 * T) break;
                m = std::max(m, std::abs(zn - en * frac[i]));
            }
            en *= step;
        }
        best = std::max(best, std::pow(lam, -alpha / 2) * m);
    }
    return best;
}

double stability_sup(const RationalScheme& scheme, double k, const EigenBasis& basis, long long N) {
    if (!scheme.i_stable) throw std::invalid_argument("stability_sup: scheme is not I-stable");
    if (N == 0) return 1.0;
    double zmax = 0;
    for (int j = 0; j < basis.J; ++j)
        zmax = std::max(zmax, std::abs(scheme(cplx(0, k * std::sqrt(basis.lambdas[j])))));
    return zmax <= 1.0 ? zmax : std::pow(zmax, double(N));
}

}  // namespace ratelab
