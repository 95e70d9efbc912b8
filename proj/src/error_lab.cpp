#include "ratelab/error_lab.hpp"

#include "ratelab/modal.hpp"
#include "ratelab/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace ratelab {

std::string to_string(Component c) {
    switch (c) {
        case Component::full: return "full";
        case Component::first: return "first_component";
        case Component::second: return "second_component";
    }
    return "?";
}

Component component_from_string(const std::string& s) {
    if (s == "full") return Component::full;
    if (s == "first_component" || s == "first") return Component::first;
    if (s == "second_component" || s == "second") return Component::second;
    throw std::invalid_argument("unknown component selector: " + s);
}

TestFunctional TestFunctional::sine(Eigen::VectorXd psi, Component c) {
    TestFunctional f;
    f.kind = Kind::sine;
    f.comp = c;
    f.psi = std::move(psi);
    return f;
}

TestFunctional TestFunctional::quadratic(Eigen::MatrixXd M, Eigen::VectorXd m, Component c) {
    if (M.rows() != M.cols() || (M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw std::invalid_argument("quadratic functional: M must be symmetric");
    TestFunctional f;
    f.kind = Kind::quadratic;
    f.comp = c;
    if (m.size() == 0) m = Eigen::VectorXd::Zero(M.rows());
    if (m.size() != M.rows()) throw std::invalid_argument("quadratic functional: m size mismatch");
    f.M = std::move(M);
    f.m = std::move(m);
    return f;
}

TestFunctional TestFunctional::gauss_exp(Eigen::MatrixXd factor, Component c) {
    TestFunctional f;
    f.kind = Kind::gauss_exp;
    f.comp = c;
    f.factor = std::move(factor);
    return f;
}

TestFunctional TestFunctional::gauss_exp_identity(double scale, Component c) {
    if (!(scale > 0)) throw std::invalid_argument("gauss_exp: scale must be positive");
    TestFunctional f;
    f.kind = Kind::gauss_exp;
    f.comp = c;
    f.identity_scale = scale;
    return f;
}

std::string TestFunctional::describe() const {
    std::string k = kind == Kind::sine ? "sine" : kind == Kind::quadratic ? "quadratic" : "gauss_exp";
    if (kind == Kind::gauss_exp && identity_scale > 0) k += "_identity";
    return k + "/" + to_string(comp);
}

namespace {

std::vector<int> selected(Component c, int comps) {
    if (comps == 1) {
        if (c == Component::second) throw std::invalid_argument("scalar state has no second component");
        return {0};
    }
    if (c == Component::first) return {0};
    if (c == Component::second) return {1};
    return {0, 1};
}

// rows of the layout for continuous coordinates v (per selected component)
Eigen::MatrixXd embed(const Eigen::MatrixXd& W, const std::vector<int>& comps, int n, int d,
                      const Eigen::MatrixXd* map) {
    const int per = map ? int(map->cols()) : n;
    if (W.rows() != per * int(comps.size()))
        throw std::invalid_argument("functional size does not match the law frame");
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(d * n, W.cols());
    for (std::size_t a = 0; a < comps.size(); ++a) {
        const Eigen::MatrixXd blockW = W.middleRows(a * per, per);
        V.middleRows(comps[a] * n, n) = map ? Eigen::MatrixXd((*map) * blockW) : blockW;
    }
    return V;
}

double log_det_spd(const Eigen::MatrixXd& A) {
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) throw NumericalFailure("gauss_exp: I + C is not positive definite");
    const auto& L = llt.matrixL();
    double s = 0;
    for (int i = 0; i < A.rows(); ++i) s += std::log(L(i, i));
    return 2 * s;
}

}  // namespace

BoundFunctional bind(const TestFunctional& F, int comps, int n, const Eigen::MatrixXd* map) {
    BoundFunctional b;
    b.kind = F.kind;
    b.comps = selected(F.comp, comps);
    b.n = n;
    b.dim = comps * n;
    if (map && map->rows() != n) throw std::invalid_argument("bind: frame map has the wrong row count");
    switch (F.kind) {
        case TestFunctional::Kind::sine:
            b.V = embed(F.psi, b.comps, n, comps, map);
            break;
        case TestFunctional::Kind::quadratic: {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(F.M);
            std::vector<int> keep;
            const double tol = 1e-14 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
            for (int i = 0; i < es.eigenvalues().size(); ++i)
                if (std::abs(es.eigenvalues()[i]) > tol) keep.push_back(i);
            Eigen::MatrixXd U(F.M.rows(), keep.size());
            b.S.resize(keep.size());
            for (std::size_t i = 0; i < keep.size(); ++i) {
                U.col(i) = es.eigenvectors().col(keep[i]);
                b.S[i] = es.eigenvalues()[keep[i]];
            }
            b.V = embed(U, b.comps, n, comps, map);
            b.lin = embed(F.m, b.comps, n, comps, map).col(0);
            break;
        }
        case TestFunctional::Kind::gauss_exp:
            if (F.identity_scale > 0) b.scale = F.identity_scale;
            else b.V = embed(F.factor, b.comps, n, comps, map);
            break;
    }
    return b;
}

double BoundFunctional::value(const Eigen::VectorXd& x) const {
    if (x.size() != dim) throw std::invalid_argument("functional: state size mismatch");
    switch (kind) {
        case TestFunctional::Kind::sine: return std::sin(V.col(0).dot(x));
        case TestFunctional::Kind::quadratic: {
            const Eigen::VectorXd y = V.transpose() * x;
            return y.dot(S.cwiseProduct(y)) + lin.dot(x);
        }
        case TestFunctional::Kind::gauss_exp: {
            if (scale > 0) {
                double s = 0;
                for (int c : comps) s += x.segment(c * n, n).squaredNorm();
                return std::exp(-0.5 * scale * s);
            }
            return std::exp(-0.5 * (V.transpose() * x).squaredNorm());
        }
    }
    return 0;
}

double BoundFunctional::expectation(const GaussianLaw& law) const {
    if (law.dim() != dim) throw std::invalid_argument("functional: law size mismatch");
    if (kind == TestFunctional::Kind::gauss_exp && scale > 0) {
        const int k = int(comps.size());
        if (law.blockwise) {
            double logv = 0;
            for (int j = 0; j < n; ++j) {
                Eigen::MatrixXd B(k, k);
                Eigen::VectorXd mu(k);
                for (int a = 0; a < k; ++a) {
                    mu[a] = law.mean[comps[a] * n + j];
                    for (int c = 0; c < k; ++c)
                        B(a, c) = law.blocks(j, comps[a] * law.comps + comps[c]);
                }
                const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(k, k) + scale * B;
                logv += -0.5 * log_det_spd(A) - 0.5 * scale * mu.dot(A.ldlt().solve(mu));
            }
            return std::exp(logv);
        }
        std::vector<int> idx;
        for (int c : comps)
            for (int j = 0; j < n; ++j) idx.push_back(c * n + j);
        const int m = int(idx.size());
        Eigen::MatrixXd A(m, m);
        Eigen::VectorXd mu(m);
        for (int a = 0; a < m; ++a) {
            mu[a] = law.mean[idx[a]];
            for (int c = 0; c < m; ++c) A(a, c) = scale * law.dense(idx[a], idx[c]);
        }
        A += Eigen::MatrixXd::Identity(m, m);
        return std::exp(-0.5 * log_det_spd(A) - 0.5 * scale * mu.dot(A.llt().solve(mu)));
    }
    Eigen::VectorXd nu;
    Eigen::MatrixXd C;
    law.project(V, nu, C);
    switch (kind) {
        case TestFunctional::Kind::sine: return std::sin(nu[0]) * std::exp(-0.5 * C(0, 0));
        case TestFunctional::Kind::quadratic:
            return nu.dot(S.cwiseProduct(nu)) + lin.dot(law.mean) + (S.asDiagonal() * C).trace();
        case TestFunctional::Kind::gauss_exp: {
            const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(C.rows(), C.cols()) + C;
            return std::exp(-0.5 * log_det_spd(A) - 0.5 * nu.dot(A.llt().solve(nu)));
        }
    }
    return 0;
}

double expectation(const GaussianLaw& law, const TestFunctional& F, const Eigen::MatrixXd* map) {
    return bind(F, law.comps, law.n(), map).expectation(law);
}

double weak_error_exact(const GaussianLaw& lawA, const GaussianLaw& lawB, const TestFunctional& F,
                        const Eigen::MatrixXd* mapA, const Eigen::MatrixXd* mapB) {
    if (!(lawA.frame == lawB.frame) && !mapA && !mapB)
        throw std::invalid_argument("weak_error_exact: laws live in different frames (" +
                                    lawA.frame.describe() + " vs " + lawB.frame.describe() + ")");
    if (lawA.comps != lawB.comps) throw std::invalid_argument("weak_error_exact: component mismatch");
    return expectation(lawB, F, mapB) - expectation(lawA, F, mapA);
}

JointLaw temporal_joint(const DiscreteLawRequest& req) {
    if (req.fem) throw std::invalid_argument("temporal_joint: spectral requests only");
    const ModalSystem A = discrete_system(req);
    const double T = req.k * double(req.N);
    const ModalSystem B = exact_system(req.model, T);
    JointLaw jl;
    jl.a = modal_law(A, req.model.X0);
    jl.b = mild_law(req.model, T);
    jl.cross_diagonal = true;
    for (int c = 0; c < A.comps(); ++c) jl.cross.push_back(modal_cross_diag(A, B, c, c));
    jl.weights.push_back(Eigen::VectorXd::Ones(A.n()));
    if (A.comps() == 2) jl.weights.push_back(req.model.basis.lambdas.cwiseInverse());
    return jl;
}

double strong_error_exact(const JointLaw& joint, Component sel) {
    const auto comps = selected(sel, joint.a.comps);
    const GaussianLaw& A = joint.a;
    const GaussianLaw& B = joint.b;
    double total = 0, scale = 0;
    for (int c : comps) {
        const GaussianLaw a = A.component(c);
        const GaussianLaw b = B.component(c);
        const Eigen::VectorXd& w = joint.weights.at(c);
        auto cov_diag = [](const GaussianLaw& g) {
            return g.blockwise ? Eigen::VectorXd(g.blocks.col(0)) : Eigen::VectorXd(g.dense.diagonal());
        };
        const Eigen::VectorXd da = cov_diag(a), db = cov_diag(b);
        double part;
        if (joint.inner.size() == 0) {
            if (!joint.cross_diagonal) throw std::invalid_argument("strong_error_exact: expected diagonal cross");
            const Eigen::ArrayXd dm = (a.mean - b.mean).array();
            part = (w.array() * (dm * dm + da.array() + db.array() - 2 * joint.cross[c].col(0).array())).sum();
            scale += (w.array() * (da.array() + db.array())).sum();
        } else {
            if ((w.array() != 1.0).any())
                throw std::invalid_argument("strong_error_exact: mixed frames support the first component only");
            const Eigen::MatrixXd& G = joint.inner;
            double cross_tr;
            if (joint.cross_diagonal) cross_tr = (G.diagonal().array() * joint.cross[c].col(0).array()).sum();
            else cross_tr = (G.array() * joint.cross[c].array()).sum();
            part = a.mean.squaredNorm() + b.mean.squaredNorm() - 2 * a.mean.dot(G * b.mean) + da.sum() +
                   db.sum() - 2 * cross_tr;
            scale += da.sum() + db.sum();
        }
        total += part;
    }
    if (total < -1e-8 * std::max(1.0, scale))
        throw NumericalFailure("strong_error_exact: assembled second moment is negative");
    return std::sqrt(std::max(0.0, total));
}

namespace {

// integrals over tau in [lo, hi] of sin(s tau), cos(s tau), sin^2, cos^2, sin cos
struct TrigInts {
    double s_, c_, ss, cc, sc;
};

TrigInts trig_ints(double s, double lo, double hi) {
    TrigInts t;
    t.s_ = (std::cos(s * lo) - std::cos(s * hi)) / s;
    t.c_ = (std::sin(s * hi) - std::sin(s * lo)) / s;
    const double d2 = (std::sin(2 * s * hi) - std::sin(2 * s * lo)) / (4 * s);
    t.ss = (hi - lo) / 2 - d2;
    t.cc = (hi - lo) / 2 + d2;
    const double shi = std::sin(s * hi), slo = std::sin(s * lo);
    t.sc = (shi * shi - slo * slo) / (2 * s);
    return t;
}

// int of exp(-c tau) over [lo, hi], c > 0
double exp_int(double c, double lo, double hi) {
    return std::exp(-c * lo) * (-std::expm1(-c * (hi - lo))) / c;
}

}  // namespace

double strong_error_isometry(const DiscreteLawRequest& req, Component sel) {
    if (req.fem) throw std::invalid_argument("strong_error_isometry: spectral requests only");
    req.validate();
    const auto& model = req.model;
    const int J = model.basis.J;
    const double k = req.k, T = k * double(req.N);
    const auto comps = selected(sel, components(model.family));
    const bool w1 = std::find(comps.begin(), comps.end(), 0) != comps.end();
    const bool w2 = std::find(comps.begin(), comps.end(), 1) != comps.end();
    double total = 0;
    for (int j = 0; j < J; ++j) {
        const double lam = model.basis.lambdas[j];
        const double q = model.Q.diag_weights[j];
        if (model.family == Family::wave) {
            const double s = std::sqrt(lam);
            const Eigen::Matrix2d R = mode_step_wave(req.scheme, k, lam);
            const Eigen::Vector2d x0(model.X0[j], model.X0[J + j]);
            Eigen::Matrix2d Rp = Eigen::Matrix2d::Identity();
            double acc = 0;
            for (long long p = 1; p <= req.N; ++p) {
                Rp = R * Rp;
                const double a1 = Rp(0, 1), a2 = Rp(1, 1);
                const TrigInts t = trig_ints(s, double(p - 1) * k, double(p) * k);
                if (w1) acc += a1 * a1 * k - 2 * a1 * t.s_ / s + t.ss / lam;
                if (w2) acc += (a2 * a2 * k - 2 * a2 * t.c_ + t.cc) / lam;
            }
            const Eigen::Vector2d dm = (Rp - wave_group_mode(lam, T)) * x0;
            total += q * acc + (w1 ? dm[0] * dm[0] : 0.0) + (w2 ? dm[1] * dm[1] / lam : 0.0);
        } else {
            const double a = model.generator(j);
            const double r = req.scheme(k * a);
            double rp = 1, acc = 0;
            for (long long p = 1; p <= req.N; ++p) {
                rp *= r;
                acc += rp * rp * k - 2 * rp * exp_int(a, double(p - 1) * k, double(p) * k) +
                       exp_int(2 * a, double(p - 1) * k, double(p) * k);
            }
            const double dm = (rp - std::exp(-a * T)) * model.X0[j];
            total += q * acc + dm * dm;
        }
    }
    return std::sqrt(std::max(0.0, total));
}

namespace {

// Exact one-step law of a continuous mode: increment dW and the stochastic
// convolution increment I, sampled as I = g dW + L xi.
struct ExactStep {
    cplx mult;
    Eigen::Vector2d g;
    Eigen::Matrix2d L;
};

ExactStep exact_step(const ModalSystem& B, int j, double k) {
    ExactStep st;
    const cplx c = B.rate[j], eta = B.eta[j];
    const double q = B.q[j];
    st.mult = std::exp(k * c);
    if (q == 0.0) {
        st.g.setZero();
        st.L.setZero();
        return st;
    }
    const cplx cw = eta * q * int_exp(c, k);
    const cplx P = std::norm(eta) * q * int_exp(c + std::conj(c), k);
    const cplx Cp = eta * eta * q * int_exp(2.0 * c, k);
    Eigen::Matrix2d S;
    S(0, 0) = 0.5 * (P + Cp).real();
    S(1, 1) = 0.5 * (P - Cp).real();
    S(0, 1) = S(1, 0) = 0.5 * (Cp.imag() - P.imag());
    const double vw = k * q;
    st.g = Eigen::Vector2d(cw.real(), cw.imag()) / vw;
    Eigen::Matrix2d R = S - st.g * st.g.transpose() * vw;
    R = 0.5 * (R + R.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(R);
    const Eigen::Vector2d ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    st.L = es.eigenvectors() * ev.asDiagonal();
    return st;
}

struct PathPair {
    Eigen::VectorXd approx, ref;  // frame / continuous state coordinates
};

class McRunner {
public:
    explicit McRunner(const DiscreteLawRequest& req)
        : req_(req), A_(discrete_system(req)), B_(exact_system(req.model, req.k * double(req.N))) {
        if (!req.model.Q.is_diagonal()) throw std::invalid_argument("Monte Carlo: dense Q is not supported");
        x0A_ = frame_initial_state(req);
        for (int j = 0; j < B_.n(); ++j) steps_.push_back(exact_step(B_, j, req.k));
    }

    PathPair run(std::uint64_t seed, std::uint32_t path) const {
        const int J = B_.n();
        std::vector<cplx> ua = A_.to_modal(x0A_);
        std::vector<cplx> ub = B_.to_modal(req_.model.X0);
        Eigen::VectorXd dW(J), dWa;
        const auto& q = req_.model.Q.diag_weights;
        for (long long n = 0; n < req_.N; ++n) {
            for (int j = 0; j < J; ++j) {
                if (q[j] == 0.0) {
                    dW[j] = 0.0;
                    ub[j] *= steps_[j].mult;
                    continue;
                }
                dW[j] = std::sqrt(req_.k * q[j]) *
                        counter_normals(seed, path, std::uint32_t(j), std::uint32_t(n), 0)[0];
                const auto xi = counter_normals(seed, path, std::uint32_t(j), std::uint32_t(n), 1);
                const Eigen::Vector2d I = steps_[j].g * dW[j] + steps_[j].L * Eigen::Vector2d(xi[0], xi[1]);
                ub[j] = steps_[j].mult * ub[j] + cplx(I[0], I[1]);
            }
            if (A_.identity_noise()) dWa = dW;
            else dWa = A_.noise_map * dW;
            for (int i = 0; i < A_.n(); ++i) ua[i] = A_.z[i] * (ua[i] + A_.eta[i] * dWa[i]);
        }
        return {A_.from_modal(ua), B_.from_modal(ub)};
    }

    const ModalSystem& A() const { return A_; }
    const ModalSystem& B() const { return B_; }

private:
    const DiscreteLawRequest& req_;
    ModalSystem A_, B_;
    Eigen::VectorXd x0A_;
    std::vector<ExactStep> steps_;
};

// per-chunk Welford accumulators, merged in chunk order
template <class Fn>
McEstimate mc_mean(long n_paths, int threads, Fn f) {
    if (n_paths < 2) throw std::invalid_argument("Monte Carlo: need at least two paths");
    const long chunks = (n_paths + kMcChunk - 1) / kMcChunk;
    std::vector<double> cnt(chunks, 0.0), mu(chunks, 0.0), m2(chunks, 0.0);
    int nt = threads > 0 ? threads : int(std::max(1u, std::thread::hardware_concurrency()));
    nt = int(std::min<long>(nt, chunks));
    auto work = [&](int t) {
        for (long c = t; c < chunks; c += nt) {
            const long lo = c * kMcChunk, hi = std::min(n_paths, lo + kMcChunk);
            double n = 0, m = 0, q = 0;
            for (long p = lo; p < hi; ++p) {
                const double v = f(std::uint32_t(p));
                n += 1;
                const double d = v - m;
                m += d / n;
                q += d * (v - m);
            }
            cnt[c] = n;
            mu[c] = m;
            m2[c] = q;
        }
    };
    if (nt <= 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nt; ++t) pool.emplace_back(work, t);
        for (auto& th : pool) th.join();
    }
    double n = 0, mean = 0, M2 = 0;
    for (long c = 0; c < chunks; ++c) {
        const double nb = cnt[c], d = mu[c] - mean, tot = n + nb;
        mean += d * nb / tot;
        M2 += m2[c] + d * d * n * nb / tot;
        n = tot;
    }
    const double var = M2 / (n - 1);
    return {mean, std::sqrt(var / n), n_paths};
}

}  // namespace

McEstimate weak_error_mc(const DiscreteLawRequest& req, const TestFunctional& F, long n_paths,
                         std::uint64_t seed, int threads) {
    const McRunner run(req);
    Eigen::MatrixXd G;
    const Eigen::MatrixXd* map = nullptr;
    if (req.fem) {
        G = run.A().noise_map;
        map = &G;
    }
    const BoundFunctional fa = bind(F, run.A().comps(), run.A().n(), map);
    const BoundFunctional fb = bind(F, run.B().comps(), run.B().n(), nullptr);
    return mc_mean(n_paths, threads, [&](std::uint32_t p) {
        const PathPair pp = run.run(seed, p);
        return fa.value(pp.approx) - fb.value(pp.ref);
    });
}

McEstimate strong_error_mc(const DiscreteLawRequest& req, Component sel, long n_paths,
                           std::uint64_t seed, int threads) {
    const McRunner run(req);
    const auto comps = selected(sel, run.A().comps());
    const int na = run.A().n(), nb = run.B().n();
    if (req.fem && (comps.size() != 1 || comps[0] != 0))
        throw std::invalid_argument("strong_error_mc: FEM frames support the first component only");
    const Eigen::MatrixXd G = req.fem ? run.A().noise_map : Eigen::MatrixXd();
    const Eigen::VectorXd& lam = req.model.basis.lambdas;
    McEstimate sq = mc_mean(n_paths, threads, [&](std::uint32_t p) {
        const PathPair pp = run.run(seed, p);
        double d = 0;
        for (int c : comps) {
            const Eigen::VectorXd a = pp.approx.segment(c * na, na);
            const Eigen::VectorXd b = pp.ref.segment(c * nb, nb);
            if (req.fem) {
                d += a.squaredNorm() + b.squaredNorm() - 2 * a.dot(G * b);
            } else {
                const Eigen::ArrayXd diff = (a - b).array();
                d += c == 0 ? (diff * diff).sum() : (diff * diff / lam.array()).sum();
            }
        }
        return d;
    });
    McEstimate out;
    out.n_paths = n_paths;
    out.estimate = std::sqrt(std::max(0.0, sq.estimate));
    out.standard_error = out.estimate > 0 ? sq.standard_error / (2 * out.estimate) : 0.0;
    return out;
}

RepresentationCheck representation_check(const ModelSpec& model, const RationalScheme* scheme,
                                         double k, long long N, const TestFunctional& F) {
    if (F.kind != TestFunctional::Kind::quadratic)
        throw std::invalid_argument("representation_check: quadratic functionals only");
    if (!model.Q.is_diagonal()) throw std::invalid_argument("representation_check: diagonal Q only");
    const int J = model.basis.J;
    const int d = components(model.family);
    const double T = k * double(N);
    const auto comps = selected(F.comp, d);
    // full-state M and m
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d * J, d * J);
    Eigen::VectorXd m = Eigen::VectorXd::Zero(d * J);
    for (std::size_t a = 0; a < comps.size(); ++a) {
        m.segment(comps[a] * J, J) = F.m.segment(a * J, J);
        for (std::size_t b = 0; b < comps.size(); ++b)
            M.block(comps[a] * J, comps[b] * J, J, J) = F.M.block(a * J, b * J, J, J);
    }
    const GaussianLaw exact = mild_law(model, T);
    GaussianLaw approx;
    if (scheme) {
        DiscreteLawRequest req{model, *scheme, k, N, nullptr};
        approx = discrete_law(req, model.X0);
    } else {
        approx = exact;
    }
    RepresentationCheck rc;
    rc.lhs = weak_error_exact(exact, approx, F);

    // deterministic endpoint term with Y(0) = E(T) X0 and Y~(0) = E~_k(T) X0
    Eigen::VectorXd Y(d * J), Yt(d * J);
    std::vector<Eigen::MatrixXd> RN(J);
    for (int j = 0; j < J; ++j) {
        if (d == 2) {
            const double lam = model.basis.lambdas[j];
            const Eigen::Matrix2d E = wave_group_mode(lam, T);
            Eigen::Matrix2d Rn = E;
            if (scheme) {
                const Eigen::Matrix2d R = mode_step_wave(*scheme, k, lam);
                Rn = Eigen::Matrix2d::Identity();
                for (long long p = 0; p < N; ++p) Rn = R * Rn;
            }
            const Eigen::Vector2d x0(model.X0[j], model.X0[J + j]);
            const Eigen::Vector2d y = E * x0, yt = Rn * x0;
            Y[j] = y[0];
            Y[J + j] = y[1];
            Yt[j] = yt[0];
            Yt[J + j] = yt[1];
        } else {
            const double a = model.generator(j);
            const double e = std::exp(-a * T);
            const double rn = scheme ? std::pow((*scheme)(k * a), double(N)) : e;
            Y[j] = e * model.X0[j];
            Yt[j] = rn * model.X0[j];
        }
    }
    rc.rhs_term1 = (M * (Yt + Y) + m).dot(Yt - Y);

    // 1/2 int_0^T Tr(u_xx O(t)) dt with u_xx = 2M and O in both forms, per step
    double t2 = 0, t2f1 = 0;
    for (int j = 0; j < J; ++j) {
        const double q = model.Q.diag_weights[j];
        if (q == 0.0) continue;
        if (d == 2) {
            const double lam = model.basis.lambdas[j], s = std::sqrt(lam);
            Eigen::Matrix2d Mj;
            Mj << M(j, j), M(j, J + j), M(J + j, j), M(J + j, J + j);
            const Eigen::Matrix2d R = scheme ? mode_step_wave(*scheme, k, lam) : Eigen::Matrix2d::Identity();
            Eigen::Matrix2d Rp = Eigen::Matrix2d::Identity();
            for (long long p = 1; p <= N; ++p) {
                const double lo = double(p - 1) * k, hi = double(p) * k;
                const TrigInts t = trig_ints(s, lo, hi);
                // int c(tau) and int c c^T with c = E(tau) e2 = (sin/s, cos)
                const Eigen::Vector2d ic(t.s_ / s, t.c_);
                Eigen::Matrix2d icc;
                icc << t.ss / lam, t.sc / s, t.sc / s, t.cc;
                Eigen::Vector2d a;
                Eigen::Vector2d ia;
                Eigen::Matrix2d iaa, iac;
                if (scheme) {
                    Rp = R * Rp;
                    a = Rp.col(1);
                    ia = a * k;
                    iaa = a * a.transpose() * k;
                    iac = a * ic.transpose();
                } else {
                    ia = ic;
                    iaa = icc;
                    iac = icc;
                }
                // F2: (a - c)(a + c)^T ; F1: (a + c)(a - c)^T
                const Eigen::Matrix2d f2 = iaa + iac - iac.transpose() - icc;
                const Eigen::Matrix2d f1 = iaa - iac + iac.transpose() - icc;
                (void)ia;
                t2 += q * (Mj * f2).trace();
                t2f1 += q * (Mj * f1).trace();
            }
        } else {
            const double a = model.generator(j);
            const double Mj = M(j, j);
            const double r = scheme ? (*scheme)(k * a) : 0.0;
            double rp = 1;
            for (long long p = 1; p <= N; ++p) {
                const double lo = double(p - 1) * k, hi = double(p) * k;
                const double ic = exp_int(a, lo, hi), icc = exp_int(2 * a, lo, hi);
                double iaa, iac;
                if (scheme) {
                    rp *= r;
                    iaa = rp * rp * k;
                    iac = rp * ic;
                } else {
                    iaa = icc;
                    iac = icc;
                }
                t2 += q * Mj * (iaa + iac - iac - icc);
                t2f1 += q * Mj * (iaa - iac + iac - icc);
            }
        }
    }
    rc.rhs_term2 = t2;
    rc.rhs_term2_f1 = t2f1;
    rc.abs_gap = std::abs(rc.lhs - (rc.rhs_term1 + rc.rhs_term2));
    return rc;
}

RateReport fit_rate(const std::vector<RatePoint>& points, const std::string& hint, double T,
                    double expected, double tolerance) {
    if (hint != "plain" && hint != "log_corrected")
        throw std::invalid_argument("fit_rate: unknown model hint " + hint);
    RateReport r;
    r.points = points;
    r.hint = hint;
    r.expected = expected;
    r.tolerance = tolerance;
    std::vector<double> x, y;
    std::vector<double> levels;
    for (const auto& p : points) {
        if (!(p.resolution > 0)) throw std::invalid_argument("fit_rate: resolutions must be positive");
        if (p.error < 0 || std::isnan(p.error)) throw std::invalid_argument("fit_rate: errors must be positive");
        if (p.error == 0.0) {
            ++r.excluded_zero;
            continue;
        }
        double e = p.error;
        if (hint == "log_corrected") {
            const double arg = T / (std::pow(p.h, 4) + p.k);
            if (!(arg > 1)) throw std::invalid_argument("fit_rate: log correction needs h^4 + k < T");
            e /= std::log(arg);
        }
        x.push_back(std::log(p.resolution));
        y.push_back(std::log(e));
    }
    if (x.size() < 4) throw std::invalid_argument("fit_rate: need at least four positive points");
    const double span = (*std::max_element(x.begin(), x.end()) - *std::min_element(x.begin(), x.end())) / std::log(2.0);
    if (span < 3 - 1e-9) throw std::invalid_argument("fit_rate: resolutions must span three dyadic levels");
    const double n = double(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    r.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
    r.pass = std::abs(r.slope - expected) <= tolerance;
    return r;
}

}  // namespace ratelab
