#include "ratelab/fem1d.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ratelab {

namespace {
constexpr double pi = std::numbers::pi;
}

FemSpace assemble_fem(double h, Bc bc) {
    const double Mf = 1.0 / h;
    const int M = int(std::lround(Mf));
    if (!(h > 0) || M < 2 || std::abs(M * h - 1.0) > 1e-12)
        throw std::invalid_argument("assemble_fem: 1/h must be an integer >= 2");
    FemSpace sp;
    sp.h = 1.0 / M;
    sp.elements = M;
    sp.bc = bc;
    h = sp.h;
    const int n = bc == Bc::dirichlet ? M - 1 : M + 1;
    const int first = bc == Bc::dirichlet ? 1 : 0;
    sp.nodes.resize(n);
    for (int i = 0; i < n; ++i) sp.nodes[i] = double(first + i) * h;
    sp.mass = Eigen::MatrixXd::Zero(n, n);
    sp.stiff = Eigen::MatrixXd::Zero(n, n);
    // element e joins global nodes e and e+1
    for (int e = 0; e < M; ++e) {
        const int g[2] = {e - first, e + 1 - first};
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
                if (g[a] < 0 || g[a] >= n || g[b] < 0 || g[b] >= n) continue;
                sp.mass(g[a], g[b]) += h / 6.0 * (a == b ? 2.0 : 1.0);
                sp.stiff(g[a], g[b]) += (a == b ? 1.0 : -1.0) / h;
            }
    }
    sp.eigs = fem_eigs(sp);
    return sp;
}

FemEigs fem_eigs(const FemSpace& space) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(space.stiff, space.mass);
    if (es.info() != Eigen::Success) throw std::runtime_error("fem_eigs: eigensolver failed");
    FemEigs out;
    const int skip = space.bc == Bc::neumann_meanzero ? 1 : 0;
    const int n = int(es.eigenvalues().size()) - skip;
    out.lambdas = es.eigenvalues().tail(n);
    out.vectors = es.eigenvectors().rightCols(n);
    for (int i = 0; i < n; ++i) {
        Eigen::Index idx;
        out.vectors.col(i).cwiseAbs().maxCoeff(&idx);
        if (out.vectors(idx, i) < 0) out.vectors.col(i) *= -1.0;
    }
    return out;
}

double fem_dirichlet_eigenvalue(double h, int j) {
    const double c = std::cos(j * pi * h);
    return 6.0 * (1.0 - c) / (h * h * (2.0 + c));
}

Eigen::MatrixXd hat_moments(const FemSpace& space, const EigenBasis& basis) {
    if (space.bc != basis.bc) throw std::invalid_argument("hat_moments: boundary conditions differ");
    const double h = space.h;
    Eigen::MatrixXd P(space.dofs(), basis.J);
    for (int j = 0; j < basis.J; ++j) {
        const double w = (j + 1) * pi;
        const double full = 2.0 * (1.0 - std::cos(w * h)) / (w * w * h);
        for (int nd = 0; nd < space.dofs(); ++nd) {
            const double x = space.nodes[nd];
            double v = basis.eigenfunction(j + 1, x) * full;
            if (space.bc == Bc::neumann_meanzero && (nd == 0 || nd == space.dofs() - 1)) v *= 0.5;
            P(nd, j) = v;
        }
    }
    return P;
}

CrossGramian cross_gramian(const FemSpace& space, const EigenBasis& basis) {
    CrossGramian g;
    g.G = space.eigs.vectors.transpose() * hat_moments(space, basis);
    return g;
}

Projections fem_projections(const FemSpace& space, const EigenBasis& basis, const CrossGramian& G,
                            const Eigen::VectorXd& v) {
    if (v.size() != basis.J) throw std::invalid_argument("fem_projections: length mismatch");
    Projections p;
    p.P = G.G * v;
    p.R = (G.G * basis.lambdas.cwiseProduct(v)).cwiseQuotient(space.eigs.lambdas);
    const double vv = v.squaredNorm();
    p.err_P = std::sqrt(std::max(0.0, vv - p.P.squaredNorm()));
    p.err_R = std::sqrt(std::max(0.0, vv - 2.0 * p.R.dot(p.P) + p.R.squaredNorm()));
    return p;
}

ModalSystem fem_system(const FemSpace& space, const CrossGramian& G, const ModelSpec& model,
                       const RationalScheme* scheme, double k, long long N, double T) {
    if (!model.Q.is_diagonal()) throw std::invalid_argument("fem system: dense Q is not supported");
    if (space.bc != model.basis.bc) throw std::invalid_argument("fem system: boundary conditions differ");
    ModalSystem sys;
    sys.frame = space.frame();
    sys.discrete = scheme != nullptr;
    sys.k = k;
    sys.N = N;
    sys.T = T;
    sys.q = model.Q.diag_weights;
    sys.noise_map = G.G;
    sys.K = G.G * sys.q.asDiagonal() * G.G.transpose();
    fill_modal_modes(sys, model.family, space.eigs.lambdas, scheme);
    return sys;
}

Eigen::VectorXd fem_initial_state(const FemSpace& space, const CrossGramian& G,
                                  const ModelSpec& model) {
    const int J = model.basis.J;
    const int n = space.modes();
    const int d = components(model.family);
    Eigen::VectorXd x(d * n);
    for (int c = 0; c < d; ++c) x.segment(c * n, n) = G.G * model.X0.segment(c * J, J);
    return x;
}

FullyDiscrete fully_discrete_law(const FemSpace& space, const RationalScheme& scheme, double k,
                                 long long N, const ModelSpec& model, bool with_joint) {
    if (!scheme.i_stable) throw std::invalid_argument("scheme " + scheme.name + " is not I-stable");
    const double T = k * double(N);
    const CrossGramian G = cross_gramian(space, model.basis);
    const ModalSystem A = fem_system(space, G, model, &scheme, k, N, T);
    FullyDiscrete out;
    out.law = modal_law(A, fem_initial_state(space, G, model));
    if (!with_joint) return out;
    const ModalSystem B = exact_system(model, T);
    JointLaw& jl = out.joint;
    jl.a = out.law;
    jl.b = mild_law(model, T);
    jl.cross_diagonal = false;
    jl.inner = G.G;
    const Eigen::MatrixXd Kab = G.G * model.Q.diag_weights.asDiagonal();
    for (int c = 0; c < A.comps(); ++c) jl.cross.push_back(modal_cross_cov(A, B, Kab, c, c));
    jl.weights.push_back(Eigen::VectorXd::Ones(model.basis.J));
    if (A.comps() == 2) jl.weights.push_back(model.basis.lambdas.cwiseInverse());
    return out;
}

JointLaw fem_time_joint(const FemSpace& space, const CrossGramian& G, const RationalScheme& scheme,
                        double k, long long N, const ModelSpec& model) {
    const double T = k * double(N);
    const ModalSystem A = fem_system(space, G, model, &scheme, k, N, T);
    const ModalSystem B = fem_system(space, G, model, nullptr, 0.0, 0, T);
    const Eigen::VectorXd x0 = fem_initial_state(space, G, model);
    JointLaw jl;
    jl.a = modal_law(A, x0);
    jl.b = modal_law(B, x0);
    jl.cross_diagonal = true;
    for (int c = 0; c < A.comps(); ++c) jl.cross.push_back(modal_cross_diag(A, B, c, c));
    jl.weights.push_back(Eigen::VectorXd::Ones(space.modes()));
    if (A.comps() == 2) jl.weights.push_back(space.eigs.lambdas.cwiseInverse());
    return jl;
}

}  // namespace ratelab
