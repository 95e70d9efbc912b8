#pragma once

#include "ratelab/models.hpp"
#include "ratelab/schemes.hpp"

#include <Eigen/Dense>

namespace ratelab {

struct FemEigs {
    Eigen::VectorXd lambdas;  // ascending
    Eigen::MatrixXd vectors;  // dof x modes, M-orthonormal
};

struct FemSpace {
    double h = 0;
    int elements = 0;
    Bc bc = Bc::dirichlet;
    Eigen::VectorXd nodes;  // coordinates of the degrees of freedom
    Eigen::MatrixXd mass, stiff;
    FemEigs eigs;

    int dofs() const { return int(nodes.size()); }
    int modes() const { return int(eigs.lambdas.size()); }
    Frame frame() const { return {Frame::Kind::fem, bc, modes(), h}; }
};

FemSpace assemble_fem(double h, Bc bc);
FemEigs fem_eigs(const FemSpace& space);

// 6 (1 - cos(j pi h)) / (h^2 (2 + cos(j pi h)))
double fem_dirichlet_eigenvalue(double h, int j);

struct CrossGramian {
    Eigen::MatrixXd G;  // G(i, j) = <phi_j, phi_{h,i}>
};

CrossGramian cross_gramian(const FemSpace& space, const EigenBasis& basis);

// <phi_j, hat_n> for every dof n and mode j
Eigen::MatrixXd hat_moments(const FemSpace& space, const EigenBasis& basis);

struct Projections {
    Eigen::VectorXd P, R;  // discrete eigen-coordinates
    double err_P = 0, err_R = 0;  // L2 distance to v (v truncated to the basis)
};

Projections fem_projections(const FemSpace& space, const EigenBasis& basis,
                            const CrossGramian& G, const Eigen::VectorXd& v);

// FEM frame systems: scheme-driven (k, N) or exact in time (semidiscrete)
ModalSystem fem_system(const FemSpace& space, const CrossGramian& G, const ModelSpec& model,
                       const RationalScheme* scheme, double k, long long N, double T);

// P_h X0 in frame coordinates (both components for wave)
Eigen::VectorXd fem_initial_state(const FemSpace& space, const CrossGramian& G,
                                  const ModelSpec& model);

struct FullyDiscrete {
    GaussianLaw law;
    JointLaw joint;  // (X^N_{h,k}, X(T))
};

FullyDiscrete fully_discrete_law(const FemSpace& space, const RationalScheme& scheme, double k,
                                 long long N, const ModelSpec& model, bool with_joint = true);

// joint law of the fully discrete solution and the semidiscrete one at the same h
JointLaw fem_time_joint(const FemSpace& space, const CrossGramian& G, const RationalScheme& scheme,
                        double k, long long N, const ModelSpec& model);

}  // namespace ratelab
