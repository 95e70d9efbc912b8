#pragma once

#include "ratelab/modal.hpp"
#include "ratelab/models.hpp"

#include <Eigen/Dense>

#include <complex>
#include <string>
#include <vector>

namespace ratelab {

struct FemSpace;
struct NoisePath;

struct RationalScheme {
    std::string name;
    std::vector<double> num, den;  // ascending powers of z
    int verified_order = 0;
    double fitted_slope = 0;
    bool i_stable = false;
    double b = 1.0;

    cplx operator()(cplx z) const;
    double operator()(double x) const { return (*this)(cplx(x, 0.0)).real(); }
};

RationalScheme make_scheme(const std::string& preset, double b = 1.0);
RationalScheme make_scheme(std::vector<double> num, std::vector<double> den, double b = 1.0,
                           std::string name = "custom");

// R(kA_j) for the 2x2 wave block: a I + b A_j with a + i b sqrt(lambda) = R(i k sqrt(lambda))
Eigen::Matrix2d mode_step_wave(const RationalScheme& scheme, double k, double lambda);

struct DiscreteLawRequest {
    ModelSpec model;
    RationalScheme scheme;
    double k = 0;
    long long N = 0;
    const FemSpace* fem = nullptr;  // spectral when null

    void validate() const;
};

// fills rates, multipliers and injections of a modal system with k already set
void fill_modal_modes(ModalSystem& sys, Family fam, const Eigen::VectorXd& lambdas,
                      const RationalScheme* scheme);

// The per-mode system behind a request (spectral or discrete FEM frame).
ModalSystem discrete_system(const DiscreteLawRequest& req);
// exact-in-time counterpart on the continuous spectral basis
ModalSystem exact_system(const ModelSpec& model, double T);

// frame coordinates of the deterministic initial state (P_h X0 for FEM)
Eigen::VectorXd frame_initial_state(const DiscreteLawRequest& req);

Eigen::VectorXd evolve_discrete(const DiscreteLawRequest& req, const Eigen::VectorXd& X0,
                                const NoisePath& noise);

GaussianLaw discrete_law(const DiscreteLawRequest& req, const Eigen::VectorXd& X0);

enum class SampleMode { grid, sup };

double interpolated_error_sup(const RationalScheme& scheme, double k, const EigenBasis& basis,
                              double alpha, double T, SampleMode mode, int subsamples = 16);

double stability_sup(const RationalScheme& scheme, double k, const EigenBasis& basis, long long N);

}  // namespace ratelab
