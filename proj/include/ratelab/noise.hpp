#pragma once

#include "ratelab/spectral_core.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>

namespace ratelab {

// Philox4x32-10 block function.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key);

// Two independent standard normals addressed by (seed, path, mode, step, stream).
std::array<double, 2> counter_normals(std::uint64_t seed, std::uint32_t path, std::uint32_t mode,
                                      std::uint32_t step, std::uint32_t stream);

struct NoisePath {
    Eigen::MatrixXd increments;  // J x N, entry (j, n) ~ N(0, k q_j)
    std::uint64_t seed = 0;
    std::uint32_t path = 0;
    double k = 0;
    long long N = 0;
    Eigen::VectorXd q;

    int J() const { return int(increments.rows()); }
};

// Increments of path `path`; entry (j, n) depends only on (seed, path, j, n).
NoisePath sample_path(const CovarianceSpec& Q, const EigenBasis& basis, long long N, double k,
                      std::uint64_t seed, std::uint32_t path = 0);

// same contract restricted to a subset of modes (0-based)
NoisePath sample_modes(const CovarianceSpec& Q, const std::vector<int>& modes, long long N,
                       double k, std::uint64_t seed, std::uint32_t path = 0);

NoisePath coarsen(const NoisePath& path, long long m);

}  // namespace ratelab
