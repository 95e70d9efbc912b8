#include "ratelab/noise.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ratelab {

namespace {
constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = std::uint64_t(a) * b;
    hi = std::uint32_t(p >> 32);
    lo = std::uint32_t(p);
}

inline double unit_open(std::uint32_t a, std::uint32_t b) {
    const std::uint64_t v = (std::uint64_t(a) << 21) ^ (std::uint64_t(b) >> 11);
    return (double(v) + 0.5) * 0x1.0p-53;
}
}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> c,
                                        std::array<std::uint32_t, 2> k) {
    for (int r = 0; r < 10; ++r) {
        if (r > 0) {
            k[0] += kW0;
            k[1] += kW1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kM0, c[0], hi0, lo0);
        mulhilo(kM1, c[2], hi1, lo1);
        c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
    return c;
}

std::array<double, 2> counter_normals(std::uint64_t seed, std::uint32_t path, std::uint32_t mode,
                                      std::uint32_t step, std::uint32_t stream) {
    const auto x = philox4x32({step, mode, stream, path},
                              {std::uint32_t(seed), std::uint32_t(seed >> 32)});
    const double u1 = unit_open(x[0], x[1]);
    const double u2 = unit_open(x[2], x[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(th), r * std::sin(th)};
}

NoisePath sample_modes(const CovarianceSpec& Q, const std::vector<int>& modes, long long N,
                       double k, std::uint64_t seed, std::uint32_t path) {
    if (!Q.is_diagonal()) throw std::invalid_argument("sample_path: dense Q is not supported");
    if (N < 1) throw std::invalid_argument("sample_path: N must be positive");
    if (!(k > 0)) throw std::invalid_argument("sample_path: k must be positive");
    NoisePath p;
    p.seed = seed;
    p.path = path;
    p.k = k;
    p.N = N;
    p.q.resize(modes.size());
    p.increments.resize(long(modes.size()), N);
    for (std::size_t r = 0; r < modes.size(); ++r) {
        const int j = modes[r];
        if (j < 0 || j >= Q.size()) throw std::invalid_argument("sample_path: mode out of range");
        p.q[r] = Q.diag_weights[j];
        const double sd = std::sqrt(k * p.q[r]);
        for (long long n = 0; n < N; ++n)
            p.increments(r, n) = sd == 0.0 ? 0.0
                                           : sd * counter_normals(seed, path, std::uint32_t(j),
                                                                  std::uint32_t(n), 0)[0];
    }
    return p;
}

NoisePath sample_path(const CovarianceSpec& Q, const EigenBasis& basis, long long N, double k,
                      std::uint64_t seed, std::uint32_t path) {
    if (Q.size() != basis.J) throw std::invalid_argument("sample_path: Q size does not match basis");
    std::vector<int> modes(basis.J);
    for (int j = 0; j < basis.J; ++j) modes[j] = j;
    return sample_modes(Q, modes, N, k, seed, path);
}

NoisePath coarsen(const NoisePath& path, long long m) {
    if (m < 1 || path.N % m != 0) throw std::invalid_argument("coarsen: m must divide N");
    NoisePath out = path;
    out.N = path.N / m;
    out.k = path.k * double(m);
    out.increments = Eigen::MatrixXd::Zero(path.increments.rows(), out.N);
    for (long long n = 0; n < out.N; ++n)
        for (long long r = 0; r < m; ++r) out.increments.col(n) += path.increments.col(n * m + r);
    return out;
}

}  // namespace ratelab
