#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Core>

namespace nkf {

/// Stream roles keep the noise sources of one experiment statistically
/// disjoint, so replications can run in any order (or in parallel) and
/// still draw identical streams.
enum class StreamRole : std::uint64_t {
    process_noise = 1,
    measurement_noise = 2,
    initial_state = 3,
    sampling = 4,
    weights = 5,
    shuffle = 6,
    input_signal = 7,
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace detail

/// Mixes (base seed, replication, role) into an independent stream key.
inline std::uint64_t derive_stream_key(std::uint64_t base_seed,
                                       std::uint64_t replication,
                                       StreamRole role) {
    std::uint64_t s = base_seed;
    std::uint64_t k = detail::splitmix64(s);
    s ^= replication * 0xda942042e4dd58b5ULL;
    k ^= detail::splitmix64(s);
    s ^= static_cast<std::uint64_t>(role) * 0x2545f4914f6cdd1dULL;
    k ^= detail::splitmix64(s);
    return k;
}

/// Deterministic random stream. Normal variates use Box-Muller on the raw
/// engine output, so a given key yields the same draws on every platform.
class RngStream {
public:
    explicit RngStream(std::uint64_t stream_key) : engine_(stream_key) {}

    RngStream(std::uint64_t base_seed, std::uint64_t replication, StreamRole role)
        : RngStream(derive_stream_key(base_seed, replication, role)) {}

    /// Uniform in [0, 1).
    double uniform() {
        return (engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_below(std::uint64_t n) {
        // Rejection-free modulo is fine here: n is tiny relative to 2^64.
        return engine_() % n;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double radius = std::sqrt(-2.0 * std::log(u1));
        double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    Eigen::VectorXd normal_vector(Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
        return v;
    }

    Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal();
        return m;
    }

    /// Fisher-Yates shuffle of 0..n-1.
    std::vector<int> permutation(int n) {
        std::vector<int> p(n);
        for (int i = 0; i < n; ++i) p[i] = i;
        for (int i = n - 1; i > 0; --i) {
            int j = static_cast<int>(uniform_below(static_cast<std::uint64_t>(i) + 1));
            std::swap(p[i], p[j]);
        }
        return p;
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace nkf
