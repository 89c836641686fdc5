#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "snls/errors.hpp"

namespace snls {

/// Addresses one Brownian path: the stream is derived from (seed, path_index),
/// the fine grid has step tau / 2^refinement and the coarse grid step tau.
struct PathSpec {
    std::uint64_t seed = 0;
    std::uint64_t path_index = 0;
    std::size_t K = 1;
    double tau = 0.0;
    unsigned refinement = 0;
    std::size_t n_steps = 0;

    std::size_t fine_per_coarse() const { return std::size_t{1} << refinement; }
    double fine_tau() const { return std::ldexp(tau, -static_cast<int>(refinement)); }
};

/// Independent N(0,1) stream for one path. Single owner; not thread-safe.
class NormalStream {
public:
    NormalStream(std::uint64_t seed, std::uint64_t path_index) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(path_index),
                          static_cast<std::uint32_t>(path_index >> 32), 0x6e6c7332u};
        engine_.seed(seq);
    }

    double operator()() { return dist_(engine_); }

    void fill(std::span<double> out, double scale = 1.0) {
        for (double& x : out) x = scale * dist_(engine_);
    }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> dist_{0.0, 1.0};
};

inline NormalStream derive_stream(std::uint64_t seed, std::uint64_t path_index) {
    return NormalStream(seed, path_index);
}

enum class Level { coarse, fine };

/// Streams the increments of one path. Fine increments are drawn first; a coarse
/// increment is the left-to-right sum of the 2^r fine increments it covers.
class IncrementGenerator {
public:
    explicit IncrementGenerator(const PathSpec& spec)
        : spec_(spec), stream_(spec.seed, spec.path_index), sqrt_fine_tau_(std::sqrt(spec.fine_tau())),
          fine_(spec.K) {
        if (spec.K == 0) throw InputError("PathSpec: K must be positive");
        if (!(spec.tau > 0.0)) throw InputError("PathSpec: tau must be positive");
        if (spec.refinement > 30) throw InputError("PathSpec: refinement too large");
    }

    const PathSpec& spec() const noexcept { return spec_; }

    void next_fine(std::span<double> out) {
        detail::require_length(out.size(), spec_.K, "next_fine");
        stream_.fill(out, sqrt_fine_tau_);
    }

    /// Draws one coarse increment; `on_fine` sees every fine increment in order.
    template <typename FineFn>
    void next_coarse(std::span<double> coarse, FineFn&& on_fine) {
        detail::require_length(coarse.size(), spec_.K, "next_coarse");
        const std::size_t n = spec_.fine_per_coarse();
        for (std::size_t s = 0; s < n; ++s) {
            next_fine(fine_);
            on_fine(std::span<const double>(fine_));
            if (s == 0) {
                for (std::size_t k = 0; k < spec_.K; ++k) coarse[k] = fine_[k];
            } else {
                for (std::size_t k = 0; k < spec_.K; ++k) coarse[k] += fine_[k];
            }
        }
    }

    void next_coarse(std::span<double> coarse) {
        next_coarse(coarse, [](std::span<const double>) {});
    }

    void next(Level level, std::span<double> out) {
        if (level == Level::fine) {
            next_fine(out);
        } else {
            next_coarse(out);
        }
    }

private:
    PathSpec spec_;
    NormalStream stream_;
    double sqrt_fine_tau_;
    std::vector<double> fine_;
};

/// Materializes the increments of a path: n_steps coarse or n_steps * 2^r fine vectors.
inline std::vector<std::vector<double>> increments(const PathSpec& spec, Level level) {
    IncrementGenerator gen(spec);
    const std::size_t count = level == Level::fine ? spec.n_steps * spec.fine_per_coarse() : spec.n_steps;
    std::vector<std::vector<double>> out(count, std::vector<double>(spec.K));
    for (auto& v : out) gen.next(level, v);
    return out;
}

} // namespace snls
