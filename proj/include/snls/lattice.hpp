#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "snls/errors.hpp"

namespace snls {

using cplx = std::complex<double>;

/// Uniform interior grid on [0,1] with homogeneous Dirichlet ends, truncated
/// sine-basis noise with amplitudes eta[k-1] for k = 1..K.
struct LatticeConfig {
    std::size_t M = 0;
    std::size_t K = 0;
    double h = 0.0;
    double lambda = 1.0;
    std::vector<double> eta;

    double x(std::size_t j) const { return static_cast<double>(j) * h; }  // j is 1-based
};

/// eta_k = k^-power, k = 1..K.
inline std::vector<double> power_law_eta(std::size_t K, double power = 4.0) {
    std::vector<double> eta(K);
    for (std::size_t k = 1; k <= K; ++k) {
        eta[k - 1] = std::pow(static_cast<double>(k), -power);
    }
    return eta;
}

inline LatticeConfig make_lattice(std::size_t M, std::size_t K, double lambda = 1.0,
                                  std::vector<double> eta = {}) {
    if (M == 0) throw InputError("lattice: M must be positive");
    if (K == 0) throw InputError("lattice: K must be positive");
    if (M > K) throw InputError("lattice: requires M <= K");
    if (lambda != 1.0 && lambda != -1.0) throw InputError("lattice: lambda must be +1 or -1");
    if (eta.empty()) eta = power_law_eta(K);
    detail::require_length(eta.size(), K, "lattice eta");
    for (double e : eta) {
        if (!(e > 0.0) || !std::isfinite(e)) throw InputError("lattice: eta_k must be positive and finite");
    }
    LatticeConfig cfg;
    cfg.M = M;
    cfg.K = K;
    cfg.h = 1.0 / static_cast<double>(M + 1);
    cfg.lambda = lambda;
    cfg.eta = std::move(eta);
    return cfg;
}

/// Complex vector U = P + iQ held as its real and imaginary parts.
struct State {
    std::vector<double> p;
    std::vector<double> q;

    State() = default;
    explicit State(std::size_t m) : p(m, 0.0), q(m, 0.0) {}
    State(std::vector<double> re, std::vector<double> im) : p(std::move(re)), q(std::move(im)) {
        detail::require_length(q.size(), p.size(), "State");
    }

    std::size_t size() const noexcept { return p.size(); }

    friend bool operator==(const State&, const State&) = default;
};

inline double charge(const State& u) {
    double s = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) s += u.p[j] * u.p[j] + u.q[j] * u.q[j];
    return s;
}

inline std::vector<cplx> to_complex(const State& u) {
    std::vector<cplx> z(u.size());
    for (std::size_t j = 0; j < u.size(); ++j) z[j] = {u.p[j], u.q[j]};
    return z;
}

inline State from_complex(std::span<const cplx> z) {
    State u(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) {
        u.p[j] = z[j].real();
        u.q[j] = z[j].imag();
    }
    return u;
}

/// Euclidean distance between two states.
inline double distance(const State& a, const State& b) {
    detail::require_length(b.size(), a.size(), "distance");
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double dp = a.p[j] - b.p[j];
        const double dq = a.q[j] - b.q[j];
        s += dp * dp + dq * dq;
    }
    return std::sqrt(s);
}

/// e_k(x) = sqrt(2) sin(k pi x), the Dirichlet eigenbasis of the Laplacian on [0,1].
inline double eigenfunction(std::size_t k, double x) {
    if (k == 0) throw InputError("eigenfunction: k must be >= 1");
    if (!(x >= 0.0 && x <= 1.0)) throw InputError("eigenfunction: x must lie in [0,1]");
    return std::numbers::sqrt2 * std::sin(static_cast<double>(k) * std::numbers::pi * x);
}

/// Noise eigenstructure sampled on the grid.
struct NoiseOperators {
    std::size_t M = 0;
    std::size_t K = 0;
    std::vector<double> emk;      // M x K row-major, e_k(x_j)
    std::vector<double> lambda;   // sqrt(eta_k)
    std::vector<double> ehat;     // (1/2) sum_k eta_k e_k(x_j)^2
    std::vector<double> weights;  // M x K row-major, sqrt(eta_k) e_k(x_j)

    double e(std::size_t j, std::size_t k) const { return emk[j * K + k]; }  // 0-based
};

inline NoiseOperators make_noise_operators(const LatticeConfig& cfg) {
    NoiseOperators ops;
    ops.M = cfg.M;
    ops.K = cfg.K;
    ops.emk.resize(cfg.M * cfg.K);
    ops.weights.resize(cfg.M * cfg.K);
    ops.lambda.resize(cfg.K);
    ops.ehat.assign(cfg.M, 0.0);
    for (std::size_t k = 0; k < cfg.K; ++k) ops.lambda[k] = std::sqrt(cfg.eta[k]);
    for (std::size_t j = 0; j < cfg.M; ++j) {
        for (std::size_t k = 0; k < cfg.K; ++k) {
            const double e = eigenfunction(k + 1, cfg.x(j + 1));
            ops.emk[j * cfg.K + k] = e;
            ops.weights[j * cfg.K + k] = ops.lambda[k] * e;
            ops.ehat[j] += 0.5 * cfg.eta[k] * e * e;
        }
    }
    return ops;
}

/// out = A v with A = tridiag(1, -2, 1) and zero Dirichlet padding. No 1/h^2 factor.
template <typename T>
void apply_laplacian(std::span<const T> v, std::span<T> out) {
    const std::size_t m = v.size();
    detail::require_length(out.size(), m, "apply_laplacian output");
    if (m == 0) return;
    if (m == 1) {
        out[0] = T(-2) * v[0];
        return;
    }
    out[0] = T(-2) * v[0] + v[1];
    for (std::size_t j = 1; j + 1 < m; ++j) out[j] = v[j - 1] + T(-2) * v[j] + v[j + 1];
    out[m - 1] = v[m - 2] + T(-2) * v[m - 1];
}

template <typename T>
std::vector<T> apply_laplacian(const LatticeConfig& cfg, std::span<const T> v) {
    detail::require_length(v.size(), cfg.M, "apply_laplacian");
    std::vector<T> out(v.size());
    apply_laplacian<T>(v, std::span<T>(out));
    return out;
}

/// zeta_j = sum_k sqrt(eta_k) e_k(x_j) dbeta_k, so that Z(U) dbeta = diag(zeta) U.
inline void diffusion_vector(const NoiseOperators& ops, std::span<const double> dbeta,
                             std::span<double> zeta) {
    detail::require_length(dbeta.size(), ops.K, "diffusion_vector dbeta");
    detail::require_length(zeta.size(), ops.M, "diffusion_vector output");
    for (std::size_t j = 0; j < ops.M; ++j) {
        const double* w = ops.weights.data() + j * ops.K;
        double s = 0.0;
        for (std::size_t k = 0; k < ops.K; ++k) s += w[k] * dbeta[k];
        zeta[j] = s;
    }
}

inline std::vector<double> diffusion_vector(const LatticeConfig& cfg, const NoiseOperators& ops,
                                            std::span<const double> dbeta) {
    std::vector<double> zeta(cfg.M);
    diffusion_vector(ops, dbeta, zeta);
    return zeta;
}

/// Ito drift b(U) = i A U / h^2 + i lambda F(U) U - Ehat U, evaluated on (P, Q).
inline State ito_drift(const LatticeConfig& cfg, const NoiseOperators& ops, const State& u) {
    detail::require_length(u.size(), cfg.M, "ito_drift");
    const std::size_t m = cfg.M;
    const double inv_h2 = 1.0 / (cfg.h * cfg.h);
    std::vector<double> ap(m), aq(m);
    apply_laplacian<double>(u.p, ap);
    apply_laplacian<double>(u.q, aq);
    State b(m);
    for (std::size_t j = 0; j < m; ++j) {
        const double mod2 = u.p[j] * u.p[j] + u.q[j] * u.q[j];
        // i (x + i y) = -y + i x
        b.p[j] = -inv_h2 * aq[j] - cfg.lambda * mod2 * u.q[j] - ops.ehat[j] * u.p[j];
        b.q[j] = inv_h2 * ap[j] + cfg.lambda * mod2 * u.p[j] - ops.ehat[j] * u.q[j];
    }
    return b;
}

/// Identifiers of the five built-in initial profiles.
enum class InitialCondition : int {
    diagonal = 1,       // (1 + i)/sqrt(2)
    constant = 2,       // 1
    linear = 3,         // 2x
    boundary_bump = 4,  // (1 - sqrt(pi/2 (e^{1/4} - 1))) (1 - exp(x(1-x)))
    soliton = 5,        // sech(x/sqrt 2) exp(i x/2)
};

inline cplx initial_profile(InitialCondition id, double x) {
    switch (id) {
        case InitialCondition::diagonal:
            return {1.0 / std::numbers::sqrt2, 1.0 / std::numbers::sqrt2};
        case InitialCondition::constant:
            return {1.0, 0.0};
        case InitialCondition::linear:
            return {2.0 * x, 0.0};
        case InitialCondition::boundary_bump: {
            const double c = 1.0 - std::sqrt(std::numbers::pi / 2.0 * (std::exp(0.25) - 1.0));
            return {c * (1.0 - std::exp(x * (1.0 - x))), 0.0};
        }
        case InitialCondition::soliton:
            return std::polar(1.0 / std::cosh(x / std::numbers::sqrt2), x / 2.0);
    }
    throw InputError("initial_state: unknown initial condition id");
}

inline InitialCondition initial_condition_from_id(int id) {
    if (id < 1 || id > 5) {
        throw InputError("initial_state: unknown initial condition id " + std::to_string(id));
    }
    return static_cast<InitialCondition>(id);
}

/// Rescales grid samples to unit charge. Boundary nodes are not sampled.
inline State normalized_state(std::span<const cplx> samples) {
    double norm2 = 0.0;
    for (const cplx& z : samples) norm2 += std::norm(z);
    if (!(norm2 > 0.0) || !std::isfinite(norm2)) {
        throw InputError("initial_state: samples must have positive finite norm");
    }
    const double c = 1.0 / std::sqrt(norm2);
    State u(samples.size());
    for (std::size_t j = 0; j < samples.size(); ++j) {
        u.p[j] = c * samples[j].real();
        u.q[j] = c * samples[j].imag();
    }
    return u;
}

inline State initial_state(const LatticeConfig& cfg, InitialCondition id) {
    std::vector<cplx> s(cfg.M);
    for (std::size_t j = 0; j < cfg.M; ++j) s[j] = initial_profile(id, cfg.x(j + 1));
    return normalized_state(s);
}

inline State initial_state(const LatticeConfig& cfg, int id) {
    return initial_state(cfg, initial_condition_from_id(id));
}

inline State initial_state(const LatticeConfig& cfg, std::span<const cplx> samples) {
    detail::require_length(samples.size(), cfg.M, "initial_state samples");
    return normalized_state(samples);
}

} // namespace snls
