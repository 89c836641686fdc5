#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "snls/errors.hpp"
#include "snls/lattice.hpp"
#include "snls/noise.hpp"
#include "snls/tridiag.hpp"

namespace snls {

enum class Scheme { midpoint, euler_maruyama, implicit_euler };

inline std::string_view scheme_name(Scheme s) {
    switch (s) {
        case Scheme::midpoint: return "midpoint";
        case Scheme::euler_maruyama: return "euler_maruyama";
        case Scheme::implicit_euler: return "implicit_euler";
    }
    return "unknown";
}

inline Scheme parse_scheme(std::string_view name) {
    if (name == "midpoint" || name == "mp") return Scheme::midpoint;
    if (name == "euler_maruyama" || name == "em") return Scheme::euler_maruyama;
    if (name == "implicit_euler" || name == "ie") return Scheme::implicit_euler;
    throw InputError("unknown scheme '" + std::string(name) + "'");
}

struct StepperConfig {
    double tau = 0.0;
    double fp_tol = 1e-12;
    int fp_max_iters = 100;
};

struct StepRecord {
    State state;
    int fp_iters = 0;
    double fp_residual = 0.0;
};

inline void validate(const StepperConfig& sc) {
    // Negative steps are accepted so that the midpoint map can be run backwards.
    if (!(sc.tau != 0.0 && std::abs(sc.tau) < 1.0)) throw InputError("StepperConfig: requires 0 < |tau| < 1");
    if (!(sc.fp_tol > 0.0)) throw InputError("StepperConfig: fp_tol must be positive");
    if (sc.fp_max_iters <= 0) throw InputError("StepperConfig: fp_max_iters must be positive");
}

/// One-step map of a scheme with reusable workspace. Holds references to the
/// lattice and noise operators, which must outlive it.
class Stepper {
public:
    Stepper(Scheme scheme, const LatticeConfig& cfg, const NoiseOperators& ops, StepperConfig sc)
        : scheme_(scheme), cfg_(&cfg), ops_(&ops), sc_(sc), zeta_(cfg.M), u_(cfg.M), lap_(cfg.M),
          rhs_lin_(cfg.M), x_(cfg.M), x_prev_(cfg.M) {
        validate(sc_);
        detail::require_length(ops.M, cfg.M, "Stepper noise operators");
        detail::require_length(ops.K, cfg.K, "Stepper noise operators K");
    }

    Scheme scheme() const noexcept { return scheme_; }
    const StepperConfig& config() const noexcept { return sc_; }

    /// Advances u by one step driven by dbeta. Throws StepFailure on failure.
    StepRecord step(const State& u, std::span<const double> dbeta) { return step_impl(u, dbeta, nullptr); }

    /// As step(), with the fixed-point iteration started from `guess` instead of u.
    StepRecord step(const State& u, std::span<const double> dbeta, const State& guess) {
        detail::require_length(guess.size(), cfg_->M, "step initial iterate");
        return step_impl(u, dbeta, &guess);
    }

private:
    StepRecord step_impl(const State& u, std::span<const double> dbeta, const State* guess) {
        detail::require_length(u.size(), cfg_->M, "step state");
        detail::require_length(dbeta.size(), cfg_->K, "step dbeta");
        diffusion_vector(*ops_, dbeta, zeta_);
        for (std::size_t j = 0; j < cfg_->M; ++j) u_[j] = {u.p[j], u.q[j]};
        guess_ = guess;
        StepRecord rec;
        switch (scheme_) {
            case Scheme::midpoint: solve_midpoint(rec); break;
            case Scheme::implicit_euler: solve_implicit_euler(rec); break;
            case Scheme::euler_maruyama: explicit_euler(); break;
        }
        rec.state = State(cfg_->M);
        for (std::size_t j = 0; j < cfg_->M; ++j) {
            if (!std::isfinite(x_[j].real()) || !std::isfinite(x_[j].imag())) {
                throw StepFailure(std::string(scheme_name(scheme_)) + " step: non-finite state", rec.fp_residual,
                                  rec.fp_iters);
            }
            rec.state.p[j] = x_[j].real();
            rec.state.q[j] = x_[j].imag();
        }
        return rec;
    }

    double tau_over_h2() const { return sc_.tau / (cfg_->h * cfg_->h); }

    void factor(std::span<const cplx> diag, cplx off) {
        try {
            lu_.factor(diag, off);
        } catch (const NumericalError& e) {
            throw StepFailure(e.what(), std::numeric_limits<double>::quiet_NaN(), 0);
        }
    }

    // Fixed-point loop on the cubic term; `solve_from` maps the current iterate
    // x_prev_ to the next iterate in x_.
    template <typename SolveFrom>
    void fixed_point(StepRecord& rec, SolveFrom&& solve_from) {
        if (guess_ != nullptr) {
            for (std::size_t j = 0; j < cfg_->M; ++j) x_prev_[j] = {guess_->p[j], guess_->q[j]};
        } else {
            x_prev_ = u_;
        }
        double best = std::numeric_limits<double>::infinity();
        int stagnant = 0;
        for (int it = 1; it <= sc_.fp_max_iters; ++it) {
            solve_from();
            double r2 = 0.0;
            for (std::size_t j = 0; j < cfg_->M; ++j) r2 += std::norm(x_[j] - x_prev_[j]);
            const double res = std::sqrt(r2);
            rec.fp_iters = it;
            rec.fp_residual = res;
            if (!std::isfinite(res)) {
                throw StepFailure(std::string(scheme_name(scheme_)) + " step: non-finite fixed-point iterate", res, it);
            }
            if (res <= sc_.fp_tol) return;
            if (res < best) {
                best = res;
                stagnant = 0;
            } else if (++stagnant >= 10) {
                throw StepFailure(std::string(scheme_name(scheme_)) + " step: fixed-point iteration stagnated", res,
                                  it);
            }
            std::swap(x_, x_prev_);
        }
        throw StepFailure(std::string(scheme_name(scheme_)) + " step: fixed-point iteration did not converge",
                          rec.fp_residual, rec.fp_iters);
    }

    // (I - (i/2)L) X = (I + (i/2)L) u + i lambda tau F(m) m,  L = (tau/h^2) A + diag(zeta),  m = (u + X_p)/2
    void solve_midpoint(StepRecord& rec) {
        const double a = tau_over_h2();
        const cplx half_i{0.0, 0.5};
        apply_laplacian<cplx>(u_, lap_);
        for (std::size_t j = 0; j < cfg_->M; ++j) rhs_lin_[j] = u_[j] + half_i * (a * lap_[j] + zeta_[j] * u_[j]);
        const MidpointSystem sys = midpoint_system(a, zeta_);
        factor(sys.diag, sys.off);
        const cplx nl_coef{0.0, cfg_->lambda * sc_.tau};
        fixed_point(rec, [&] {
            for (std::size_t j = 0; j < cfg_->M; ++j) {
                const cplx m = 0.5 * (u_[j] + x_prev_[j]);
                x_[j] = rhs_lin_[j] + nl_coef * std::norm(m) * m;
            }
            lu_.solve_in_place(x_);
        });
    }

    // (I - i (tau/h^2) A + tau Ehat - i diag(zeta)) X = u + i lambda tau F(X_p) X_p
    void solve_implicit_euler(StepRecord& rec) {
        const double a = tau_over_h2();
        std::vector<cplx>& diag = lap_;
        for (std::size_t j = 0; j < cfg_->M; ++j) {
            diag[j] = cplx{1.0 + sc_.tau * ops_->ehat[j], 2.0 * a - zeta_[j]};
        }
        factor(diag, cplx{0.0, -a});
        const cplx nl_coef{0.0, cfg_->lambda * sc_.tau};
        fixed_point(rec, [&] {
            for (std::size_t j = 0; j < cfg_->M; ++j) x_[j] = u_[j] + nl_coef * std::norm(x_prev_[j]) * x_prev_[j];
            lu_.solve_in_place(x_);
        });
    }

    // X = u + tau b(u) + i diag(zeta) u, b the Ito drift.
    void explicit_euler() {
        const double a = tau_over_h2();
        const cplx i{0.0, 1.0};
        apply_laplacian<cplx>(u_, lap_);
        for (std::size_t j = 0; j < cfg_->M; ++j) {
            const cplx drift_free = i * (a * lap_[j] + cfg_->lambda * sc_.tau * std::norm(u_[j]) * u_[j]);
            x_[j] = u_[j] + drift_free - sc_.tau * ops_->ehat[j] * u_[j] + i * zeta_[j] * u_[j];
        }
    }

    Scheme scheme_;
    const LatticeConfig* cfg_;
    const NoiseOperators* ops_;
    StepperConfig sc_;
    const State* guess_ = nullptr;
    std::vector<double> zeta_;
    std::vector<cplx> u_, lap_, rhs_lin_, x_, x_prev_;
    TridiagonalFactorization lu_;
};

inline StepRecord step_midpoint(const LatticeConfig& cfg, const NoiseOperators& ops, const StepperConfig& sc,
                                const State& u, std::span<const double> dbeta) {
    return Stepper(Scheme::midpoint, cfg, ops, sc).step(u, dbeta);
}

inline StepRecord step_implicit_euler(const LatticeConfig& cfg, const NoiseOperators& ops, const StepperConfig& sc,
                                      const State& u, std::span<const double> dbeta) {
    return Stepper(Scheme::implicit_euler, cfg, ops, sc).step(u, dbeta);
}

inline State step_euler_maruyama(const LatticeConfig& cfg, const NoiseOperators& ops, const StepperConfig& sc,
                                 const State& u, std::span<const double> dbeta) {
    return Stepper(Scheme::euler_maruyama, cfg, ops, sc).step(u, dbeta).state;
}

/// Called with (n, U^n) for n = 0..N.
using Observer = std::function<void(std::size_t, const State&)>;

struct IntegrateOptions {
    /// A path whose norm exceeds this is aborted (not an error).
    double blowup_norm = std::numeric_limits<double>::infinity();
    bool keep_trajectory = false;
};

struct TrajectorySummary {
    State final_state;
    std::size_t steps_taken = 0;
    bool aborted = false;
    int max_fp_iters = 0;
    double max_fp_residual = 0.0;
    std::vector<State> trajectory;  // only with keep_trajectory
};

/// Advances u0 through the increments of `path` at the given level.
inline TrajectorySummary integrate(Scheme scheme, const LatticeConfig& cfg, const NoiseOperators& ops,
                                   const StepperConfig& sc, const State& u0, const PathSpec& path,
                                   Level level = Level::coarse, std::span<const Observer> observers = {},
                                   const IntegrateOptions& opts = {}) {
    detail::require_length(u0.size(), cfg.M, "integrate initial state");
    detail::require_length(path.K, cfg.K, "integrate path K");
    const double step = level == Level::fine ? path.fine_tau() : path.tau;
    if (std::abs(step - sc.tau) > 1e-15 * std::abs(step)) {
        throw InputError("integrate: stepper tau does not match the path step");
    }
    const std::size_t n_steps = level == Level::fine ? path.n_steps * path.fine_per_coarse() : path.n_steps;

    TrajectorySummary out;
    out.final_state = u0;
    if (opts.keep_trajectory) out.trajectory.push_back(u0);
    for (const Observer& obs : observers) obs(0, u0);
    if (n_steps == 0) return out;

    Stepper stepper(scheme, cfg, ops, sc);
    IncrementGenerator gen(path);
    std::vector<double> dbeta(cfg.K);
    const double blowup2 = opts.blowup_norm * opts.blowup_norm;
    for (std::size_t n = 1; n <= n_steps; ++n) {
        gen.next(level, dbeta);
        StepRecord rec;
        try {
            rec = stepper.step(out.final_state, dbeta);
        } catch (StepFailure& e) {
            e.set_step(n);
            throw;
        }
        out.final_state = std::move(rec.state);
        out.steps_taken = n;
        out.max_fp_iters = std::max(out.max_fp_iters, rec.fp_iters);
        out.max_fp_residual = std::max(out.max_fp_residual, rec.fp_residual);
        if (opts.keep_trajectory) out.trajectory.push_back(out.final_state);
        if (charge(out.final_state) > blowup2) {
            out.aborted = true;
            return out;
        }
        for (const Observer& obs : observers) obs(n, out.final_state);
    }
    return out;
}

} // namespace snls
