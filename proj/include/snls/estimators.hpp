#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "snls/errors.hpp"
#include "snls/lattice.hpp"
#include "snls/noise.hpp"
#include "snls/parallel.hpp"
#include "snls/schemes.hpp"

namespace snls {

// ---------------------------------------------------------------------------
// Observables
// ---------------------------------------------------------------------------

/// ||U||_gamma^gamma = sum_m |p_m|^gamma + |q_m|^gamma, taken componentwise.
inline double pnorm_pow(const State& u, int gamma) {
    double s = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        s += std::pow(std::abs(u.p[j]), gamma) + std::pow(std::abs(u.q[j]), gamma);
    }
    return s;
}

enum class ObservableId { charge, pnorm3, sin_pnorm4, exp_neg_pnorm4, custom };

struct Observable {
    ObservableId id = ObservableId::charge;
    std::string name = "charge";
    std::function<double(const State&)> fn;  // only for custom
};

inline Observable builtin_observable(ObservableId id) {
    switch (id) {
        case ObservableId::charge: return {id, "charge", {}};
        case ObservableId::pnorm3: return {id, "pnorm3", {}};
        case ObservableId::sin_pnorm4: return {id, "sin_pnorm4", {}};
        case ObservableId::exp_neg_pnorm4: return {id, "exp_neg_pnorm4", {}};
        case ObservableId::custom: break;
    }
    throw InputError("builtin_observable: custom observables need a function");
}

inline Observable custom_observable(std::string name, std::function<double(const State&)> fn) {
    return {ObservableId::custom, std::move(name), std::move(fn)};
}

inline Observable parse_observable(std::string_view name) {
    if (name == "charge") return builtin_observable(ObservableId::charge);
    if (name == "pnorm3") return builtin_observable(ObservableId::pnorm3);
    if (name == "sin_pnorm4") return builtin_observable(ObservableId::sin_pnorm4);
    if (name == "exp_neg_pnorm4") return builtin_observable(ObservableId::exp_neg_pnorm4);
    throw InputError("unknown observable '" + std::string(name) + "'");
}

inline double evaluate(const Observable& obs, const State& u) {
    switch (obs.id) {
        case ObservableId::charge: return charge(u);
        case ObservableId::pnorm3: return pnorm_pow(u, 3);
        case ObservableId::sin_pnorm4: return std::sin(pnorm_pow(u, 4));
        case ObservableId::exp_neg_pnorm4: return std::exp(-pnorm_pow(u, 4));
        case ObservableId::custom:
            if (!obs.fn) throw InputError("custom observable '" + obs.name + "' has no function");
            return obs.fn(u);
    }
    return std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

/// Fixed-shape pairwise summation; the result depends only on the input order.
inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

/// (1/N) sum_{n=1}^N f(U^n) for a series that starts at n = 1.
inline double time_average(std::span<const double> series) {
    if (series.empty()) throw InputError("time_average: empty series");
    return pairwise_sum(series) / static_cast<double>(series.size());
}

struct MeanEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t count = 0;
};

/// Sample mean and standard error s / sqrt(n).
inline MeanEstimate ensemble_mean(std::span<const double> values) {
    if (values.size() < 2) throw InputError("ensemble_mean: need at least 2 paths");
    const auto n = static_cast<double>(values.size());
    const double mean = pairwise_sum(values) / n;
    std::vector<double> dev2(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) dev2[i] = (values[i] - mean) * (values[i] - mean);
    const double var = pairwise_sum(dev2) / (n - 1.0);
    return {mean, std::sqrt(var / n), values.size()};
}

// ---------------------------------------------------------------------------
// Order regression
// ---------------------------------------------------------------------------

struct OrderFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;      // root-mean-square residual in log2 space
    double slope_stderr = 0.0;  // zero for exact fits and for three or fewer points
    std::vector<std::pair<double, double>> points;
};

/// Least squares of log2(error) against log2(tau).
inline OrderFit fit_order(std::span<const std::pair<double, double>> points) {
    if (points.size() < 3) throw InputError("fit_order: need at least 3 points");
    const auto n = static_cast<double>(points.size());
    double sx = 0.0, sy = 0.0;
    std::vector<double> xs, ys;
    for (const auto& [tau, err] : points) {
        if (!(tau > 0.0)) throw InputError("fit_order: step sizes must be positive");
        if (!(err > 0.0)) throw InputError("fit_order: errors must be positive");
        xs.push_back(std::log2(tau));
        ys.push_back(std::log2(err));
        sx += xs.back();
        sy += ys.back();
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx == 0.0) throw InputError("fit_order: step sizes must not all be equal");
    OrderFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double e = ys[i] - (fit.intercept + fit.slope * xs[i]);
        ss += e * e;
    }
    fit.residual = std::sqrt(ss / n);
    fit.slope_stderr = points.size() > 2 ? std::sqrt(ss / (n - 2.0) / sxx) : 0.0;
    fit.points.assign(points.begin(), points.end());
    return fit;
}

/// Ordinary least-squares slope of y against x with its standard error.
struct LinearTrend {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
};

inline LinearTrend linear_trend(std::span<const double> x, std::span<const double> y) {
    detail::require_length(y.size(), x.size(), "linear_trend");
    if (x.size() < 3) throw InputError("linear_trend: need at least 3 points");
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw InputError("linear_trend: abscissae must not all be equal");
    LinearTrend t;
    t.slope = sxy / sxx;
    t.intercept = my - t.slope * mx;
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - (t.intercept + t.slope * x[i]);
        ss += e * e;
    }
    t.slope_stderr = std::sqrt(ss / (n - 2.0) / sxx);
    return t;
}

/// As above, with per-point standard errors folded into the slope uncertainty:
/// se^2 = se_ols^2 + sum_i ((x_i - xbar)/Sxx)^2 sigma_i^2.
inline LinearTrend linear_trend(std::span<const double> x, std::span<const double> y, std::span<const double> sigma) {
    detail::require_length(sigma.size(), x.size(), "linear_trend sigma");
    LinearTrend t = linear_trend(x, y);
    double mx = 0.0;
    for (double v : x) mx += v;
    mx /= static_cast<double>(x.size());
    double sxx = 0.0;
    for (double v : x) sxx += (v - mx) * (v - mx);
    double var_mc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double w = (x[i] - mx) / sxx;
        var_mc += w * w * sigma[i] * sigma[i];
    }
    t.slope_stderr = std::sqrt(t.slope_stderr * t.slope_stderr + var_mc);
    return t;
}

// ---------------------------------------------------------------------------
// Coupled weak error
// ---------------------------------------------------------------------------

struct WeakErrorEstimate {
    double error = 0.0;           // |E f(coarse) - E f(reference)|
    double std_error = 0.0;         // standard error of the per-path difference
    double coarse_mean = 0.0;
    double reference_mean = 0.0;
    std::size_t paths_used = 0;
    std::size_t paths_aborted = 0;  // coarse paths past the blow-up guard
};

struct WeakErrorSetup {
    Scheme scheme = Scheme::midpoint;
    StepperConfig stepper;        // coarse step in stepper.tau
    unsigned refinement = 4;      // reference step tau / 2^r, always midpoint
    std::uint64_t seed = 0;
    std::size_t n_paths = 500;
    unsigned threads = 1;
    double blowup_norm = std::numeric_limits<double>::infinity();
};

/// Weak errors at each checkpoint (in coarse steps, increasing) for every observable.
/// Result is indexed [checkpoint][observable]. Coarse and reference runs of a path
/// share one Brownian path.
inline std::vector<std::vector<WeakErrorEstimate>> weak_error_series(const LatticeConfig& cfg,
                                                                     const NoiseOperators& ops,
                                                                     const WeakErrorSetup& setup, const State& u0,
                                                                     std::span<const std::size_t> checkpoints,
                                                                     std::span<const Observable> observables) {
    if (checkpoints.empty()) throw InputError("weak_error: no checkpoints");
    for (std::size_t c = 1; c < checkpoints.size(); ++c) {
        if (checkpoints[c] <= checkpoints[c - 1]) throw InputError("weak_error: checkpoints must increase");
    }
    if (setup.n_paths < 2) throw InputError("weak_error: need at least 2 paths");
    const std::size_t n_cp = checkpoints.size();
    const std::size_t n_obs = observables.size();
    const std::size_t n_steps = checkpoints.back();
    const double nan = std::numeric_limits<double>::quiet_NaN();

    StepperConfig ref_sc = setup.stepper;
    ref_sc.tau = std::ldexp(setup.stepper.tau, -static_cast<int>(setup.refinement));
    validate(setup.stepper);
    validate(ref_sc);

    // Per path: [checkpoint][observable] values of coarse and reference, NaN after an abort.
    struct PathValues {
        std::vector<double> coarse;
        std::vector<double> reference;
    };
    const auto per_path = map_paths<PathValues>(setup.n_paths, setup.threads, [&](std::size_t i) {
        PathValues pv{std::vector<double>(n_cp * n_obs, nan), std::vector<double>(n_cp * n_obs, nan)};
        PathSpec path{setup.seed, i, cfg.K, setup.stepper.tau, setup.refinement, n_steps};
        IncrementGenerator gen(path);
        Stepper coarse(setup.scheme, cfg, ops, setup.stepper);
        Stepper reference(Scheme::midpoint, cfg, ops, ref_sc);
        State uc = u0, ur = u0;
        std::vector<double> dbeta(cfg.K);
        const double blowup2 = setup.blowup_norm * setup.blowup_norm;
        bool alive = true;
        std::size_t cp = 0;
        for (std::size_t n = 1; n <= n_steps; ++n) {
            gen.next_coarse(dbeta, [&](std::span<const double> fine) { ur = reference.step(ur, fine).state; });
            if (alive) {
                try {
                    uc = coarse.step(uc, dbeta).state;
                    alive = charge(uc) <= blowup2;
                } catch (const StepFailure&) {
                    if (setup.scheme != Scheme::euler_maruyama) throw;
                    alive = false;
                }
            }
            if (n == checkpoints[cp]) {
                for (std::size_t o = 0; o < n_obs; ++o) {
                    pv.reference[cp * n_obs + o] = evaluate(observables[o], ur);
                    if (alive) pv.coarse[cp * n_obs + o] = evaluate(observables[o], uc);
                }
                ++cp;
            }
        }
        return pv;
    });

    std::vector<std::vector<WeakErrorEstimate>> out(n_cp, std::vector<WeakErrorEstimate>(n_obs));
    for (std::size_t c = 0; c < n_cp; ++c) {
        for (std::size_t o = 0; o < n_obs; ++o) {
            std::vector<double> diff, fc, fr;
            std::size_t aborted = 0;
            for (const PathValues& pv : per_path) {
                const double a = pv.coarse[c * n_obs + o];
                const double b = pv.reference[c * n_obs + o];
                if (std::isnan(a)) {
                    ++aborted;
                    continue;
                }
                diff.push_back(a - b);
                fc.push_back(a);
                fr.push_back(b);
            }
            WeakErrorEstimate& w = out[c][o];
            w.paths_aborted = aborted;
            w.paths_used = diff.size();
            if (diff.size() < 2) {
                w.error = w.std_error = w.coarse_mean = w.reference_mean = std::numeric_limits<double>::infinity();
                continue;
            }
            const MeanEstimate d = ensemble_mean(diff);
            w.error = std::abs(ensemble_mean(fc).mean - ensemble_mean(fr).mean);
            w.std_error = d.std_error;
            w.coarse_mean = ensemble_mean(fc).mean;
            w.reference_mean = ensemble_mean(fr).mean;
        }
    }
    return out;
}

/// |E f(U_coarse(T)) - E f(U_ref(T))| for each observable, T = n_steps * tau.
inline std::vector<WeakErrorEstimate> weak_error(const LatticeConfig& cfg, const NoiseOperators& ops,
                                                 const WeakErrorSetup& setup, const State& u0, double T,
                                                 std::span<const Observable> observables) {
    const double ratio = T / setup.stepper.tau;
    const auto n_steps = static_cast<std::size_t>(std::llround(ratio));
    if (n_steps == 0 || std::abs(ratio - static_cast<double>(n_steps)) > 1e-9 * ratio) {
        throw InputError("weak_error: T / tau must be a positive integer");
    }
    const std::size_t cp[] = {n_steps};
    return weak_error_series(cfg, ops, setup, u0, cp, observables).front();
}

// ---------------------------------------------------------------------------
// Increment moments
// ---------------------------------------------------------------------------

/// Monte-Carlo estimate of E ||U^1 - U^0||^{2 gamma} from u0.
inline MeanEstimate increment_moment(Scheme scheme, const LatticeConfig& cfg, const NoiseOperators& ops,
                                     const StepperConfig& sc, const State& u0, int gamma, std::size_t n_paths,
                                     std::uint64_t seed, unsigned threads = 1) {
    if (gamma != 1 && gamma != 2) throw InputError("increment_moment: gamma must be 1 or 2");
    const auto values = map_paths<double>(n_paths, threads, [&](std::size_t i) {
        const std::vector<double> dbeta = increments(PathSpec{seed, i, cfg.K, sc.tau, 0, 1}, Level::coarse).front();
        const State u1 = Stepper(scheme, cfg, ops, sc).step(u0, dbeta).state;
        return std::pow(distance(u1, u0), 2 * gamma);
    });
    return ensemble_mean(values);
}

} // namespace snls
