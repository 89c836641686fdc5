#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "snls/estimators.hpp"
#include "snls/geometry.hpp"
#include "snls/harness/config.hpp"
#include "snls/harness/record.hpp"
#include "snls/lattice.hpp"
#include "snls/noise.hpp"
#include "snls/parallel.hpp"
#include "snls/schemes.hpp"

namespace snls::harness {

namespace detail {

inline std::size_t steps_for(double T, double tau) { return static_cast<std::size_t>(std::llround(T / tau)); }

inline std::string tau_label(double tau) {
    const double l = std::log2(tau);
    if (l == std::round(l)) return "2^" + std::to_string(static_cast<long long>(l));
    return format_number(tau);
}

/// Recorded step indices: 0, stride, 2 stride, ..., always including n_steps.
inline std::vector<std::size_t> recorded_steps(std::size_t n_steps, std::size_t stride, bool include_zero) {
    std::vector<std::size_t> out;
    for (std::size_t n = include_zero ? 0 : stride; n < n_steps; n += stride) out.push_back(n);
    out.push_back(n_steps);
    return out;
}

inline bool finite_values_only(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Mean and SE of the finite entries of column `c` across paths.
inline std::pair<MeanEstimate, std::size_t> column_mean(const std::vector<std::vector<double>>& per_path,
                                                        std::size_t c) {
    std::vector<double> v;
    v.reserve(per_path.size());
    for (const auto& p : per_path) {
        if (std::isfinite(p[c])) v.push_back(p[c]);
    }
    if (v.size() < 2) return {MeanEstimate{}, v.size()};
    return {ensemble_mean(v), v.size()};
}

struct ChargePath {
    std::vector<double> charge;
    double abort_time = std::numeric_limits<double>::quiet_NaN();
    std::string failure;
};

struct SymplecticPath {
    std::vector<double> wedge_drift;
    std::vector<double> residual;
};

inline void run_charge(RunRecord& rec) {
    const ExperimentConfig& c = rec.config;
    const LatticeConfig cfg = c.lattice();
    const NoiseOperators ops = make_noise_operators(cfg);
    const State u0 = initial_state(cfg, c.initial.front());
    const double nan = std::numeric_limits<double>::quiet_NaN();

    for (Scheme scheme : c.schemes) {
        const double T = c.T_for(scheme_name(scheme));
        for (double tau : c.taus_for(scheme)) {
            const std::string series = std::string(scheme_name(scheme)) + "/tau=" + tau_label(tau);
            const std::size_t n_steps = steps_for(T, tau);
            const auto rec_steps = recorded_steps(n_steps, c.stride, true);
            const StepperConfig sc = c.stepper(tau);
            IntegrateOptions opts;
            opts.blowup_norm = c.blowup_norm;

            const auto paths = map_paths<ChargePath>(c.n_paths, c.threads, [&](std::size_t i) {
                ChargePath r;
                r.charge.assign(rec_steps.size(), nan);
                std::size_t slot = 0;
                Observer obs = [&](std::size_t n, const State& u) {
                    if (slot < rec_steps.size() && rec_steps[slot] == n) r.charge[slot++] = charge(u);
                };
                const PathSpec path{c.seed, i, cfg.K, tau, 0, n_steps};
                try {
                    const auto summary = integrate(scheme, cfg, ops, sc, u0, path, Level::coarse,
                                                   std::span<const Observer>(&obs, 1), opts);
                    if (summary.aborted) r.abort_time = static_cast<double>(summary.steps_taken) * tau;
                } catch (const StepFailure& e) {
                    if (scheme != Scheme::euler_maruyama) {
                        r.failure = "path " + std::to_string(i) + " step " + std::to_string(e.step()) + ": " + e.what();
                    } else {
                        r.abort_time = static_cast<double>(e.step()) * tau;
                    }
                }
                return r;
            });

            for (const auto& p : paths) {
                if (!p.failure.empty()) {
                    rec.failed = true;
                    rec.failure = series + ": " + p.failure;
                    return;
                }
            }
            std::vector<std::vector<double>> columns;
            columns.reserve(paths.size());
            std::size_t aborted = 0;
            double first_abort = std::numeric_limits<double>::infinity();
            for (const auto& p : paths) {
                columns.push_back(p.charge);
                if (!std::isnan(p.abort_time)) {
                    ++aborted;
                    first_abort = std::min(first_abort, p.abort_time);
                }
            }
            for (std::size_t s = 0; s < rec_steps.size(); ++s) {
                const auto [m, count] = column_mean(columns, s);
                if (count < 2) break;
                rec.add(series, static_cast<double>(rec_steps[s]) * tau, m.mean - 1.0, m.std_error);
            }
            if (aborted > 0) {
                rec.add(series + ":aborted", T, static_cast<double>(aborted));
                rec.notes.push_back(series + ": " + std::to_string(aborted) + " of " + std::to_string(c.n_paths) +
                                    " paths exceeded blowup_norm, first at t = " + format_number(first_abort));
            }
        }
    }
}

inline void run_ergodic(RunRecord& rec) {
    const ExperimentConfig& c = rec.config;
    const LatticeConfig cfg = c.lattice();
    const NoiseOperators ops = make_noise_operators(cfg);
    const double nan = std::numeric_limits<double>::quiet_NaN();

    for (Scheme scheme : c.schemes) {
        const double tau = c.taus_for(scheme).front();
        const StepperConfig sc = c.stepper(tau);
        std::vector<std::vector<std::size_t>> rec_steps;
        std::size_t n_max = 0;
        for (const auto& o : c.observables) {
            const std::size_t n = steps_for(c.T_for(o.name), tau);
            rec_steps.push_back(recorded_steps(n, c.stride, false));
            n_max = std::max(n_max, n);
        }
        // final[o][ic] = time average at that observable's horizon
        std::vector<std::vector<double>> final_avg(c.observables.size());

        for (int ic : c.initial) {
            const State u0 = initial_state(cfg, ic);
            // per path: for each observable the running averages at its recorded steps
            const auto paths = map_paths<std::vector<std::vector<double>>>(c.n_paths, c.threads, [&](std::size_t i) {
                std::vector<std::vector<double>> avg(c.observables.size());
                std::vector<double> sum(c.observables.size(), 0.0);
                std::vector<std::size_t> slot(c.observables.size(), 0);
                for (std::size_t o = 0; o < c.observables.size(); ++o) avg[o].assign(rec_steps[o].size(), nan);
                Observer obs = [&](std::size_t n, const State& u) {
                    if (n == 0) return;
                    for (std::size_t o = 0; o < c.observables.size(); ++o) {
                        if (slot[o] >= rec_steps[o].size()) continue;
                        sum[o] += evaluate(c.observables[o], u);
                        if (rec_steps[o][slot[o]] == n) avg[o][slot[o]++] = sum[o] / static_cast<double>(n);
                    }
                };
                const PathSpec path{c.seed, i, cfg.K, tau, 0, n_max};
                integrate(scheme, cfg, ops, sc, u0, path, Level::coarse, std::span<const Observer>(&obs, 1));
                return avg;
            });
            for (std::size_t o = 0; o < c.observables.size(); ++o) {
                const std::string series =
                    std::string(scheme_name(scheme)) + "/" + c.observables[o].name + "/ic=" + std::to_string(ic);
                std::vector<std::vector<double>> columns;
                for (const auto& p : paths) columns.push_back(p[o]);
                double last = nan;
                for (std::size_t s = 0; s < rec_steps[o].size(); ++s) {
                    const auto [m, count] = column_mean(columns, s);
                    rec.add(series, static_cast<double>(rec_steps[o][s]) * tau, m.mean, m.std_error);
                    last = m.mean;
                }
                final_avg[o].push_back(last);
            }
        }
        for (std::size_t o = 0; o < c.observables.size(); ++o) {
            const auto [lo, hi] = std::minmax_element(final_avg[o].begin(), final_avg[o].end());
            const double spread = *hi - *lo;
            const double T = c.T_for(c.observables[o].name);
            rec.add(std::string(scheme_name(scheme)) + "/" + c.observables[o].name + ":spread", T, spread);
            rec.summary += std::string(scheme_name(scheme)) + " " + c.observables[o].name +
                           ": spread of time averages at T = " + format_number(T) + " is " + format_number(spread) +
                           "\n";
        }
    }
}

inline void run_weak_order(RunRecord& rec) {
    const ExperimentConfig& c = rec.config;
    const LatticeConfig cfg = c.lattice();
    const NoiseOperators ops = make_noise_operators(cfg);
    const State u0 = initial_state(cfg, c.initial.front());

    for (Scheme scheme : c.schemes) {
        const double T = c.T_for(scheme_name(scheme));
        std::vector<std::vector<std::pair<double, double>>> points(c.observables.size());
        for (double tau : c.taus_for(scheme)) {
            WeakErrorSetup setup;
            setup.scheme = scheme;
            setup.stepper = c.stepper(tau);
            setup.refinement = c.refinement;
            setup.seed = c.seed;
            setup.n_paths = c.n_paths;
            setup.threads = c.threads;
            setup.blowup_norm = c.blowup_norm;
            const auto errs = weak_error(cfg, ops, setup, u0, T, c.observables);
            for (std::size_t o = 0; o < c.observables.size(); ++o) {
                const std::string series = std::string(scheme_name(scheme)) + "/" + c.observables[o].name;
                rec.add(series, tau, errs[o].error, errs[o].std_error);
                if (errs[o].paths_aborted > 0) rec.add(series + ":aborted", tau, static_cast<double>(errs[o].paths_aborted));
                points[o].emplace_back(tau, errs[o].error);
            }
        }
        for (std::size_t o = 0; o < c.observables.size(); ++o) {
            const std::string series = std::string(scheme_name(scheme)) + "/" + c.observables[o].name;
            try {
                const OrderFit fit = fit_order(points[o]);
                rec.add(series + ":slope", 0.0, fit.slope, fit.slope_stderr);
                rec.add(series + ":intercept", 0.0, fit.intercept, 0.0);
                rec.summary += series + ": fitted order " + format_number(fit.slope) + "\n";
            } catch (const InputError& e) {
                rec.notes.push_back(series + ": no order fit (" + std::string(e.what()) + ")");
            }
        }
    }
}

inline void run_longtime_weak(RunRecord& rec) {
    const ExperimentConfig& c = rec.config;
    const LatticeConfig cfg = c.lattice();
    const NoiseOperators ops = make_noise_operators(cfg);
    const State u0 = initial_state(cfg, c.initial.front());

    for (Scheme scheme : c.schemes) {
        const double tau = c.taus_for(scheme).front();
        std::vector<double> horizons = c.checkpoints;
        if (horizons.empty()) {
            for (int i = 1; i <= 10; ++i) horizons.push_back(c.T * i / 10.0);
        }
        std::vector<std::size_t> cps;
        std::vector<double> times;
        for (double t : horizons) {
            const std::size_t n = steps_for(t, tau);
            if (n == 0 || (!cps.empty() && n <= cps.back())) continue;
            cps.push_back(n);
            times.push_back(static_cast<double>(n) * tau);
        }
        WeakErrorSetup setup;
        setup.scheme = scheme;
        setup.stepper = c.stepper(tau);
        setup.refinement = c.refinement;
        setup.seed = c.seed;
        setup.n_paths = c.n_paths;
        setup.threads = c.threads;
        setup.blowup_norm = c.blowup_norm;
        const auto errs = weak_error_series(cfg, ops, setup, u0, cps, c.observables);
        for (std::size_t o = 0; o < c.observables.size(); ++o) {
            const std::string series = std::string(scheme_name(scheme)) + "/" + c.observables[o].name;
            std::vector<double> tx, ty, ts;
            for (std::size_t k = 0; k < cps.size(); ++k) {
                const WeakErrorEstimate& w = errs[k][o];
                rec.add(series, times[k], w.error, w.std_error);
                if (w.paths_aborted > 0) rec.add(series + ":aborted", times[k], static_cast<double>(w.paths_aborted));
                if (times[k] >= c.trend_from && std::isfinite(w.error)) {
                    tx.push_back(times[k]);
                    ty.push_back(w.error);
                    ts.push_back(w.std_error);
                }
            }
            if (tx.size() >= 3) {
                const LinearTrend trend = linear_trend(tx, ty, ts);
                rec.add(series + ":trend", 0.0, trend.slope, trend.slope_stderr);
                const bool rising = trend.slope > 2.0 * trend.slope_stderr;
                rec.summary += series + ": error trend " + format_number(trend.slope) + " +- " +
                               format_number(trend.slope_stderr) + (rising ? " (increasing)\n" : " (no significant increase)\n");
            } else {
                rec.notes.push_back(series + ": fewer than 3 finite horizons past trend_from, no trend fit");
                rec.summary += series + ": error unbounded (paths aborted)\n";
            }
        }
    }
}

inline void run_hormander(RunRecord& rec) {
    const ExperimentConfig& c = rec.config;
    const LatticeConfig cfg = c.lattice();
    const NoiseOperators ops = make_noise_operators(cfg);
    const int rank = hormander_rank(hormander_frame(cfg, ops));
    const int rank_drift = hormander_rank(lie_algebra_frame(cfg, ops));
    const auto full = static_cast<int>(2 * cfg.M);
    rec.add("rank", static_cast<double>(cfg.M), rank);
    rec.add("rank_with_drift", static_cast<double>(cfg.M), rank_drift);
    rec.add("full_rank", static_cast<double>(cfg.M), full);
    if (rank == full) {
        rec.summary += "rank " + std::to_string(rank) + " = 2M: PASS\n";
    } else {
        rec.summary += "rank " + std::to_string(rank) + " < 2M = " + std::to_string(full) + ": FAIL\n";
    }
    rec.summary += "with X_0: rank " + std::to_string(rank_drift) + "\n";
}

inline void run_symplectic(RunRecord& rec) {
    const ExperimentConfig& c = rec.config;
    const LatticeConfig cfg = c.lattice();
    const NoiseOperators ops = make_noise_operators(cfg);
    const State u0 = initial_state(cfg, c.initial.front());
    const double tau = c.taus_for(Scheme::midpoint).front();
    const StepperConfig sc = c.stepper(tau);
    const std::size_t n_steps = steps_for(c.T, tau);
    const auto rec_steps = recorded_steps(n_steps, c.stride, false);

    const auto paths = map_paths<SymplecticPath>(c.n_paths, c.threads, [&](std::size_t i) {
        SymplecticPath r{std::vector<double>(rec_steps.size(), 0.0), std::vector<double>(rec_steps.size(), 0.0)};
        // Tangent directions use a stream disjoint from the Brownian path of index i.
        NormalStream dir(c.seed ^ 0x7461'6e67'656e'7473ull, i);
        TangentState xi(cfg.M), eta(cfg.M);
        dir.fill(xi.dp);
        dir.fill(xi.dq);
        dir.fill(eta.dp);
        dir.fill(eta.dq);
        const double omega0 = wedge_sum(xi, eta);
        IncrementGenerator gen(PathSpec{c.seed, i, cfg.K, tau, 0, n_steps});
        Stepper stepper(Scheme::midpoint, cfg, ops, sc);
        std::vector<double> dbeta(cfg.K);
        State u = u0;
        std::size_t slot = 0;
        double res_max = 0.0;
        for (std::size_t n = 1; n <= n_steps; ++n) {
            gen.next_coarse(dbeta);
            StepRecord next = stepper.step(u, dbeta);
            const MidpointTangentMap map(cfg, ops, sc, u, next.state, dbeta);
            TangentState xi1 = map.apply(xi), eta1 = map.apply(eta);
            for (double v : multisymplectic_residual(tau, cfg.h, xi, xi1, eta, eta1)) {
                res_max = std::max(res_max, std::abs(v));
            }
            xi = std::move(xi1);
            eta = std::move(eta1);
            u = std::move(next.state);
            if (slot < rec_steps.size() && rec_steps[slot] == n) {
                r.wedge_drift[slot] = std::abs(wedge_sum(xi, eta) - omega0);
                r.residual[slot] = res_max;
                res_max = 0.0;
                ++slot;
            }
        }
        return r;
    });

    double worst_drift = 0.0, worst_residual = 0.0;
    for (std::size_t s = 0; s < rec_steps.size(); ++s) {
        double d = 0.0, res = 0.0;
        for (const auto& p : paths) {
            d = std::max(d, p.wedge_drift[s]);
            res = std::max(res, p.residual[s]);
        }
        const double t = static_cast<double>(rec_steps[s]) * tau;
        rec.add("wedge_drift", t, d);
        rec.add("residual_max", t, res);
        worst_drift = std::max(worst_drift, d);
        worst_residual = std::max(worst_residual, res);
    }
    rec.summary += "max |omega^n - omega^0| = " + format_number(worst_drift) +
                   ", max per-cell residual = " + format_number(worst_residual) + "\n";
}

} // namespace detail

/// Runs one experiment. Step failures yield a partial record with `failed` set.
inline RunRecord run(const ExperimentConfig& config) {
    RunRecord rec;
    rec.config = config;
    rec.seed = config.seed;
    const auto start = std::chrono::steady_clock::now();
    try {
        switch (config.experiment) {
            case Experiment::charge: detail::run_charge(rec); break;
            case Experiment::ergodic: detail::run_ergodic(rec); break;
            case Experiment::weak_order: detail::run_weak_order(rec); break;
            case Experiment::longtime_weak: detail::run_longtime_weak(rec); break;
            case Experiment::hormander: detail::run_hormander(rec); break;
            case Experiment::symplectic: detail::run_symplectic(rec); break;
        }
    } catch (const StepFailure& e) {
        rec.failed = true;
        rec.failure = "step " + std::to_string(e.step()) + ": " + e.what();
    } catch (const NumericalError& e) {
        rec.failed = true;
        rec.failure = e.what();
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

} // namespace snls::harness
