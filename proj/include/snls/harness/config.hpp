#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "snls/errors.hpp"
#include "snls/estimators.hpp"
#include "snls/lattice.hpp"
#include "snls/schemes.hpp"

namespace snls::harness {

enum class Experiment { charge, ergodic, weak_order, longtime_weak, hormander, symplectic };

struct ExperimentInfo {
    Experiment id;
    std::string_view name;
    std::string_view summary;
};

inline constexpr ExperimentInfo experiments[] = {
    {Experiment::charge, "charge", "E||U^n||^2 - 1 time series per scheme and step size"},
    {Experiment::ergodic, "ergodic", "running time averages of observables from several initial states"},
    {Experiment::weak_order, "weak_order", "coupled weak error against a refined midpoint reference, with order fit"},
    {Experiment::longtime_weak, "longtime_weak", "coupled weak error at increasing horizons, with trend fit"},
    {Experiment::hormander, "hormander", "numerical rank of noise fields and first brackets at z*"},
    {Experiment::symplectic, "symplectic", "global wedge drift and per-cell multi-symplectic residual"},
};

inline std::string_view experiment_name(Experiment e) {
    for (const auto& info : experiments) {
        if (info.id == e) return info.name;
    }
    return "unknown";
}

/// Validated experiment description. Keys of the text format mirror the field names.
struct ExperimentConfig {
    Experiment experiment = Experiment::charge;
    std::vector<Scheme> schemes{Scheme::midpoint};
    std::size_t M = 19;
    std::size_t K = 30;
    double lambda = 1.0;
    std::string eta_rule = "power:4";
    std::vector<double> eta;  // resolved from eta_rule
    std::vector<double> taus;
    std::map<std::string, std::vector<double>> tau_by;  // tau.<scheme>
    double T = 0.0;
    std::map<std::string, double> T_by;  // T.<scheme> or T.<observable>
    std::size_t n_paths = 500;
    std::uint64_t seed = 1;
    std::vector<Observable> observables{builtin_observable(ObservableId::pnorm3)};
    std::vector<int> initial{2};
    unsigned refinement = 4;
    double fp_tol = 1e-12;
    int fp_max_iters = 100;
    double blowup_norm = 1e3;
    std::size_t stride = 1;
    std::vector<double> checkpoints;  // longtime_weak horizons; default T/10, 2T/10, ..., T
    double trend_from = 0.0;          // longtime_weak: first horizon used in the trend fit
    unsigned threads = 1;
    std::string output;

    LatticeConfig lattice() const { return make_lattice(M, K, lambda, eta); }

    StepperConfig stepper(double tau) const { return StepperConfig{tau, fp_tol, fp_max_iters}; }

    const std::vector<double>& taus_for(Scheme s) const {
        const auto it = tau_by.find(std::string(scheme_name(s)));
        return it == tau_by.end() ? taus : it->second;
    }

    double T_for(std::string_view name) const {
        const auto it = T_by.find(std::string(name));
        return it == T_by.end() ? T : it->second;
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const auto item = trim(s.substr(start, comma == std::string_view::npos ? s.size() - start : comma - start));
        if (!item.empty()) out.push_back(item);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline double parse_plain_double(std::string_view key, std::string_view s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ConfigError(std::string(key), "expected a number, got '" + std::string(s) + "'");
    }
    return v;
}

/// Accepts decimal literals and powers written as base^exponent (e.g. 2^-7).
inline double parse_number(std::string_view key, std::string_view s) {
    const auto caret = s.find('^');
    if (caret == std::string_view::npos) return parse_plain_double(key, s);
    const double base = parse_plain_double(key, trim(s.substr(0, caret)));
    const double expo = parse_plain_double(key, trim(s.substr(caret + 1)));
    return std::pow(base, expo);
}

inline std::vector<double> parse_number_list(std::string_view key, std::string_view s) {
    std::vector<double> out;
    for (const auto& item : split_list(s)) out.push_back(parse_number(key, item));
    if (out.empty()) throw ConfigError(std::string(key), "expected a non-empty list");
    return out;
}

inline std::uint64_t parse_uint(std::string_view key, std::string_view s) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ConfigError(std::string(key), "expected a non-negative integer, got '" + std::string(s) + "'");
    }
    return v;
}

inline bool is_integer_multiple(double T, double tau) {
    const double ratio = T / tau;
    return ratio >= 1.0 - 1e-12 && std::abs(ratio - std::round(ratio)) <= 1e-9 * ratio;
}

inline std::vector<double> resolve_eta(const std::string& rule, std::size_t K) {
    if (rule.rfind("power:", 0) == 0) {
        const double p = parse_number("eta", trim(std::string_view(rule).substr(6)));
        return power_law_eta(K, p);
    }
    auto values = parse_number_list("eta", rule);
    if (values.size() != K) throw ConfigError("eta", "explicit list must have K entries");
    return values;
}

inline std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline std::string join_numbers(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_number(v[i]);
    return s;
}

} // namespace detail

/// Parses the flat `key = value` format; `#` starts a comment. Defaults are
/// filled in and every invariant is checked; errors name the offending key.
inline ExperimentConfig parse_config(std::string_view text) {
    using detail::trim;
    std::map<std::string, std::string> kv;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno), "expected 'key = value'");
        }
        const std::string key = trim(std::string_view(t).substr(0, eq));
        const std::string value = trim(std::string_view(t).substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno), "empty key");
        if (value.empty()) throw ConfigError(key, "empty value");
        if (!kv.emplace(key, value).second) throw ConfigError(key, "duplicate key");
    }

    ExperimentConfig c;
    std::map<std::string, std::string> scoped_tau, scoped_T;
    bool have_M = false, have_h = false, have_tau = false, have_T = false;
    double h_given = 0.0;

    for (const auto& [key, value] : kv) {
        if (key == "experiment") {
            bool found = false;
            for (const auto& info : experiments) {
                if (info.name == value) {
                    c.experiment = info.id;
                    found = true;
                }
            }
            if (!found) throw ConfigError(key, "unknown experiment '" + value + "'");
        } else if (key == "schemes" || key == "scheme") {
            c.schemes.clear();
            for (const auto& s : detail::split_list(value)) {
                try {
                    c.schemes.push_back(parse_scheme(s));
                } catch (const InputError& e) {
                    throw ConfigError(key, e.what());
                }
            }
            if (c.schemes.empty()) throw ConfigError(key, "expected at least one scheme");
        } else if (key == "M") {
            c.M = detail::parse_uint(key, value);
            have_M = true;
        } else if (key == "h") {
            h_given = detail::parse_number(key, value);
            have_h = true;
        } else if (key == "K") {
            c.K = detail::parse_uint(key, value);
        } else if (key == "lambda") {
            c.lambda = detail::parse_number(key, value);
        } else if (key == "eta") {
            c.eta_rule = value;
        } else if (key == "tau") {
            c.taus = detail::parse_number_list(key, value);
            have_tau = true;
        } else if (key.rfind("tau.", 0) == 0) {
            scoped_tau[key.substr(4)] = value;
        } else if (key == "T") {
            c.T = detail::parse_number(key, value);
            have_T = true;
        } else if (key.rfind("T.", 0) == 0) {
            scoped_T[key.substr(2)] = value;
        } else if (key == "n_paths") {
            c.n_paths = detail::parse_uint(key, value);
        } else if (key == "seed") {
            c.seed = detail::parse_uint(key, value);
        } else if (key == "observables" || key == "observable") {
            c.observables.clear();
            for (const auto& s : detail::split_list(value)) {
                try {
                    c.observables.push_back(parse_observable(s));
                } catch (const InputError& e) {
                    throw ConfigError(key, e.what());
                }
            }
            if (c.observables.empty()) throw ConfigError(key, "expected at least one observable");
        } else if (key == "initial") {
            c.initial.clear();
            for (const auto& s : detail::split_list(value)) {
                const auto id = detail::parse_uint(key, s);
                if (id < 1 || id > 5) throw ConfigError(key, "initial condition ids are 1..5");
                c.initial.push_back(static_cast<int>(id));
            }
            if (c.initial.empty()) throw ConfigError(key, "expected at least one id");
        } else if (key == "refinement") {
            c.refinement = static_cast<unsigned>(detail::parse_uint(key, value));
        } else if (key == "fp_tol") {
            c.fp_tol = detail::parse_number(key, value);
        } else if (key == "fp_max_iters") {
            c.fp_max_iters = static_cast<int>(detail::parse_uint(key, value));
        } else if (key == "blowup_norm") {
            c.blowup_norm = detail::parse_number(key, value);
        } else if (key == "stride") {
            c.stride = detail::parse_uint(key, value);
        } else if (key == "checkpoints") {
            c.checkpoints = detail::parse_number_list(key, value);
        } else if (key == "trend_from") {
            c.trend_from = detail::parse_number(key, value);
        } else if (key == "threads") {
            c.threads = static_cast<unsigned>(detail::parse_uint(key, value));
        } else if (key == "output") {
            c.output = value;
        } else {
            throw ConfigError(key, "unknown key");
        }
    }

    if (!kv.contains("experiment")) throw ConfigError("experiment", "missing required key");

    // Grid: M and h must agree when both are given.
    if (have_h) {
        if (!(h_given > 0.0 && h_given < 1.0)) throw ConfigError("h", "must lie in (0, 1)");
        const double m_real = 1.0 / h_given - 1.0;
        const auto m_from_h = static_cast<std::size_t>(std::llround(m_real));
        if (m_from_h == 0 || std::abs(m_real - static_cast<double>(m_from_h)) > 1e-9 * m_real) {
            throw ConfigError("h", "1/h - 1 must be a positive integer");
        }
        if (have_M && m_from_h != c.M) throw ConfigError("h", "inconsistent with M (h must equal 1/(M+1))");
        c.M = m_from_h;
    }
    if (c.M == 0) throw ConfigError("M", "must be positive");
    if (c.K == 0) throw ConfigError("K", "must be positive");
    if (c.M > c.K) throw ConfigError("K", "requires M <= K");
    if (c.lambda != 1.0 && c.lambda != -1.0) throw ConfigError("lambda", "must be 1 or -1");
    c.eta = detail::resolve_eta(c.eta_rule, c.K);
    for (double e : c.eta) {
        if (!(e > 0.0) || !std::isfinite(e)) throw ConfigError("eta", "values must be positive and finite");
    }
    if (!(c.fp_tol > 0.0)) throw ConfigError("fp_tol", "must be positive");
    if (c.fp_max_iters <= 0) throw ConfigError("fp_max_iters", "must be positive");
    if (!(c.blowup_norm > 1.0)) throw ConfigError("blowup_norm", "must exceed 1");
    if (c.stride == 0) throw ConfigError("stride", "must be positive");
    if (c.refinement > 20) throw ConfigError("refinement", "must be at most 20");
    (void)have_M;

    for (const auto& [name, value] : scoped_tau) {
        const std::string key = "tau." + name;
        Scheme s;
        try {
            s = parse_scheme(name);
        } catch (const InputError&) {
            throw ConfigError(key, "'" + name + "' is not a scheme");
        }
        c.tau_by[std::string(scheme_name(s))] = detail::parse_number_list(key, value);
    }
    for (const auto& [name, value] : scoped_T) {
        const std::string key = "T." + name;
        std::string canonical = name;
        try {
            canonical = std::string(scheme_name(parse_scheme(name)));
        } catch (const InputError&) {
            try {
                canonical = parse_observable(name).name;
            } catch (const InputError&) {
                throw ConfigError(key, "'" + name + "' is neither a scheme nor an observable");
            }
        }
        c.T_by[canonical] = detail::parse_number(key, value);
    }

    if (c.experiment == Experiment::hormander) return c;

    if (!have_tau && c.tau_by.empty()) throw ConfigError("tau", "missing required key");
    if (!have_T) throw ConfigError("T", "missing required key");
    if (c.n_paths < 2) throw ConfigError("n_paths", "must be at least 2");

    auto check_steps = [](const std::string& key, const std::vector<double>& taus) {
        for (double tau : taus) {
            if (!(tau > 0.0 && tau < 1.0)) throw ConfigError(key, "step sizes must lie in (0, 1)");
        }
    };
    check_steps("tau", c.taus);
    for (const auto& [name, taus] : c.tau_by) check_steps("tau." + name, taus);
    if (!(c.T > 0.0)) throw ConfigError("T", "must be positive");
    for (const auto& [name, T] : c.T_by) {
        if (!(T > 0.0)) throw ConfigError("T." + name, "must be positive");
    }
    for (Scheme s : c.schemes) {
        const auto& taus = c.taus_for(s);
        const std::string tau_key = c.tau_by.contains(std::string(scheme_name(s)))
                                        ? "tau." + std::string(scheme_name(s))
                                        : "tau";
        if (taus.empty()) throw ConfigError(tau_key, "no step size for scheme " + std::string(scheme_name(s)));
        std::vector<std::string> horizons;
        if (c.experiment == Experiment::ergodic) {
            for (const auto& o : c.observables) horizons.push_back(o.name);
        } else {
            horizons.emplace_back(scheme_name(s));
        }
        for (double tau : taus) {
            for (const auto& name : horizons) {
                const double T = c.T_for(name);
                if (!detail::is_integer_multiple(T, tau)) {
                    const std::string key = c.T_by.contains(name) ? "T." + name : "T";
                    throw ConfigError(key, "T/tau must be an integer for tau = " + detail::format_number(tau));
                }
            }
            for (double t : c.checkpoints) {
                if (!detail::is_integer_multiple(t, tau)) {
                    throw ConfigError("checkpoints", "each checkpoint must be an integer multiple of tau");
                }
            }
        }
    }
    for (std::size_t i = 0; i < c.checkpoints.size(); ++i) {
        if (c.checkpoints[i] > c.T) throw ConfigError("checkpoints", "must not exceed T");
        if (i > 0 && c.checkpoints[i] <= c.checkpoints[i - 1]) throw ConfigError("checkpoints", "must increase");
    }
    if (c.experiment == Experiment::weak_order) {
        std::size_t n = 0;
        for (Scheme s : c.schemes) n = std::max(n, c.taus_for(s).size());
        if (n < 3) throw ConfigError("tau", "weak_order needs at least 3 step sizes");
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// Normalized key/value listing used for CSV headers and `verify`. Excludes
/// settings that must not change results (threads, output path).
inline std::vector<std::pair<std::string, std::string>> echo(const ExperimentConfig& c) {
    using detail::format_number;
    std::vector<std::pair<std::string, std::string>> out;
    out.emplace_back("experiment", std::string(experiment_name(c.experiment)));
    std::string schemes;
    for (std::size_t i = 0; i < c.schemes.size(); ++i) schemes += (i ? ", " : "") + std::string(scheme_name(c.schemes[i]));
    out.emplace_back("schemes", schemes);
    out.emplace_back("M", std::to_string(c.M));
    out.emplace_back("h", format_number(1.0 / static_cast<double>(c.M + 1)));
    out.emplace_back("K", std::to_string(c.K));
    out.emplace_back("lambda", format_number(c.lambda));
    out.emplace_back("eta", c.eta_rule);
    if (c.experiment == Experiment::hormander) return out;
    if (!c.taus.empty()) out.emplace_back("tau", detail::join_numbers(c.taus));
    for (const auto& [name, taus] : c.tau_by) out.emplace_back("tau." + name, detail::join_numbers(taus));
    out.emplace_back("T", format_number(c.T));
    for (const auto& [name, T] : c.T_by) out.emplace_back("T." + name, format_number(T));
    out.emplace_back("n_paths", std::to_string(c.n_paths));
    out.emplace_back("seed", std::to_string(c.seed));
    std::string obs;
    for (std::size_t i = 0; i < c.observables.size(); ++i) obs += (i ? ", " : "") + c.observables[i].name;
    out.emplace_back("observables", obs);
    std::string ini;
    for (std::size_t i = 0; i < c.initial.size(); ++i) ini += (i ? ", " : "") + std::to_string(c.initial[i]);
    out.emplace_back("initial", ini);
    out.emplace_back("refinement", std::to_string(c.refinement));
    out.emplace_back("fp_tol", format_number(c.fp_tol));
    out.emplace_back("fp_max_iters", std::to_string(c.fp_max_iters));
    out.emplace_back("blowup_norm", format_number(c.blowup_norm));
    out.emplace_back("stride", std::to_string(c.stride));
    if (!c.checkpoints.empty()) out.emplace_back("checkpoints", detail::join_numbers(c.checkpoints));
    out.emplace_back("trend_from", format_number(c.trend_from));
    return out;
}

} // namespace snls::harness
