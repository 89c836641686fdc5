#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace snls {

/// Bad argument to a library call (length mismatch, out-of-domain value).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Zero pivot, singular system, NaN/Inf or overflow in a numerical kernel.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A time step that did not produce a valid next state.
class StepFailure : public NumericalError {
public:
    StepFailure(const std::string& what, double residual, int iterations)
        : NumericalError(what), residual_(residual), iterations_(iterations) {}

    double residual() const noexcept { return residual_; }
    int iterations() const noexcept { return iterations_; }

    /// Step index within a trajectory, filled in by the integrator.
    std::size_t step() const noexcept { return step_; }
    void set_step(std::size_t n) noexcept { step_ = n; }

private:
    double residual_;
    int iterations_;
    std::size_t step_ = 0;
};

/// Invalid experiment configuration; `key()` names the offending field.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string& what)
        : std::runtime_error(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

namespace detail {

inline void require_length(std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
        throw InputError(std::string(what) + ": expected length " + std::to_string(want) +
                         ", got " + std::to_string(got));
    }
}

} // namespace detail

} // namespace snls
