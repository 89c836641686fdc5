#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "snls/errors.hpp"

namespace snls {

/// Thomas factorization of diag(d) + off * (sub + super) with a constant off-diagonal.
/// Factor once, solve many right-hand sides in O(M).
class TridiagonalFactorization {
public:
    using value_type = std::complex<double>;

    TridiagonalFactorization() = default;

    TridiagonalFactorization(std::span<const value_type> diag, value_type off) { factor(diag, off); }

    void factor(std::span<const value_type> diag, value_type off) {
        const std::size_t m = diag.size();
        if (m == 0) throw InputError("tridiagonal solve: empty system");
        off_ = off;
        upper_.resize(m);
        inv_pivot_.resize(m);
        value_type c_prev{0.0, 0.0};
        for (std::size_t j = 0; j < m; ++j) {
            const value_type pivot = j == 0 ? diag[0] : diag[j] - off * c_prev;
            if (pivot == value_type{0.0, 0.0} || !std::isfinite(pivot.real()) || !std::isfinite(pivot.imag())) {
                throw NumericalError("tridiagonal solve: zero or non-finite pivot at row " + std::to_string(j));
            }
            inv_pivot_[j] = 1.0 / pivot;
            c_prev = off * inv_pivot_[j];
            upper_[j] = c_prev;
        }
    }

    std::size_t size() const noexcept { return upper_.size(); }

    /// Solves in place: x holds rhs on entry and the solution on exit.
    void solve_in_place(std::span<value_type> x) const {
        const std::size_t m = size();
        detail::require_length(x.size(), m, "tridiagonal solve rhs");
        x[0] *= inv_pivot_[0];
        for (std::size_t j = 1; j < m; ++j) x[j] = (x[j] - off_ * x[j - 1]) * inv_pivot_[j];
        for (std::size_t j = m - 1; j-- > 0;) x[j] -= upper_[j] * x[j + 1];
    }

private:
    value_type off_{0.0, 0.0};
    std::vector<value_type> upper_;
    std::vector<value_type> inv_pivot_;
};

/// Solves (diag(d) + off * (sub + super)) x = rhs.
inline std::vector<std::complex<double>> solve_tridiag_plus_diag(std::span<const std::complex<double>> diag,
                                                                 std::complex<double> off,
                                                                 std::span<const std::complex<double>> rhs) {
    detail::require_length(rhs.size(), diag.size(), "solve_tridiag_plus_diag");
    TridiagonalFactorization lu(diag, off);
    std::vector<std::complex<double>> x(rhs.begin(), rhs.end());
    lu.solve_in_place(x);
    return x;
}

/// Diagonal and off-diagonal of I - (i/2) [ (tau/h^2) A + diag(zeta) ], the midpoint system matrix.
struct MidpointSystem {
    std::vector<std::complex<double>> diag;
    std::complex<double> off;
};

inline MidpointSystem midpoint_system(double tau_over_h2, std::span<const double> zeta) {
    MidpointSystem s;
    s.diag.resize(zeta.size());
    const std::complex<double> half_i{0.0, 0.5};
    for (std::size_t j = 0; j < zeta.size(); ++j) {
        s.diag[j] = 1.0 - half_i * (-2.0 * tau_over_h2 + zeta[j]);
    }
    s.off = -half_i * tau_over_h2;
    return s;
}

} // namespace snls
