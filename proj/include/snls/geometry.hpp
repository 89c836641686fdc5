#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "snls/errors.hpp"
#include "snls/lattice.hpp"
#include "snls/schemes.hpp"

namespace snls {

// ---------------------------------------------------------------------------
// Real phase space z = (P; Q) in R^{2M}, with the Ito drift X_0 and the noise
// fields X_k written in block form.
// ---------------------------------------------------------------------------

inline Eigen::VectorXd stack(const State& u) {
    const auto m = static_cast<Eigen::Index>(u.size());
    Eigen::VectorXd z(2 * m);
    for (Eigen::Index j = 0; j < m; ++j) {
        z(j) = u.p[static_cast<std::size_t>(j)];
        z(m + j) = u.q[static_cast<std::size_t>(j)];
    }
    return z;
}

inline State unstack(const Eigen::VectorXd& z) {
    const Eigen::Index m = z.size() / 2;
    State u(static_cast<std::size_t>(m));
    for (Eigen::Index j = 0; j < m; ++j) {
        u.p[static_cast<std::size_t>(j)] = z(j);
        u.q[static_cast<std::size_t>(j)] = z(m + j);
    }
    return u;
}

/// Dense tridiag(1,-2,1) scaled by 1/h^2.
inline Eigen::MatrixXd scaled_laplacian_matrix(const LatticeConfig& cfg) {
    const auto m = static_cast<Eigen::Index>(cfg.M);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        a(j, j) = -2.0;
        if (j > 0) a(j, j - 1) = 1.0;
        if (j + 1 < m) a(j, j + 1) = 1.0;
    }
    return a / (cfg.h * cfg.h);
}

/// X_0(P,Q) = [[-Ehat, -A/h^2 - lambda F], [A/h^2 + lambda F, -Ehat]] (P; Q).
inline Eigen::VectorXd drift_field(const LatticeConfig& cfg, const NoiseOperators& ops, const Eigen::VectorXd& z) {
    const auto m = static_cast<Eigen::Index>(cfg.M);
    detail::require_length(static_cast<std::size_t>(z.size()), 2 * cfg.M, "drift_field");
    const Eigen::VectorXd p = z.head(m);
    const Eigen::VectorXd q = z.tail(m);
    const Eigen::MatrixXd a = scaled_laplacian_matrix(cfg);
    const Eigen::VectorXd f = p.cwiseAbs2() + q.cwiseAbs2();
    const Eigen::Map<const Eigen::VectorXd> ehat(ops.ehat.data(), m);
    Eigen::VectorXd x0(2 * m);
    x0.head(m) = -ehat.cwiseProduct(p) - a * q - cfg.lambda * f.cwiseProduct(q);
    x0.tail(m) = a * p + cfg.lambda * f.cwiseProduct(p) - ehat.cwiseProduct(q);
    return x0;
}

/// Analytic Jacobian of X_0, including the derivative of the cubic term.
inline Eigen::MatrixXd drift_jacobian(const LatticeConfig& cfg, const NoiseOperators& ops, const Eigen::VectorXd& z) {
    const auto m = static_cast<Eigen::Index>(cfg.M);
    detail::require_length(static_cast<std::size_t>(z.size()), 2 * cfg.M, "drift_jacobian");
    const Eigen::MatrixXd a = scaled_laplacian_matrix(cfg);
    const double lam = cfg.lambda;
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * m, 2 * m);
    jac.topRightCorner(m, m) = -a;
    jac.bottomLeftCorner(m, m) = a;
    for (Eigen::Index j = 0; j < m; ++j) {
        const double p = z(j);
        const double q = z(m + j);
        const double f = p * p + q * q;
        const double e = ops.ehat[static_cast<std::size_t>(j)];
        jac(j, j) = -e - 2.0 * lam * p * q;
        jac(j, m + j) += -lam * (f + 2.0 * q * q);
        jac(m + j, j) += lam * (f + 2.0 * p * p);
        jac(m + j, m + j) = -e + 2.0 * lam * p * q;
    }
    return jac;
}

/// Constant matrix of the linear noise field X_k (k is 1-based): sqrt(eta_k) [[0, -E_k], [E_k, 0]].
inline Eigen::MatrixXd noise_jacobian(const NoiseOperators& ops, std::size_t k) {
    if (k == 0 || k > ops.K) throw InputError("noise_jacobian: k out of range");
    const auto m = static_cast<Eigen::Index>(ops.M);
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * m, 2 * m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const double w = ops.weights[static_cast<std::size_t>(j) * ops.K + (k - 1)];
        jac(j, m + j) = -w;
        jac(m + j, j) = w;
    }
    return jac;
}

inline Eigen::VectorXd noise_field(const NoiseOperators& ops, std::size_t k, const Eigen::VectorXd& z) {
    detail::require_length(static_cast<std::size_t>(z.size()), 2 * ops.M, "noise_field");
    return noise_jacobian(ops, k) * z;
}

/// [X_0, X_k](z) = DX_k X_0(z) - DX_0(z) X_k(z).
inline Eigen::VectorXd lie_bracket(const LatticeConfig& cfg, const NoiseOperators& ops, std::size_t k,
                                   const Eigen::VectorXd& z) {
    const Eigen::MatrixXd dxk = noise_jacobian(ops, k);
    return dxk * drift_field(cfg, ops, z) - drift_jacobian(cfg, ops, z) * (dxk * z);
}

/// z* = (0, -(1/sqrt M)(1,...,1)).
inline Eigen::VectorXd hormander_point(const LatticeConfig& cfg) {
    const auto m = static_cast<Eigen::Index>(cfg.M);
    Eigen::VectorXd z = Eigen::VectorXd::Zero(2 * m);
    z.tail(m).setConstant(-1.0 / std::sqrt(static_cast<double>(cfg.M)));
    return z;
}

/// Columns X_1..X_M followed by [X_0,X_1]..[X_0,X_M], evaluated at z.
inline Eigen::MatrixXd hormander_frame(const LatticeConfig& cfg, const NoiseOperators& ops, const Eigen::VectorXd& z) {
    if (cfg.M > cfg.K) throw InputError("hormander_frame: requires M <= K");
    const auto m = static_cast<Eigen::Index>(cfg.M);
    Eigen::MatrixXd frame(2 * m, 2 * m);
    for (std::size_t k = 1; k <= cfg.M; ++k) {
        const auto c = static_cast<Eigen::Index>(k - 1);
        frame.col(c) = noise_field(ops, k, z);
        frame.col(m + c) = lie_bracket(cfg, ops, k, z);
    }
    return frame;
}

inline Eigen::MatrixXd hormander_frame(const LatticeConfig& cfg, const NoiseOperators& ops) {
    return hormander_frame(cfg, ops, hormander_point(cfg));
}

// The noise fields and their brackets with X_0 are all tangent to the charge
// sphere, so the frame above has rank at most 2M-1 there. The normal
// direction only enters through X_0 itself (its -Ehat z part), hence this
// extended frame with X_0(z) appended as a last column.
inline Eigen::MatrixXd lie_algebra_frame(const LatticeConfig& cfg, const NoiseOperators& ops,
                                         const Eigen::VectorXd& z) {
    const Eigen::MatrixXd base = hormander_frame(cfg, ops, z);
    Eigen::MatrixXd frame(base.rows(), base.cols() + 1);
    frame.leftCols(base.cols()) = base;
    frame.col(base.cols()) = drift_field(cfg, ops, z);
    return frame;
}

inline Eigen::MatrixXd lie_algebra_frame(const LatticeConfig& cfg, const NoiseOperators& ops) {
    return lie_algebra_frame(cfg, ops, hormander_point(cfg));
}

/// Numerical rank by column-pivoted Householder QR; a pivot counts when
/// |R_ii| > 1e-10 * (largest column norm).
inline int hormander_rank(const Eigen::MatrixXd& frame, double rel_threshold = 1e-10) {
    if (frame.cols() == 0) return 0;
    const double largest = frame.colwise().norm().maxCoeff();
    if (largest == 0.0) return 0;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(frame);
    const Eigen::MatrixXd& r = qr.matrixQR();
    const Eigen::Index n = std::min(r.rows(), r.cols());
    int rank = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(r(i, i)) > rel_threshold * largest) ++rank;
    }
    return rank;
}

// ---------------------------------------------------------------------------
// Tangent (variational) integration and wedge forms.
// ---------------------------------------------------------------------------

struct TangentState {
    std::vector<double> dp;
    std::vector<double> dq;

    TangentState() = default;
    explicit TangentState(std::size_t m) : dp(m, 0.0), dq(m, 0.0) {}
    TangentState(std::vector<double> p, std::vector<double> q) : dp(std::move(p)), dq(std::move(q)) {
        detail::require_length(dq.size(), dp.size(), "TangentState");
    }

    std::size_t size() const noexcept { return dp.size(); }
};

/// Linearization of one midpoint step about the midpoint of (base, base_next):
/// xi' = xi + L (xi + xi')/2 with L xi = i (tau/h^2) A xi + i zeta xi + i lambda tau (2|m|^2 xi + m^2 conj(xi)).
class MidpointTangentMap {
public:
    MidpointTangentMap(const LatticeConfig& cfg, const NoiseOperators& ops, const StepperConfig& sc, const State& base,
                       const State& base_next, std::span<const double> dbeta) {
        detail::require_length(base.size(), cfg.M, "tangent base");
        detail::require_length(base_next.size(), cfg.M, "tangent base_next");
        const auto m = static_cast<Eigen::Index>(cfg.M);
        const std::vector<double> zeta = diffusion_vector(cfg, ops, dbeta);
        const double lt = cfg.lambda * sc.tau;
        Eigen::MatrixXd l = Eigen::MatrixXd::Zero(2 * m, 2 * m);
        const Eigen::MatrixXd a = sc.tau * scaled_laplacian_matrix(cfg);
        l.topRightCorner(m, m) = -a;
        l.bottomLeftCorner(m, m) = a;
        for (Eigen::Index j = 0; j < m; ++j) {
            const auto s = static_cast<std::size_t>(j);
            const double mp = 0.5 * (base.p[s] + base_next.p[s]);
            const double mq = 0.5 * (base.q[s] + base_next.q[s]);
            const double rho = mp * mp + mq * mq;
            const double alpha = mp * mp - mq * mq;  // Re m^2
            const double beta = 2.0 * mp * mq;       // Im m^2
            l(j, j) = -lt * beta;
            l(j, m + j) += -zeta[s] - lt * (2.0 * rho - alpha);
            l(m + j, j) += zeta[s] + lt * (2.0 * rho + alpha);
            l(m + j, m + j) = lt * beta;
        }
        const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(2 * m, 2 * m);
        lu_.compute(id - 0.5 * l);
        if (!(lu_.rcond() > 1e-14)) throw NumericalError("tangent step: singular linearization");
        explicit_part_ = id + 0.5 * l;
    }

    TangentState apply(const TangentState& xi) const {
        const auto m = static_cast<Eigen::Index>(xi.size());
        detail::require_length(2 * xi.size(), static_cast<std::size_t>(explicit_part_.rows()), "tangent apply");
        Eigen::VectorXd v(2 * m);
        for (Eigen::Index j = 0; j < m; ++j) {
            v(j) = xi.dp[static_cast<std::size_t>(j)];
            v(m + j) = xi.dq[static_cast<std::size_t>(j)];
        }
        const Eigen::VectorXd w = lu_.solve(explicit_part_ * v);
        TangentState out(xi.size());
        for (Eigen::Index j = 0; j < m; ++j) {
            out.dp[static_cast<std::size_t>(j)] = w(j);
            out.dq[static_cast<std::size_t>(j)] = w(m + j);
        }
        return out;
    }

private:
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
    Eigen::MatrixXd explicit_part_;
};

inline TangentState tangent_step_midpoint(const LatticeConfig& cfg, const NoiseOperators& ops, const StepperConfig& sc,
                                          const State& base, const State& base_next, std::span<const double> dbeta,
                                          const TangentState& xi) {
    return MidpointTangentMap(cfg, ops, sc, base, base_next, dbeta).apply(xi);
}

/// omega(xi, eta) = sum_j (xi_p eta_q - xi_q eta_p).
inline double wedge_sum(const TangentState& xi, const TangentState& eta) {
    detail::require_length(eta.size(), xi.size(), "wedge_sum");
    double s = 0.0;
    for (std::size_t j = 0; j < xi.size(); ++j) s += xi.dp[j] * eta.dq[j] - xi.dq[j] * eta.dp[j];
    return s;
}

/// Per-cell residual of the discrete multi-symplectic conservation law over one step,
/// for the tangent pair (xi, eta) at steps n and n+1. Zero Dirichlet padding at j = 0, M+1.
inline std::vector<double> multisymplectic_residual(double tau, double h, const TangentState& xi_n,
                                                    const TangentState& xi_next, const TangentState& eta_n,
                                                    const TangentState& eta_next) {
    const std::size_t m = xi_n.size();
    detail::require_length(xi_next.size(), m, "multisymplectic_residual");
    detail::require_length(eta_n.size(), m, "multisymplectic_residual");
    detail::require_length(eta_next.size(), m, "multisymplectic_residual");

    // Padded midpoints, index 0..m+1.
    auto midpoint = [m](const std::vector<double>& a, const std::vector<double>& b) {
        std::vector<double> out(m + 2, 0.0);
        for (std::size_t j = 0; j < m; ++j) out[j + 1] = 0.5 * (a[j] + b[j]);
        return out;
    };
    const auto xp = midpoint(xi_n.dp, xi_next.dp);
    const auto xq = midpoint(xi_n.dq, xi_next.dq);
    const auto ep = midpoint(eta_n.dp, eta_next.dp);
    const auto eq = midpoint(eta_n.dq, eta_next.dq);

    // Backward differences v_j = (p_j - p_{j-1})/h for j = 1..m+1.
    auto diff = [m, h](const std::vector<double>& a) {
        std::vector<double> out(m + 2, 0.0);
        for (std::size_t j = 1; j <= m + 1; ++j) out[j] = (a[j] - a[j - 1]) / h;
        return out;
    };
    const auto xv = diff(xp), xw = diff(xq), ev = diff(ep), ew = diff(eq);

    // a_i wedge b_l on (xi, eta)
    auto wedge = [](double xa, double xb, double ea, double eb) { return xa * eb - ea * xb; };

    std::vector<double> r(m);
    for (std::size_t j = 1; j <= m; ++j) {
        const std::size_t s = j - 1;
        const double omega_next = wedge(xi_next.dp[s], xi_next.dq[s], eta_next.dp[s], eta_next.dq[s]);
        const double omega_now = wedge(xi_n.dp[s], xi_n.dq[s], eta_n.dp[s], eta_n.dq[s]);
        const double flux_p = wedge(xp[j], xv[j + 1], ep[j], ev[j + 1]) - wedge(xp[j - 1], xv[j], ep[j - 1], ev[j]);
        const double flux_q = wedge(xq[j], xw[j + 1], eq[j], ew[j + 1]) - wedge(xq[j - 1], xw[j], eq[j - 1], ew[j]);
        r[s] = (omega_next - omega_now) / tau - flux_p / h - flux_q / h;
    }
    return r;
}

} // namespace snls
