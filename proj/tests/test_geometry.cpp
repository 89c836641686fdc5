#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "snls/geometry.hpp"
#include "snls/noise.hpp"
#include "snls/schemes.hpp"

using namespace snls;

namespace {

Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n) {
    std::normal_distribution<double> d;
    Eigen::VectorXd v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

TangentState random_tangent(std::mt19937_64& rng, std::size_t m) {
    const Eigen::VectorXd v = random_vector(rng, static_cast<Eigen::Index>(2 * m));
    const State s = unstack(v);
    return TangentState(s.p, s.q);
}

State random_unit_state(std::mt19937_64& rng, std::size_t m) {
    const Eigen::VectorXd v = random_vector(rng, static_cast<Eigen::Index>(2 * m)).normalized();
    return unstack(v);
}

template <typename F>
Eigen::MatrixXd fd_jacobian(F&& f, const Eigen::VectorXd& z, double eps) {
    const Eigen::Index n = z.size();
    Eigen::MatrixXd j(f(z).size(), n);
    for (Eigen::Index c = 0; c < n; ++c) {
        Eigen::VectorXd zp = z, zm = z;
        zp(c) += eps;
        zm(c) -= eps;
        j.col(c) = (f(zp) - f(zm)) / (2 * eps);
    }
    return j;
}

double rel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

Eigen::VectorXd tangent_vec(const TangentState& t) { return stack(State(t.dp, t.dq)); }

} // namespace

TEST(Fields, StackRoundTrip) {
    std::mt19937_64 rng(1);
    const State u = random_unit_state(rng, 7);
    EXPECT_EQ(unstack(stack(u)), u);
}

TEST(Fields, NoiseFieldsAreLinear) {
    const auto cfg = make_lattice(9, 30);
    const auto ops = make_noise_operators(cfg);
    std::mt19937_64 rng(2);
    const Eigen::VectorXd z = random_vector(rng, 18);
    for (std::size_t k = 1; k <= 30; ++k) {
        EXPECT_LE((noise_field(ops, k, 2.5 * z) - 2.5 * noise_field(ops, k, z)).norm(), 1e-14);
    }
}

TEST(Fields, DriftJacobianMatchesFiniteDifferences) {
    const auto cfg = make_lattice(9, 30);
    const auto ops = make_noise_operators(cfg);
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const Eigen::VectorXd z = random_vector(rng, 18).normalized();
        const Eigen::MatrixXd fd = fd_jacobian([&](const Eigen::VectorXd& x) { return drift_field(cfg, ops, x); }, z, 1e-6);
        const Eigen::MatrixXd an = drift_jacobian(cfg, ops, z);
        EXPECT_LE((fd - an).norm() / an.norm(), 1e-8);
    }
}

TEST(Hormander, NoiseFieldsAtBasePoint) {
    const auto cfg = make_lattice(19, 30);
    const auto ops = make_noise_operators(cfg);
    const Eigen::VectorXd z = hormander_point(cfg);
    for (std::size_t k = 1; k <= 19; ++k) {
        const Eigen::VectorXd x = noise_field(ops, k, z);
        for (std::size_t j = 0; j < 19; ++j) {
            const double expect = std::sqrt(cfg.eta[k - 1] / 19.0) * eigenfunction(k, cfg.x(j + 1));
            EXPECT_NEAR(x(static_cast<Eigen::Index>(j)), expect, 1e-15);
            EXPECT_EQ(x(static_cast<Eigen::Index>(19 + j)), 0.0);
        }
    }
}

// The closed form displayed for the bracket at z* is the DX_0 X_k part alone:
// top -sqrt(eta_k/M) Ehat e_k, bottom sqrt(eta_k/M) (A/h^2 + I/M) e_k.
TEST(Hormander, DisplayedFormEqualsDriftJacobianTerm) {
    const auto cfg = make_lattice(19, 30);
    const auto ops = make_noise_operators(cfg);
    const Eigen::VectorXd z = hormander_point(cfg);
    const Eigen::MatrixXd dx0 = drift_jacobian(cfg, ops, z);
    const Eigen::MatrixXd a = scaled_laplacian_matrix(cfg);  // A / h^2
    for (std::size_t k = 1; k <= 19; ++k) {
        Eigen::VectorXd ek(19);
        for (Eigen::Index j = 0; j < 19; ++j) ek(j) = eigenfunction(k, cfg.x(static_cast<std::size_t>(j) + 1));
        const double c = std::sqrt(cfg.eta[k - 1] / 19.0);
        Eigen::VectorXd expect(38);
        expect.head(19) = -c * Eigen::Map<const Eigen::VectorXd>(ops.ehat.data(), 19).cwiseProduct(ek);
        expect.tail(19) = c * (a * ek + ek / 19.0);
        EXPECT_LE(rel(dx0 * noise_field(ops, k, z), expect), 1e-13) << k;
    }
}

// Full bracket at z*: top 0, bottom sqrt(eta_k/M) h^-2 (e_k (.) A1 - A e_k).
TEST(Hormander, BracketAtBasePointByHand) {
    const auto cfg = make_lattice(19, 30);
    const auto ops = make_noise_operators(cfg);
    const Eigen::VectorXd z = hormander_point(cfg);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(19, 19);
    for (Eigen::Index j = 0; j < 19; ++j) {
        a(j, j) = -2;
        if (j > 0) a(j, j - 1) = 1;
        if (j < 18) a(j, j + 1) = 1;
    }
    const Eigen::VectorXd a1 = a * Eigen::VectorXd::Ones(19);
    const double inv_h2 = 1.0 / (cfg.h * cfg.h);
    for (std::size_t k = 1; k <= 19; ++k) {
        Eigen::VectorXd ek(19);
        for (Eigen::Index j = 0; j < 19; ++j) ek(j) = eigenfunction(k, cfg.x(static_cast<std::size_t>(j) + 1));
        const Eigen::VectorXd b = lie_bracket(cfg, ops, k, z);
        EXPECT_LE(b.head(19).norm(), 1e-12);
        const Eigen::VectorXd expect = std::sqrt(cfg.eta[k - 1] / 19.0) * inv_h2 * (ek.cwiseProduct(a1) - a * ek);
        EXPECT_LE(rel(b.tail(19), expect), 1e-12) << k;
    }
}

TEST(Hormander, BracketMatchesFiniteDifferences) {
    const auto cfg = make_lattice(9, 30);
    const auto ops = make_noise_operators(cfg);
    std::mt19937_64 rng(4);
    std::vector<Eigen::VectorXd> points{hormander_point(cfg)};
    for (int i = 0; i < 3; ++i) points.push_back(random_vector(rng, 18).normalized());
    for (const auto& z : points) {
        const auto x0 = [&](const Eigen::VectorXd& x) { return drift_field(cfg, ops, x); };
        const Eigen::MatrixXd dx0 = fd_jacobian(x0, z, 1e-6);
        for (std::size_t k = 1; k <= 9; ++k) {
            const auto xk = [&](const Eigen::VectorXd& x) { return noise_field(ops, k, x); };
            const Eigen::MatrixXd dxk = fd_jacobian(xk, z, 1e-6);
            const Eigen::VectorXd fd = dxk * x0(z) - dx0 * xk(z);
            EXPECT_LE(rel(lie_bracket(cfg, ops, k, z), fd), 1e-5);
        }
    }
}

TEST(Hormander, BracketVanishesWhenModeIsConstant) {
    // M = 2: e_1 samples to a constant vector, so e_1 * A1 = A e_1 at z*
    const auto cfg = make_lattice(2, 30);
    const auto ops = make_noise_operators(cfg);
    const Eigen::VectorXd z = hormander_point(cfg);
    EXPECT_LE(lie_bracket(cfg, ops, 1, z).norm(), 1e-12 * (noise_jacobian(ops, 1) * drift_field(cfg, ops, z)).norm());
    EXPECT_GT(lie_bracket(cfg, ops, 2, z).norm(), 1.0);
}

TEST(Hormander, FrameIsTangentToChargeSphere) {
    for (std::size_t m = 2; m <= 19; ++m) {
        const auto cfg = make_lattice(m, 30);
        const auto ops = make_noise_operators(cfg);
        const Eigen::VectorXd z = hormander_point(cfg);
        const Eigen::MatrixXd frame = hormander_frame(cfg, ops);
        // d/dt |z|^2 along every column vanishes: z . X_k = 0 and z . [X_0,X_k] = 0.
        EXPECT_LE((z.transpose() * frame).cwiseAbs().maxCoeff(), 1e-9 * frame.norm()) << "M = " << m;
        EXPECT_EQ(hormander_rank(frame), static_cast<int>(2 * m - 1)) << "M = " << m;
    }
}

TEST(Hormander, DriftSuppliesNormalDirection) {
    for (std::size_t m = 2; m <= 19; ++m) {
        const auto cfg = make_lattice(m, 30);
        const auto ops = make_noise_operators(cfg);
        const Eigen::VectorXd z = hormander_point(cfg);
        // z . X_0(z) = -sum Ehat_j |u_j|^2 < 0
        EXPECT_LT(z.dot(drift_field(cfg, ops, z)), 0.0);
        EXPECT_EQ(hormander_rank(lie_algebra_frame(cfg, ops)), static_cast<int>(2 * m)) << "M = " << m;
    }
}

TEST(Hormander, DuplicatedColumnLosesRank) {
    const auto cfg = make_lattice(5, 30);
    const auto ops = make_noise_operators(cfg);
    Eigen::MatrixXd frame = lie_algebra_frame(cfg, ops);
    EXPECT_EQ(hormander_rank(frame), 10);
    frame.col(10) = frame.col(1);
    EXPECT_EQ(hormander_rank(frame), 9);
    EXPECT_EQ(hormander_rank(Eigen::MatrixXd::Zero(4, 4)), 0);
}

TEST(Wedge, Basics) {
    std::mt19937_64 rng(5);
    const TangentState a = random_tangent(rng, 6), b = random_tangent(rng, 6);
    EXPECT_EQ(wedge_sum(a, a), 0.0);
    EXPECT_EQ(wedge_sum(a, b), -wedge_sum(b, a));
    EXPECT_EQ(wedge_sum(TangentState({1.0}, {0.0}), TangentState({0.0}, {1.0})), 1.0);
}

namespace {

struct TangentFixture {
    LatticeConfig cfg;
    NoiseOperators ops;
    StepperConfig sc;
    State u0, u1;
    std::vector<double> db;
};

TangentFixture make_fixture(std::mt19937_64& rng, double lambda, double fp_tol) {
    TangentFixture f;
    f.cfg = make_lattice(9, 30);
    f.cfg.lambda = lambda;
    f.ops = make_noise_operators(f.cfg);
    f.sc = StepperConfig{std::ldexp(1.0, -8), fp_tol, 200};
    f.u0 = random_unit_state(rng, 9);
    std::normal_distribution<double> n;
    f.db.resize(30);
    for (auto& v : f.db) v = std::sqrt(f.sc.tau) * n(rng);
    f.u1 = step_midpoint(f.cfg, f.ops, f.sc, f.u0, f.db).state;
    return f;
}

} // namespace

TEST(Tangent, ZeroAndLinearity) {
    std::mt19937_64 rng(6);
    const auto f = make_fixture(rng, 1.0, 1e-12);
    const MidpointTangentMap map(f.cfg, f.ops, f.sc, f.u0, f.u1, f.db);
    const TangentState zero = map.apply(TangentState(9));
    for (std::size_t j = 0; j < 9; ++j) EXPECT_EQ(zero.dp[j] * zero.dp[j] + zero.dq[j] * zero.dq[j], 0.0);
    const TangentState a = random_tangent(rng, 9), b = random_tangent(rng, 9);
    TangentState comb(9);
    for (std::size_t j = 0; j < 9; ++j) {
        comb.dp[j] = 2.0 * a.dp[j] - 0.5 * b.dp[j];
        comb.dq[j] = 2.0 * a.dq[j] - 0.5 * b.dq[j];
    }
    const Eigen::VectorXd lhs = tangent_vec(map.apply(comb));
    const Eigen::VectorXd rhs = 2.0 * tangent_vec(map.apply(a)) - 0.5 * tangent_vec(map.apply(b));
    EXPECT_LE((lhs - rhs).norm(), 1e-12 * rhs.norm());
}

TEST(Tangent, LinearCaseMatchesDifferenceQuotient) {
    std::mt19937_64 rng(7);
    const auto f = make_fixture(rng, 0.0, 1e-14);
    const TangentState xi = random_tangent(rng, 9);
    const double eps = 1e-7;
    State up = f.u0;
    for (std::size_t j = 0; j < 9; ++j) {
        up.p[j] += eps * xi.dp[j];
        up.q[j] += eps * xi.dq[j];
    }
    const State u1p = step_midpoint(f.cfg, f.ops, f.sc, up, f.db).state;
    const Eigen::VectorXd fd = (stack(u1p) - stack(f.u1)) / eps;
    const Eigen::VectorXd an = tangent_vec(tangent_step_midpoint(f.cfg, f.ops, f.sc, f.u0, f.u1, f.db, xi));
    EXPECT_LE(rel(an, fd), 1e-5);
}

TEST(Tangent, NonlinearCaseMatchesCentralDifference) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        const auto f = make_fixture(rng, trial % 2 ? -1.0 : 1.0, 1e-14);
        const TangentState xi = random_tangent(rng, 9);
        const double eps = 1e-6;
        State up = f.u0, um = f.u0;
        for (std::size_t j = 0; j < 9; ++j) {
            up.p[j] += eps * xi.dp[j];
            up.q[j] += eps * xi.dq[j];
            um.p[j] -= eps * xi.dp[j];
            um.q[j] -= eps * xi.dq[j];
        }
        const Eigen::VectorXd fd = (stack(step_midpoint(f.cfg, f.ops, f.sc, up, f.db).state) -
                                    stack(step_midpoint(f.cfg, f.ops, f.sc, um, f.db).state)) /
                                   (2 * eps);
        const Eigen::VectorXd an = tangent_vec(tangent_step_midpoint(f.cfg, f.ops, f.sc, f.u0, f.u1, f.db, xi));
        EXPECT_LE(rel(an, fd), 1e-5);
    }
}

TEST(Multisymplectic, ZeroTangentsGiveZeroResidual) {
    const TangentState z(5);
    for (double r : multisymplectic_residual(0.1, 0.2, z, z, z, z)) EXPECT_EQ(r, 0.0);
}

TEST(Multisymplectic, ResidualsSumToGlobalWedgeChange) {
    // With zero Dirichlet padding the flux terms telescope.
    std::mt19937_64 rng(9);
    const TangentState a = random_tangent(rng, 8), b = random_tangent(rng, 8);
    const TangentState c = random_tangent(rng, 8), d = random_tangent(rng, 8);
    const double tau = 0.01;
    const auto r = multisymplectic_residual(tau, 1.0 / 9, a, b, c, d);
    double s = 0.0;
    for (double v : r) s += v;
    EXPECT_NEAR(s, (wedge_sum(b, d) - wedge_sum(a, c)) / tau, 1e-9 * std::abs(s) + 1e-9);
    // Arbitrary tangents do not satisfy the local law.
    double worst = 0.0;
    for (double v : r) worst = std::max(worst, std::abs(v));
    EXPECT_GT(worst, 1.0);
}

TEST(Multisymplectic, ConservedAlongMidpointPaths) {
    const auto cfg = make_lattice(9, 30);  // h = 0.1
    const auto ops = make_noise_operators(cfg);
    const double tau = std::ldexp(1.0, -10);
    const StepperConfig sc{tau, 1e-12, 100};
    std::mt19937_64 rng(10);
    for (std::uint64_t path = 0; path < 5; ++path) {
        TangentState xi = random_tangent(rng, 9), eta = random_tangent(rng, 9);
        State u = initial_state(cfg, 1 + static_cast<int>(path));
        IncrementGenerator gen(PathSpec{77, path, 30, tau, 0, 100});
        std::vector<double> db(30);
        Stepper stepper(Scheme::midpoint, cfg, ops, sc);
        double omega = wedge_sum(xi, eta);
        double worst_step = 0.0, worst_cell = 0.0;
        for (int n = 0; n < 100; ++n) {
            gen.next_coarse(db);
            const State next = stepper.step(u, db).state;
            const MidpointTangentMap map(cfg, ops, sc, u, next, db);
            TangentState xi1 = map.apply(xi), eta1 = map.apply(eta);
            for (double r : multisymplectic_residual(tau, cfg.h, xi, xi1, eta, eta1)) {
                worst_cell = std::max(worst_cell, std::abs(r));
            }
            const double omega1 = wedge_sum(xi1, eta1);
            worst_step = std::max(worst_step, std::abs(omega1 - omega));
            omega = omega1;
            xi = std::move(xi1);
            eta = std::move(eta1);
            u = next;
        }
        EXPECT_LE(worst_step, 1e-9);
        EXPECT_LE(worst_cell, 1e-8);
    }
}
