// test_spin.cpp — Dyson-series spin-bath propagator

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "qnd/linalg.hpp"
#include "qnd/oracle.hpp"
#include "qnd/pauli.hpp"
#include "qnd/spin_propagator.hpp"
#include "support.hpp"

using namespace qnd;
using namespace qnd::spin;
using std::numbers::pi;

namespace {

double max_abs(const Eigen::MatrixXcd& m) { return m.cwiseAbs().maxCoeff(); }

// Theta-matrix of a series term, straight from its definition.
Eigen::Matrix2cd theta_matrix(double th, int n) {
    const double sgn = n % 2 == 0 ? 1.0 : -1.0;
    Eigen::Matrix2cd m;
    m << std::cos(th), kI * std::sin(th), sgn * kI * std::sin(th), sgn * std::cos(th);
    return m;
}

// Brute-force n-fold simplex integral of the Theta-matrix: recursive
// midpoint rule on a uniform grid, independent of the library quadrature.
Eigen::Matrix2cd brute_term(double omega_k, double lambda, double t, int n, int cells) {
    std::vector<double> taus(static_cast<std::size_t>(n));
    Eigen::Matrix2cd sum = Eigen::Matrix2cd::Zero();
    const double h = t / cells;
    std::function<void(int, double, double)> rec = [&](int level, double upper, double weight) {
        if (level < 0) {
            sum += weight * theta_matrix(lambda * a_n(taus, t), n);
            return;
        }
        const int m = std::max(1, static_cast<int>(std::round(upper / h)));
        const double dh = upper / m;
        for (int i = 0; i < m; ++i) {
            taus[static_cast<std::size_t>(level)] = (i + 0.5) * dh;
            rec(level - 1, (i + 0.5) * dh, weight * dh);
        }
    };
    rec(n - 1, t, 1.0);
    return std::pow(kI * omega_k, n) * sum;
}

}  // namespace

TEST_CASE("a_n values", "[spin]") {
    CHECK(a_n({}, 1.7) == 1.7);
    const double one[] = {0.3};
    CHECK(a_n(one, 1.0) == Catch::Approx(-0.4));
    const double two[] = {0.2, 0.5};
    CHECK(std::abs(a_n(two, 1.0) - 0.4) < 1e-15);
    const double bad[] = {0.5, 0.2};
    CHECK_THROWS_AS(a_n(bad, 1.0), DomainError);
    const double beyond[] = {0.2, 1.5};
    CHECK_THROWS_AS(a_n(beyond, 1.0), DomainError);
}

TEST_CASE("theta values", "[spin]") {
    const SystemParams sys{2.0, std::nullopt};
    CHECK(theta(sys, 0.0, SpinSector::Up, 0.4) == 0.0);
    CHECK(std::abs(theta(sys, 0.5, SpinSector::Up, 0.4) - 0.2) < 1e-16);
    CHECK(theta(sys, 0.5, SpinSector::Down, 0.4) == -theta(sys, 0.5, SpinSector::Up, 0.4));
}

TEST_CASE("dyson_term low orders", "[spin]") {
    const SystemParams sys{1.0, std::nullopt};
    const SpinMode mode{1.0, 0.6};
    const double lambda = 0.3, t = 0.8;
    CHECK(max_abs(dyson_term(sys, mode, SpinSector::Up, t, 0).value - pauli::exp_i_sigma_x(lambda * t)) < 1e-15);
    CHECK(max_abs(dyson_term(sys, mode, SpinSector::Up, 0.0, 0).value - Eigen::Matrix2cd::Identity()) < 1e-15);
    for (int n = 1; n <= 4; ++n) CHECK(max_abs(dyson_term(sys, mode, SpinSector::Up, 0.0, n).value) == 0.0);
    CHECK_THROWS_AS(dyson_term(sys, mode, SpinSector::Up, t, 2, 0), ConfigurationError);
    CHECK_THROWS_AS(dyson_term(sys, mode, SpinSector::Up, t, -1), DomainError);
}

TEST_CASE("first-order term matches a dense trapezoid rule", "[spin]") {
    const SystemParams sys{1.0, std::nullopt};
    const SpinMode mode{1.0, 0.6};
    const double lambda = 0.3, t = 0.8;
    const auto term = dyson_term(sys, mode, SpinSector::Up, t, 1).value;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            auto f = [&](double tau) { return (kI * mode.omega * theta_matrix(lambda * (2.0 * tau - t), 1))(r, c); };
            CHECK(std::abs(term(r, c) - test::trapezoid(f, 0.0, t, 10000)) < 1e-8);
        }
}

TEST_CASE("higher-order terms match brute-force simplex sums", "[spin]") {
    const SystemParams sys{1.3, std::nullopt};
    const SpinMode mode{0.9, -0.7};
    const auto g = generator(sys, mode, SpinSector::Down);
    const double t = 1.1;
    for (int n = 2; n <= 3; ++n) {
        const auto term = dyson_term(sys, mode, SpinSector::Down, t, n).value;
        const int cells = n == 2 ? 400 : 120;
        const double tol = n == 2 ? 1e-5 : 1e-4;  // midpoint rule, O(h^2)
        CHECK(max_abs(term - brute_term(g.omega, g.lambda, t, n, cells)) < tol);
    }
}

TEST_CASE("term magnitudes obey the factorial bound", "[spin][property]") {
    test::Rng rng(17);
    const quadrature::SimplexIntegrator simplex(kDefaultQuadratureOrder);
    for (int trial = 0; trial < 50; ++trial) {
        const ModeGenerator g{rng.uniform(-2, 2), rng.uniform(-3, 3)};
        const double t = rng.uniform(0.0, 1.5);
        for (int n = 0; n <= 8; ++n) {
            const double bound = std::pow(std::abs(g.omega) * t, n) / std::tgamma(n + 1.0);
            const Eigen::Matrix2cd m = dyson_term_matrix(g, t, n, simplex);
            CHECK(m.operatorNorm() <= bound * (1.0 + 1e-12) + 1e-15);
        }
    }
}

TEST_CASE("exact_mode_propagator closed forms", "[spin]") {
    const double t = 0.7;
    Eigen::Matrix2cd diag = Eigen::Matrix2cd::Zero();
    diag(0, 0) = std::exp(kI * 1.5 * t);
    diag(1, 1) = std::exp(-kI * 1.5 * t);
    CHECK(max_abs(exact_mode_propagator(1.5, 0.0, t) - diag) < 1e-15);
    CHECK(max_abs(exact_mode_propagator(1.5, 0.0, t, Propagation::Forward) - diag.conjugate()) < 1e-15);
    CHECK(max_abs(exact_mode_propagator(0.0, 0.4, t) - pauli::exp_i_sigma_x(0.4 * t)) < 1e-15);
    CHECK(max_abs(exact_mode_propagator(3.0, 4.0, pi / 5.0) + Eigen::Matrix2cd::Identity()) < 1e-15);
    CHECK(max_abs(exact_mode_propagator(0.0, 0.0, t) - Eigen::Matrix2cd::Identity()) == 0.0);

    const Eigen::MatrixXcd h = 1.5 * pauli::sigma_z() + 0.4 * pauli::sigma_x();
    CHECK(max_abs(exact_mode_propagator(1.5, 0.4, t) - test::taylor_expm(kI * t * h)) < 1e-14);
}

TEST_CASE("series limits", "[spin]") {
    const SystemParams sys{1.0, std::nullopt};
    const Tolerances tol;
    const auto frozen = mode_propagator_series(sys, {0.0, 0.6}, SpinSector::Up, 2.0, tol);
    CHECK(frozen.order_used == 0);
    CHECK(frozen.tail_bound == 0.0);
    CHECK(max_abs(frozen.value - pauli::exp_i_sigma_x(0.3 * 2.0)) < 1e-14);

    const auto free = mode_propagator_series(sys, {1.2, 0.0}, SpinSector::Up, 1.5, tol);
    CHECK(max_abs(free.value - exact_mode_propagator(1.2, 0.0, 1.5)) < 1e-9);
}

TEST_CASE("series matches the closed form at the reference point", "[spin]") {
    const SystemParams sys{1.0, std::nullopt};
    const auto series = mode_propagator_series(sys, {1.0, 0.6}, SpinSector::Up, 0.8, Tolerances{});
    CHECK(max_abs(series.value - exact_mode_propagator(1.0, 0.3, 0.8)) < 1e-8);
    CHECK(series.tail_bound < 1e-9);
    // 0.8^N / N! falls below 1e-9 at N = 11; subdividing once halves x.
    CHECK(series.time_steps == 2);
    CHECK(series.order_used <= 10);
    const auto single = mode_propagator_at_order(sys, {1.0, 0.6}, SpinSector::Up, 0.8, 8);
    CHECK(max_abs(single - exact_mode_propagator(1.0, 0.3, 0.8)) < 1e-6);
}

TEST_CASE("series agrees with the closed form over a parameter sweep", "[spin][property]") {
    test::Rng rng(101);
    const Tolerances tol;
    for (int trial = 0; trial < 40; ++trial) {
        const SystemParams sys{rng.uniform(-3, 3), std::nullopt};
        const SpinMode mode{rng.uniform(-3, 3), rng.uniform(-3, 3)};
        const auto s = rng.sign() > 0 ? SpinSector::Up : SpinSector::Down;
        const double t = rng.uniform(0.0, 3.0);
        for (auto p : {Propagation::Backward, Propagation::Forward}) {
            const auto series = mode_propagator_series(sys, mode, s, t, tol, kDefaultQuadratureOrder, p);
            const double lambda = coupling_frequency(sys, mode.coupling, s);
            CHECK(max_abs(series.value - exact_mode_propagator(mode.omega, lambda, t, p)) < 1e-8);
            CHECK(linalg::unitarity_defect(series.value) <= 4.0 * series.tail_bound + 1e-12);
        }
    }
}

TEST_CASE("parity structure of series terms", "[spin][property]") {
    const SystemParams sys{1.4, std::nullopt};
    const auto series = mode_propagator_series(sys, {0.9, 0.8}, SpinSector::Up, 1.0, Tolerances{});
    const auto sz = pauli::sigma_z();
    for (const auto& term : series.terms) {
        const Eigen::Matrix2cd m = term.order % 2 == 0 ? term.value : Eigen::Matrix2cd(sz * term.value);
        CHECK(std::abs(m(0, 0) - m(1, 1)) < 1e-15);
        CHECK(std::abs(m(0, 1) - m(1, 0)) < 1e-15);
    }
}

TEST_CASE("flipping the sector conjugates by sigma_z", "[spin][property]") {
    test::Rng rng(7);
    const auto sz = pauli::sigma_z();
    for (int trial = 0; trial < 20; ++trial) {
        const SystemParams sys{rng.uniform(0.5, 2), std::nullopt};
        const SpinMode mode{rng.uniform(-2, 2), rng.uniform(-2, 2)};
        const double t = rng.uniform(0.0, 2.0);
        const auto up = mode_propagator_series(sys, mode, SpinSector::Up, t, Tolerances{});
        const auto down = mode_propagator_series(sys, mode, SpinSector::Down, t, Tolerances{});
        CHECK(max_abs(down.value - sz * up.value * sz) < 1e-12);
    }
}

TEST_CASE("truncation error decays under the tail bound", "[spin][convergence]") {
    test::Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        const SystemParams sys{rng.uniform(0.5, 3), std::nullopt};
        const double omega_k = rng.uniform(0.2, 1.0);
        const double t = rng.uniform(0.3, 1.0 / omega_k);
        const SpinMode mode{omega_k, rng.uniform(-3, 3)};
        const auto exact = exact_mode_propagator(omega_k, coupling_frequency(sys, mode.coupling, SpinSector::Up), t);
        double previous_bound = std::numeric_limits<double>::infinity();
        for (int n = 2; n <= 8; ++n) {
            const double bound = tail_bound(omega_k * t, n);
            const double err = max_abs(mode_propagator_at_order(sys, mode, SpinSector::Up, t, n) - exact);
            CHECK(bound < previous_bound);
            CHECK(err <= bound * (1.0 + 1e-9) + 1e-14);
            previous_bound = bound;
        }
    }
}

TEST_CASE("tail bound and planning", "[spin]") {
    CHECK(tail_bound(0.0, 3) == 0.0);
    CHECK(std::abs(tail_bound(1.0, 0) - (std::exp(1.0) - 1.0)) < 1e-15);
    CHECK(std::abs(tail_bound(0.5, 2) - (std::exp(0.5) - 1.0 - 0.5 - 0.125)) < 1e-16);
    CHECK(compounded_bound(1e-12, 4) == Catch::Approx(4e-12).epsilon(1e-9));

    // Large w_k t is split into shorter steps.
    const auto plan = plan_series({10.0, 0.0}, 2.0, Tolerances{});
    CHECK(plan.time_steps >= 5);
    CHECK(plan.bound < 1e-9);

    Tolerances strict;
    strict.max_dyson_order = 0;
    try {
        plan_series({1.0, 0.0}, 1.0, strict);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.achieved_bound() > 1e-9);
    }
}

TEST_CASE("doubling quadrature order changes terms below rel_tol", "[spin][convergence]") {
    const SystemParams sys{2.0, std::nullopt};
    const SpinMode mode{1.5, 2.5};
    for (int n = 0; n <= 10; ++n) {
        const auto a = dyson_term(sys, mode, SpinSector::Up, 1.0, n, 32).value;
        const auto b = dyson_term(sys, mode, SpinSector::Up, 1.0, n, 64).value;
        CHECK(max_abs(a - b) < 1e-9);
    }
}

TEST_CASE("kernel_u3 limits", "[spin]") {
    const SystemParams sys{1.0, std::nullopt};
    const SpinBathSpec bath{{{1.0, 0.6}, {0.5, 0.3}}};
    const auto k0 = kernel_u3(sys, bath, SpinSector::Up, 0.0, Tolerances{});
    CHECK(k0.system_phase == Complex{1.0, 0.0});
    CHECK(max_abs(k0.bath_propagator() - Eigen::MatrixXcd::Identity(4, 4)) == 0.0);

    const double t = 0.9;
    const auto free = kernel_u3(sys, {{{1.3, 0.0}}}, SpinSector::Down, t, Tolerances{});
    CHECK(std::abs(free.system_phase - std::exp(-kI * 0.5 * t)) < 1e-15);
    CHECK(max_abs(free.sector_propagator() - std::exp(-kI * 0.5 * t) * exact_mode_propagator(1.3, 0.0, t)) < 1e-9);
}

TEST_CASE("kernel_u3 matches the dense oracle (M = 2)", "[spin][oracle]") {
    const SystemParams sys{1.0, std::nullopt};
    const SpinBathSpec bath{{{1.0, 0.6}, {0.5, 0.3}}};
    const oracle::SpinOracle o(sys, bath);
    for (auto s : kSectors)
        for (auto p : {Propagation::Backward, Propagation::Forward}) {
            const auto k = kernel_u3(sys, bath, s, 1.0, Tolerances{}, kDefaultQuadratureOrder, p);
            CHECK(max_abs(k.sector_propagator() - o.sector_unitary(s, 1.0, p)) < 1e-9);
        }
}

TEST_CASE("forward propagation is exp(-iHt) to first order", "[spin]") {
    const SystemParams sys{1.0, std::nullopt};
    const SpinBathSpec bath{{{0.8, 0.5}}};
    const double dt = 1e-6;
    for (auto s : kSectors) {
        const auto k = kernel_u3(sys, bath, s, dt, Tolerances{}, kDefaultQuadratureOrder, Propagation::Forward);
        const Eigen::MatrixXcd h = oracle::build_sector_hamiltonian_spin(sys, bath, s);
        const Eigen::MatrixXcd first = Eigen::MatrixXcd::Identity(2, 2) - kI * dt * h;
        CHECK(max_abs(k.sector_propagator() - first) < 1e-11);
    }
}
