// test_structure.cpp — squeeze, rotation and polar structure

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "qnd/canonical_structure.hpp"
#include "qnd/pauli.hpp"
#include "support.hpp"

using namespace qnd;
using namespace qnd::structure;
using std::numbers::pi;

namespace {

double max_abs(const auto& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("squeeze map values", "[structure]") {
    const auto same = squeeze_map(0.0, {0.3, -1.2});
    CHECK(same.x == 0.3);
    CHECK(same.p == -1.2);
    const auto s = squeeze_map(std::log(2.0), {1.0, 1.0});
    CHECK(std::abs(s.x - 2.0) < 1e-15);
    CHECK(std::abs(s.p - 0.5) < 1e-15);
    CHECK_THROWS_AS(squeeze_map(std::nan(""), {1.0, 1.0}), DomainError);

    test::Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const double b = rng.uniform(-3, 3);
        const PhasePoint u{rng.uniform(-2, 2), rng.uniform(-2, 2)}, v{rng.uniform(-2, 2), rng.uniform(-2, 2)};
        const auto su = squeeze_map(b, u), sv = squeeze_map(b, v);
        CHECK(std::abs(su.x * su.p - u.x * u.p) < 1e-12);
        CHECK(std::abs(oriented_area(su, sv) - oriented_area(u, v)) < 1e-12);
        CHECK(std::abs(squeeze_jacobian(b) - 1.0) < 1e-15);
    }
}

TEST_CASE("rotation matrix R", "[structure]") {
    CHECK(max_abs(rotation_matrix_R(0.0, Parity::Even) - Eigen::Matrix2cd::Identity()) == 0.0);
    CHECK(max_abs(rotation_matrix_R(0.0, Parity::Odd) - pauli::sigma_z()) == 0.0);
    CHECK(max_abs(rotation_matrix_R(pi / 2, Parity::Even) - kI * pauli::sigma_x()) < 1e-15);
    CHECK(parity_of(4) == Parity::Even);
    CHECK(parity_of(7) == Parity::Odd);

    test::Rng rng(2);
    for (int i = 0; i < 100; ++i) {
        const double th = rng.uniform(-pi, pi);
        CHECK(max_abs(rotation_matrix_R(th, Parity::Even) * rotation_matrix_R(-th, Parity::Even) -
                      Eigen::Matrix2cd::Identity()) < 1e-15);
        const auto odd = rotation_matrix_R(th, Parity::Odd);
        const double sgn = -1.0;
        CHECK(std::abs(odd(1, 0) - sgn * kI * std::sin(th)) < 1e-15);
        CHECK(std::abs(odd(1, 1) - sgn * std::cos(th)) < 1e-15);
    }
}

TEST_CASE("Pauli conjugation by x-rotations", "[structure]") {
    CHECK(max_abs(pauli_conjugation_even(0.0) - Eigen::Matrix3d::Identity()) == 0.0);

    const Eigen::Matrix3d q = pauli_conjugation_even(pi / 4);
    // sigma_y -> -sigma_z, sigma_z -> sigma_y
    CHECK(max_abs(q.row(1) - Eigen::RowVector3d(0, 0, -1)) < 1e-15);
    CHECK(max_abs(q.row(2) - Eigen::RowVector3d(0, 1, 0)) < 1e-15);

    const auto odd0 = pauli_conjugation_odd(0.0);
    CHECK(max_abs(odd0.full() - Eigen::Vector3d(-1, -1, 1).asDiagonal().toDenseMatrix()) < 1e-15);
    CHECK(max_abs(pauli_conjugation(pauli::sigma_z()) - odd0.full()) < 1e-15);

    test::Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double a = rng.uniform(-2 * pi, 2 * pi), b = rng.uniform(-2 * pi, 2 * pi);
        CHECK(max_abs(pauli_conjugation(rotation_matrix_R(a, Parity::Even)) - pauli_conjugation_even(a)) < 1e-14);
        CHECK(max_abs(pauli_conjugation(rotation_matrix_R(a, Parity::Odd)) - pauli_conjugation_odd(a).full()) < 1e-14);
        CHECK(std::abs(pauli_conjugation_even(a).determinant() - 1.0) < 1e-14);
        CHECK(std::abs(pauli_conjugation_odd(a).determinant() - 1.0) < 1e-14);
        CHECK(max_abs(pauli_conjugation_even(a) * pauli_conjugation_even(b) - pauli_conjugation_even(a + b)) < 1e-14);
        CHECK(max_abs(proper_rotation_block(a).transpose() - plane_rotation(-2.0 * a)) < 1e-15);
    }
}

TEST_CASE("polar factorization", "[structure]") {
    auto check = [](const Eigen::Matrix2d& m, const Eigen::Matrix2d& rot, const Eigen::Matrix2d& pos) {
        const auto f = polar_factorize_symplectic(m);
        CHECK(max_abs(f.rotation - rot) < 1e-12);
        CHECK(max_abs(f.positive - pos) < 1e-12);
    };
    check(Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity());
    check(plane_rotation(0.7), plane_rotation(0.7), Eigen::Matrix2d::Identity());
    check(squeeze_matrix(std::log(2.0)), Eigen::Matrix2d::Identity(), squeeze_matrix(std::log(2.0)));

    Eigen::Matrix2d bad;
    bad << 2.0, 0.0, 0.0, 2.0;
    CHECK_THROWS_AS(polar_factorize_symplectic(bad), DomainError);

    test::Rng rng(4);
    for (int i = 0; i < 1000; ++i) {
        Eigen::Matrix2d m;
        m << rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2);
        const double det = m.determinant();
        if (std::abs(det) < 1e-3) continue;
        if (det < 0) m.col(0) *= -1.0;
        m /= std::sqrt(std::abs(det));
        const auto f = polar_factorize_symplectic(m);
        CHECK(max_abs(f.rotation * f.positive - m) < 1e-12);
        CHECK(max_abs(f.rotation.transpose() * f.rotation - Eigen::Matrix2d::Identity()) < 1e-12);
        CHECK(std::abs(f.rotation.determinant() - 1.0) < 1e-12);
        CHECK(max_abs(f.positive - f.positive.transpose()) < 1e-12);
        CHECK(Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(f.positive).eigenvalues().minCoeff() > 0.0);
        // agrees with the eigendecomposition square root, up to conditioning
        const double cond = m.squaredNorm();
        CHECK(max_abs(f.positive - symmetric_sqrt_of_gram(m)) < 1e-14 * cond * cond);
    }
}

TEST_CASE("structure report on propagator kernels", "[structure]") {
    const SystemParams sys{1.0, std::nullopt};
    const CoherentPoint zero = CoherentPoint::Zero(1);

    const auto free_phases = oscillator::phases(sys, {{{1.0, 0.0}}}, 0.8, zero, zero);
    CHECK(std::abs(free_phases.B - kI * 0.4) < 1e-15);
    const auto free = oscillator_structure(oscillator::kernel_u1(sys, {{{1.0, 0.0}}}, 0.8, zero, zero), free_phases);
    CHECK(free.passed());

    test::Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const SystemParams s{rng.uniform(0.5, 3), std::nullopt};
        const OscillatorBathSpec osc{{{rng.uniform(0.5, 3), rng.uniform(-1, 1)}, {rng.uniform(0.5, 3), rng.uniform(-1, 1)}}};
        const SpinBathSpec spins{{{rng.uniform(-2, 2), rng.uniform(-2, 2)}, {rng.uniform(-2, 2), rng.uniform(-2, 2)}}};
        const double t = rng.uniform(0.0, 3.0);
        const CoherentPoint as = rng.disk_vector(2, 1.0), ap = rng.disk_vector(2, 1.0);
        const auto ph = oscillator::phases(s, osc, t, as, ap);
        const auto ok = oscillator::kernel_u1(s, osc, t, as, ap);
        const auto sk = spin::kernel_u3(s, spins, rng.sign() > 0 ? SpinSector::Up : SpinSector::Down, t, Tolerances{});
        const auto report = kernel_structure_report(ok, ph, sk, s, spins);
        for (const auto& c : report.checks) {
            INFO(c.claim << " residual " << c.residual);
            CHECK(c.passed);
        }
    }
}

TEST_CASE("structure report flags a broken kernel", "[structure]") {
    const SystemParams sys{1.0, std::nullopt};
    const OscillatorBathSpec bath{{{1.0, 0.5}}};
    const CoherentPoint a = CoherentPoint::Constant(1, Complex{0.3, 0.1});
    const auto ph = oscillator::phases(sys, bath, 1.0, a, a);
    auto k = oscillator::kernel_u1(sys, bath, 1.0, a, a);
    std::swap(k.up_entry, k.down_entry);
    const auto report = oscillator_structure(k, ph);
    CHECK_FALSE(report.passed());
    CHECK(report.checks.front().residual > 1e-3);
}
