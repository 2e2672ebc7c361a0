// test_core.cpp — coherent overlaps, conventions and bath validation

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "qnd/core.hpp"
#include "qnd/linalg.hpp"
#include "qnd/pauli.hpp"
#include "support.hpp"

using namespace qnd;
using Catch::Matchers::WithinAbs;

TEST_CASE("coherent_overlap closed-form values", "[core]") {
    ComplexVector a(2);
    a << Complex{0.3, -0.7}, Complex{1.2, 0.4};
    CHECK(std::abs(coherent_overlap(a, a) - 1.0) < 1e-15);

    const ComplexVector zero = ComplexVector::Zero(2);
    CHECK(std::abs(coherent_overlap(zero, a) - std::exp(-0.5 * a.squaredNorm())) < 1e-15);

    ComplexVector one(1), i(1);
    one << 1.0;
    i << kI;
    CHECK(std::abs(coherent_overlap(one, i) - std::exp(Complex{-1.0, 1.0})) < 1e-15);

    const ComplexVector empty(0);
    CHECK(coherent_overlap(empty, empty) == Complex{1.0, 0.0});
}

TEST_CASE("coherent_overlap length mismatch", "[core]") {
    CHECK_THROWS_AS(coherent_overlap(ComplexVector::Zero(2), ComplexVector::Zero(3)), DimensionError);
}

TEST_CASE("coherent_overlap symmetry and bound", "[core][property]") {
    test::Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = static_cast<Eigen::Index>(1 + trial % 4);
        const ComplexVector a = rng.disk_vector(n, 2.0), b = rng.disk_vector(n, 2.0);
        const Complex ab = coherent_overlap(a, b), ba = coherent_overlap(b, a);
        CHECK(std::abs(ab - std::conj(ba)) < 1e-14);
        CHECK(std::abs(ab) <= 1.0 + 1e-15);
        // |<a|b>| = exp(-|a-b|^2/2) < 1 when a != b
        CHECK_THAT(std::abs(ab), WithinAbs(std::exp(-0.5 * (a - b).squaredNorm()), 1e-14));
        CHECK(std::abs(ab) < 1.0);
    }
}

TEST_CASE("validate_bath accepts valid specs", "[core]") {
    CHECK_NOTHROW(validate_bath(OscillatorBathSpec{}));
    CHECK_NOTHROW(validate_bath(SpinBathSpec{}));
    CHECK_NOTHROW(validate_bath(SpinBathSpec{{{-1.0, 0.2}}}));
    CHECK_NOTHROW(validate_bath(OscillatorBathSpec{{{1.0, 0.5}, {2.0, -0.3}}}));
}

TEST_CASE("validate_bath reports offending modes", "[core]") {
    const OscillatorBathSpec bad{{{1.0, 0.1}, {0.0, 0.1}, {2.0, 0.0}, {-3.0, 0.2}}};
    try {
        validate_bath(bad);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        REQUIRE(e.issues().size() == 2);
        CHECK(e.issues()[0].mode == 1);
        CHECK(e.issues()[1].mode == 3);
        CHECK(e.issues()[0].reason.find("division-by-frequency") != std::string::npos);
    }
    CHECK_THROWS_AS(validate_bath(OscillatorBathSpec{{{0.0, 0.1}}}), ValidationError);

    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(validate_bath(SpinBathSpec{{{1.0, nan}}}), ValidationError);
    CHECK_THROWS_AS(validate_bath(OscillatorBathSpec{{{std::numeric_limits<double>::infinity(), 0.1}}}),
                    ValidationError);
}

TEST_CASE("validate_bath is idempotent", "[core][property]") {
    const OscillatorBathSpec osc{{{1.0, 0.5}, {2.5, -0.25}}};
    const auto& once = validate_bath(osc);
    const auto& twice = validate_bath(once);
    CHECK(&once == &twice);
    REQUIRE(twice.size() == 2);
    CHECK(twice.modes[1].coupling == -0.25);
}

TEST_CASE("tolerances and system validation", "[core]") {
    CHECK_NOTHROW(Tolerances{}.validate());
    CHECK_THROWS_AS((Tolerances{0.0, 1e-12, 64, 10}.validate()), ConfigurationError);
    CHECK_THROWS_AS((Tolerances{1e-9, 1e-12, 1, 10}.validate()), ConfigurationError);
    CHECK_THROWS_AS((Tolerances{1e-9, 1e-12, 64, -1}.validate()), ConfigurationError);
    CHECK_THROWS_AS(validate_system(SystemParams{std::nan(""), std::nullopt}), DomainError);
    CHECK_THROWS_AS(validate_system(SystemParams{1.0, std::numeric_limits<double>::infinity()}), DomainError);
}

TEST_CASE("sector labels", "[core]") {
    CHECK(eigenvalue(SpinSector::Up) == 1.0);
    CHECK(eigenvalue(SpinSector::Down) == -1.0);
    CHECK(flipped(SpinSector::Up) == SpinSector::Down);
    CHECK(sector_from_int(-1) == SpinSector::Down);
    CHECK_THROWS_AS(sector_from_int(0), DomainError);
    CHECK(system_index(SpinSector::Up) == 0);
    CHECK(exponent_sign(Propagation::Forward) == -1.0);
}

TEST_CASE("pauli algebra", "[core]") {
    const auto x = pauli::sigma_x(), y = pauli::sigma_y(), z = pauli::sigma_z();
    CHECK((x * y - kI * z).norm() < 1e-15);
    CHECK((x * x - pauli::identity()).norm() < 1e-15);
    const double a = 0.37;
    const Eigen::Matrix2cd e = pauli::exp_i_sigma_x(a);
    CHECK((e - test::taylor_expm(Eigen::MatrixXcd(kI * a * x))).norm() < 1e-14);
}

TEST_CASE("kron layout and cap", "[core]") {
    Eigen::MatrixXcd a(2, 2), b = Eigen::MatrixXcd::Identity(3, 3);
    a << 1.0, 2.0, 3.0, 4.0;
    const Eigen::MatrixXcd k = linalg::kron(a, b);
    CHECK(k.rows() == 6);
    CHECK(k(3, 0) == Complex{3.0, 0.0});
    CHECK(k(4, 1) == Complex{3.0, 0.0});
    const std::vector<Eigen::MatrixXcd> big(13, Eigen::MatrixXcd::Identity(2, 2));
    CHECK_THROWS_AS(linalg::kron_all(big), CapacityError);
}
