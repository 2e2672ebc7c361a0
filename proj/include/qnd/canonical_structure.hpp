// canonical_structure.hpp — Squeeze and rotation structure of the QND propagators
//
// The oscillator sector block e^A diag(e^B, e^-B) acts on phase space as a
// squeeze (x, p) -> (e^B x, e^-B p). Each spin-bath series term is
// R_n(Theta) = e^{i Theta sx} (n even) or sz e^{i Theta sx} (n odd), whose
// adjoint action rotates the Pauli vector about x by 2 Theta.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qnd/core.hpp"
#include "qnd/oscillator_propagator.hpp"
#include "qnd/pauli.hpp"
#include "qnd/spin_propagator.hpp"

namespace qnd::structure {

// ---------------------------------------------------------------- squeeze --

struct PhasePoint {
    double x{0.0};
    double p{0.0};
};

inline Eigen::Matrix2d squeeze_matrix(double b) {
    Eigen::Matrix2d m;
    m << std::exp(b), 0.0, 0.0, std::exp(-b);
    return m;
}

inline PhasePoint squeeze_map(double b, PhasePoint pt) {
    if (!std::isfinite(b)) throw DomainError("squeeze parameter must be finite");
    return {std::exp(b) * pt.x, std::exp(-b) * pt.p};
}

inline double squeeze_jacobian(double b) { return squeeze_matrix(b).determinant(); }

// Oriented area of the parallelogram spanned by two phase points.
inline double oriented_area(PhasePoint a, PhasePoint b) { return a.x * b.p - a.p * b.x; }

// --------------------------------------------------------------- rotation --

enum class Parity { Even, Odd };

inline constexpr Parity parity_of(int n) noexcept { return n % 2 == 0 ? Parity::Even : Parity::Odd; }

/// [[cos, i sin], [(-1)^n i sin, (-1)^n cos]]: e^{i theta sx} or sz e^{i theta sx}.
inline Eigen::Matrix2cd rotation_matrix_R(double theta, Parity parity) {
    const Eigen::Matrix2cd even = pauli::exp_i_sigma_x(theta);
    return parity == Parity::Even ? even : Eigen::Matrix2cd(pauli::sigma_z() * even);
}

/// Row j holds the Pauli-basis coefficients of U sigma_j U^+.
inline Eigen::Matrix3d pauli_conjugation(const Eigen::Matrix2cd& u) {
    const auto sigma = pauli::vector();
    Eigen::Matrix3d out;
    for (int j = 0; j < 3; ++j) {
        const Eigen::Matrix2cd image = u * sigma[j] * u.adjoint();
        for (int k = 0; k < 3; ++k) out(j, k) = 0.5 * (sigma[k] * image).trace().real();
    }
    return out;
}

// e^{i theta sx} sigma e^{-i theta sx}: rotation about x by 2 theta.
inline Eigen::Matrix3d pauli_conjugation_even(double theta) {
    const double c = std::cos(2.0 * theta), s = std::sin(2.0 * theta);
    Eigen::Matrix3d m;
    m << 1.0, 0.0, 0.0,
         0.0, c, -s,
         0.0, s, c;
    return m;
}

// prefactor * matrix, with the prefactor kept separate.
struct ScaledMatrix3 {
    double prefactor{1.0};
    Eigen::Matrix3d matrix;

    Eigen::Matrix3d full() const { return prefactor * matrix; }
    double determinant() const { return std::pow(prefactor, 3) * matrix.determinant(); }
};

// sz e^{i theta sx} sigma e^{-i theta sx} sz = e^{i pi} [[1,0,0],[0,c,s],[0,s,-c]].
inline ScaledMatrix3 pauli_conjugation_odd(double theta) {
    const double c = std::cos(2.0 * theta), s = std::sin(2.0 * theta);
    ScaledMatrix3 out;
    out.prefactor = std::cos(std::numbers::pi);  // e^{i pi}
    out.matrix << 1.0, 0.0, 0.0,
                  0.0, c, s,
                  0.0, s, -c;
    return out;
}

// [[cos a, sin a], [-sin a, cos a]]
inline Eigen::Matrix2d plane_rotation(double angle) {
    Eigen::Matrix2d m;
    m << std::cos(angle), std::sin(angle), -std::sin(angle), std::cos(angle);
    return m;
}

// sz * [[cos 2t, sin 2t], [sin 2t, -cos 2t]], the lower block of the odd map
// with sz applied from the left.
inline Eigen::Matrix2d proper_rotation_block(double theta) {
    const double c = std::cos(2.0 * theta), s = std::sin(2.0 * theta);
    Eigen::Matrix2d reflection;
    reflection << c, s, s, -c;
    return pauli::sigma_z().real() * reflection;
}

// ------------------------------------------------------------------ polar --

struct PolarFactors {
    Eigen::Matrix2d rotation;
    Eigen::Matrix2d positive;
};

/// m = rotation * positive with positive = sqrt(m^T m).
///
/// For 2x2 with det m > 0, m + cof(m) = [[a+d, b-c], [c-b, a+d]] is a
/// positive multiple of the rotation factor, so the rotation is exact to
/// rounding and positive = rotation^T m is the symmetric square root.
inline PolarFactors polar_factorize_symplectic(const Eigen::Matrix2d& m, double det_tol = 1e-10) {
    if (!m.allFinite()) throw DomainError("polar factorization: non-finite entries");
    const double det = m.determinant();
    if (std::abs(det - 1.0) > det_tol)
        throw DomainError("polar factorization: determinant " + std::to_string(det) + " is not 1");
    const double c = m(0, 0) + m(1, 1), s = m(0, 1) - m(1, 0);
    const double r = std::hypot(c, s);
    if (!(r > 0.0)) throw DomainError("polar factorization: singular input");
    PolarFactors f;
    f.rotation << c / r, s / r, -s / r, c / r;
    const Eigen::Matrix2d p = f.rotation.transpose() * m;
    f.positive = 0.5 * (p + p.transpose());
    return f;
}

// sqrt(m^T m) by eigendecomposition, the textbook route.
inline Eigen::Matrix2d symmetric_sqrt_of_gram(const Eigen::Matrix2d& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m.transpose() * m);
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
           es.eigenvectors().transpose();
}

// ----------------------------------------------------------------- report --

struct StructureCheck {
    std::string claim;
    bool passed{false};
    double residual{0.0};
    double threshold{0.0};
    std::string detail;
};

struct StructureReport {
    std::vector<StructureCheck> checks;

    bool passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }

    void add(std::string claim, double residual, double threshold, std::string detail = {}) {
        checks.push_back({std::move(claim), residual < threshold, residual, threshold, std::move(detail)});
    }

    void append(const StructureReport& other) {
        checks.insert(checks.end(), other.checks.begin(), other.checks.end());
    }
};

inline constexpr double kStructureThreshold = 1e-10;

/// Squeeze claims for one oscillator kernel evaluation. B is complex in
/// general: Re B is the squeeze magnitude, Im B a phase.
inline StructureReport oscillator_structure(const oscillator::OscillatorKernel& kernel,
                                            const oscillator::PropagatorPhases& phases,
                                            double threshold = kStructureThreshold) {
    StructureReport r;
    const Complex A = phases.A, B = phases.B2.value_or(phases.B);
    const Complex expected_down = std::exp(A) * std::exp(B);
    const Complex expected_up = std::exp(A) * std::exp(-B);
    const double scale = std::max({std::abs(expected_down), std::abs(expected_up), 1e-300});
    const double block_residual =
        std::max(std::abs(kernel.down_entry - expected_down), std::abs(kernel.up_entry - expected_up)) / scale;
    const Complex extracted = 0.5 * std::log(kernel.down_entry / kernel.up_entry);
    r.add("oscillator block is e^A diag(e^B, e^-B)", block_residual, threshold,
          "squeeze magnitude Re B = " + std::to_string(B.real()) + ", phase Im B = " +
              std::to_string(B.imag()) + ", B from kernel (mod i pi) = " +
              std::to_string(extracted.real()) + std::string(extracted.imag() < 0 ? " - " : " + ") +
              std::to_string(std::abs(extracted.imag())) + "i");

    const Complex det = kernel.block().determinant();
    const Complex e2a = std::exp(2.0 * A);
    r.add("det of sector block equals e^{2A}", std::abs(det - e2a) / std::max(std::abs(e2a), 1e-300), threshold);

    r.add("Re A equals -sum|phi|^2 / 2", std::abs(A.real() + 0.5 * phases.phi.squaredNorm()), threshold);

    const double b = B.real();
    r.add("squeeze map has unit Jacobian", std::abs(squeeze_jacobian(b) - 1.0), threshold);

    const PhasePoint u{0.8, -0.3}, v{-0.45, 1.1};
    const double area = oriented_area(u, v);
    r.add("squeeze map preserves oriented area",
          std::abs(oriented_area(squeeze_map(b, u), squeeze_map(b, v)) - area), threshold);
    return r;
}

/// Rotation claims for every mode of a spin kernel (first time step's terms).
inline StructureReport spin_structure(const spin::SpinKernel& kernel, const SystemParams& sys,
                                      const SpinBathSpec& bath, double threshold = kStructureThreshold) {
    StructureReport r;
    const auto sz = pauli::sigma_z();
    for (std::size_t k = 0; k < kernel.modes.size(); ++k) {
        const auto& series = kernel.modes[k];
        const auto g = spin::generator(sys, bath.modes[k], kernel.sector, kernel.propagation);
        const std::string tag = "mode " + std::to_string(k) + ": ";
        const double angle = g.lambda * series.step;

        double zeroth = 0.0;
        if (!series.terms.empty())
            zeroth = (series.terms.front().value - rotation_matrix_R(angle, Parity::Even)).cwiseAbs().maxCoeff();
        r.add(tag + "zeroth term is R(lambda t, even)", zeroth, threshold);

        double parity_residual = 0.0, split_residual = 0.0;
        Eigen::Matrix2cd even_sum = Eigen::Matrix2cd::Zero(), odd_sum = Eigen::Matrix2cd::Zero();
        for (const auto& term : series.terms) {
            const Eigen::Matrix2cd& t = term.value;
            if (parity_of(term.order) == Parity::Even) {
                parity_residual = std::max(parity_residual, std::abs(t(0, 0) - t(1, 1)) + std::abs(t(0, 1) - t(1, 0)));
                even_sum += t;
            } else {
                const Eigen::Matrix2cd e = sz * t;
                parity_residual = std::max(parity_residual, std::abs(e(0, 0) - e(1, 1)) + std::abs(e(0, 1) - e(1, 0)));
                odd_sum += t;
            }
            // Split the partial sum into an even-shaped part and sz times one.
            const Eigen::Matrix2cd partial = even_sum + odd_sum;
            const Complex p = 0.5 * (partial(0, 0) + partial(1, 1)), q = 0.5 * (partial(0, 1) + partial(1, 0));
            const Complex f1 = 0.5 * (partial(0, 0) - partial(1, 1)), f2 = 0.5 * (partial(0, 1) - partial(1, 0));
            Eigen::Matrix2cd even_part, odd_shape;
            even_part << p, q, q, p;
            odd_shape << f1, f2, f2, f1;
            split_residual = std::max({split_residual, (even_part - even_sum).cwiseAbs().maxCoeff(),
                                       (sz * odd_shape - odd_sum).cwiseAbs().maxCoeff()});
        }
        r.add(tag + "n-even terms are e^{i Theta sx}-shaped, n-odd terms are sz times that",
              parity_residual, threshold);
        r.add(tag + "partial sums split as even part + sz (even-shaped part)", split_residual, threshold);

        const Eigen::Matrix3d even_direct = pauli_conjugation(rotation_matrix_R(angle, Parity::Even));
        r.add(tag + "e^{i Theta sx} rotates the Pauli vector about x by 2 Theta",
              (even_direct - pauli_conjugation_even(angle)).cwiseAbs().maxCoeff(), threshold);
        const auto odd = pauli_conjugation_odd(angle);
        const Eigen::Matrix3d odd_direct = pauli_conjugation(rotation_matrix_R(angle, Parity::Odd));
        r.add(tag + "sz e^{i Theta sx} conjugation equals e^{i pi}[[1,0,0],[0,c,s],[0,s,-c]]",
              (odd_direct - odd.full()).cwiseAbs().maxCoeff(), threshold);
        r.add(tag + "conjugation maps have determinant 1",
              std::max(std::abs(pauli_conjugation_even(angle).determinant() - 1.0), std::abs(odd.determinant() - 1.0)),
              threshold);
        r.add(tag + "transpose of the proper rotation block is R(-2 Theta)",
              (proper_rotation_block(angle).transpose() - plane_rotation(-2.0 * angle)).cwiseAbs().maxCoeff(),
              threshold);
    }
    return r;
}

/// Polar split of a squeeze composed with a rotation.
inline StructureReport polar_structure(double squeeze, double angle, double threshold = kStructureThreshold) {
    StructureReport r;
    const Eigen::Matrix2d m = plane_rotation(angle) * squeeze_matrix(squeeze);
    const auto f = polar_factorize_symplectic(m);
    const double orth = (f.rotation.transpose() * f.rotation - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff();
    const double recon = (f.rotation * f.positive - m).cwiseAbs().maxCoeff();
    r.add("polar factors reconstruct squeeze * rotation", std::max(orth, recon), threshold);
    return r;
}

inline StructureReport kernel_structure_report(const oscillator::OscillatorKernel& osc,
                                               const oscillator::PropagatorPhases& phases,
                                               const spin::SpinKernel& spin_kernel, const SystemParams& sys,
                                               const SpinBathSpec& spin_bath,
                                               double threshold = kStructureThreshold) {
    StructureReport r = oscillator_structure(osc, phases, threshold);
    r.append(spin_structure(spin_kernel, sys, spin_bath, threshold));
    double angle = 0.0;
    if (!spin_kernel.modes.empty())
        angle = 2.0 * spin::generator(sys, spin_bath.modes[0], spin_kernel.sector, spin_kernel.propagation).lambda *
                spin_kernel.modes[0].step;
    r.append(polar_structure(phases.B.real(), angle, threshold));
    return r;
}

}  // namespace qnd::structure
