// oscillator_propagator.hpp — Bargmann-kernel propagator of a two-level system
// dephased by a harmonic-oscillator bath, with and without a resonant drive mode
//
// Hamiltonian (hbar = 1):
//   H = (w/2) sz + sum_k w_k b_k^+ b_k + (w/2) sum_k g_k (b_k + b_k^+) sz
// and the driven variant adds  W a^+ a - (W/2) sz.
//
// sz commutes with H, so the evolution splits into two bath-only sectors
// s = +1 / -1. The kernel is the matrix element between unnormalized coherent
// states ||a> = exp(a b^+)|0> of U = exp(-iHt):
//
//   K_s(a*, a') = exp(sum_k a*_k a'_k e^{-i w_k t}) * exp(A - s B)
//
// with
//   phi_k = (w/2)(g_k/w_k)(1 - e^{-i w_k t})
//   A     = i (w/2)^2 sum_k g_k^2/w_k t - (w/2)^2 sum_k g_k^2/w_k^2 (1 - e^{-i w_k t})
//   B     = sum_k phi_k (a*_k + a'_k) + i w t / 2
//
// so in the (spin-down, spin-up) ordering the sector block is
// e^A diag(e^B, e^-B). See docs/CONVENTIONS.md.

#pragma once

#include <cmath>
#include <optional>

#include <Eigen/Dense>

#include "qnd/core.hpp"

namespace qnd::oscillator {

struct PropagatorPhases {
    Complex A{0.0, 0.0};
    Complex B{0.0, 0.0};
    ComplexVector phi;
    std::optional<Complex> B2;
};

struct OscillatorKernel {
    Complex bath_prefactor{1.0, 0.0};
    std::optional<Complex> drive_prefactor;
    Complex down_entry{1.0, 0.0};  // e^{A+B}
    Complex up_entry{1.0, 0.0};    // e^{A-B}

    // e^{A - s B}
    Complex sector(SpinSector s) const noexcept {
        return s == SpinSector::Up ? up_entry : down_entry;
    }

    // Full Bargmann amplitude of sector s, prefactors included.
    Complex amplitude(SpinSector s) const noexcept {
        return bath_prefactor * drive_prefactor.value_or(Complex{1.0, 0.0}) * sector(s);
    }

    // e^A diag(e^B, e^-B), rows ordered (spin-down, spin-up).
    Eigen::Matrix2cd block() const {
        Eigen::Matrix2cd m = Eigen::Matrix2cd::Zero();
        m(0, 0) = down_entry;
        m(1, 1) = up_entry;
        return m;
    }
};

inline double require_drive(const SystemParams& sys) {
    if (!sys.drive_omega) throw ConfigurationError("driven propagator requires drive_omega");
    return *sys.drive_omega;
}

inline Complex phi_k(const SystemParams& sys, const OscillatorMode& mode, double t) {
    if (!(mode.omega > 0.0)) throw DomainError("phi_k: oscillator frequency must be > 0");
    return (sys.omega / 2.0) * (mode.coupling / mode.omega) *
           (1.0 - std::exp(-kI * (mode.omega * t)));
}

inline ComplexVector phi(const SystemParams& sys, const OscillatorBathSpec& bath, double t) {
    validate_bath(bath);
    ComplexVector out(static_cast<Eigen::Index>(bath.size()));
    for (std::size_t k = 0; k < bath.size(); ++k)
        out[static_cast<Eigen::Index>(k)] = phi_k(sys, bath.modes[k], t);
    return out;
}

inline Complex phase_A(const SystemParams& sys, const OscillatorBathSpec& bath, double t) {
    validate_system(sys);
    validate_bath(bath);
    const double half = sys.omega / 2.0;
    Complex linear{0.0, 0.0}, oscillating{0.0, 0.0};
    for (const auto& m : bath.modes) {
        const double g2 = m.coupling * m.coupling;
        linear += g2 / m.omega;
        oscillating += g2 / (m.omega * m.omega) * (1.0 - std::exp(-kI * (m.omega * t)));
    }
    return kI * half * half * linear * t - half * half * oscillating;
}

namespace detail {

inline Complex coupling_sum(const ComplexVector& phis, const CoherentPoint& alpha_star,
                            const CoherentPoint& alpha_prime) {
    require_same_length(phis, alpha_star, "coherent point (alpha*)");
    require_same_length(phis, alpha_prime, "coherent point (alpha')");
    Complex sum{0.0, 0.0};
    for (Eigen::Index k = 0; k < phis.size(); ++k) sum += phis[k] * (alpha_star[k] + alpha_prime[k]);
    return sum;
}

}  // namespace detail

inline Complex exponent_B(const SystemParams& sys, const OscillatorBathSpec& bath, double t,
                          const CoherentPoint& alpha_star, const CoherentPoint& alpha_prime) {
    validate_system(sys);
    return detail::coupling_sum(phi(sys, bath, t), alpha_star, alpha_prime) +
           kI * (sys.omega * t / 2.0);
}

inline Complex exponent_B2(const SystemParams& sys, const OscillatorBathSpec& bath, double t,
                           const CoherentPoint& alpha_star, const CoherentPoint& alpha_prime) {
    validate_system(sys);
    const double drive = require_drive(sys);
    return detail::coupling_sum(phi(sys, bath, t), alpha_star, alpha_prime) +
           kI * ((sys.omega - drive) * t / 2.0);
}

inline PropagatorPhases phases(const SystemParams& sys, const OscillatorBathSpec& bath, double t,
                               const CoherentPoint& alpha_star, const CoherentPoint& alpha_prime) {
    PropagatorPhases p;
    p.phi = phi(sys, bath, t);
    p.A = phase_A(sys, bath, t);
    p.B = exponent_B(sys, bath, t, alpha_star, alpha_prime);
    if (sys.drive_omega) p.B2 = exponent_B2(sys, bath, t, alpha_star, alpha_prime);
    return p;
}

namespace detail {

inline Complex bath_prefactor(const OscillatorBathSpec& bath, double t,
                              const CoherentPoint& alpha_star, const CoherentPoint& alpha_prime) {
    Complex exponent{0.0, 0.0};
    for (std::size_t k = 0; k < bath.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        exponent += alpha_star[i] * alpha_prime[i] * std::exp(-kI * (bath.modes[k].omega * t));
    }
    return std::exp(exponent);
}

}  // namespace detail

inline OscillatorKernel kernel_u1(const SystemParams& sys, const OscillatorBathSpec& bath, double t,
                                  const CoherentPoint& alpha_star, const CoherentPoint& alpha_prime) {
    const Complex A = phase_A(sys, bath, t);
    const Complex B = exponent_B(sys, bath, t, alpha_star, alpha_prime);
    OscillatorKernel k;
    k.bath_prefactor = detail::bath_prefactor(bath, t, alpha_star, alpha_prime);
    k.down_entry = std::exp(A + B);
    k.up_entry = std::exp(A - B);
    return k;
}

inline OscillatorKernel kernel_u2(const SystemParams& sys, const OscillatorBathSpec& bath, double t,
                                  Complex nu_star, Complex nu_prime,
                                  const CoherentPoint& alpha_star, const CoherentPoint& alpha_prime) {
    const double drive = require_drive(sys);
    const Complex A = phase_A(sys, bath, t);
    const Complex B2 = exponent_B2(sys, bath, t, alpha_star, alpha_prime);
    OscillatorKernel k;
    k.bath_prefactor = detail::bath_prefactor(bath, t, alpha_star, alpha_prime);
    k.drive_prefactor = std::exp(nu_star * nu_prime * std::exp(-kI * (drive * t)));
    k.down_entry = std::exp(A + B2);
    k.up_entry = std::exp(A - B2);
    return k;
}

// Gaussian factor turning a Bargmann kernel into a normalized coherent-state
// matrix element <bra| U |ket>.
inline double coherent_normalization(const CoherentPoint& bra, const CoherentPoint& ket) {
    return std::exp(-0.5 * bra.squaredNorm() - 0.5 * ket.squaredNorm());
}

/// <bra, nu_bra| U_s |ket, nu_ket> from a kernel evaluated at
/// alpha* = conj(bra), alpha' = ket (and nu* = conj(nu_bra), nu' = nu_ket).
inline Complex physical_matrix_element(const OscillatorKernel& kernel, SpinSector s,
                                       const CoherentPoint& bra, const CoherentPoint& ket,
                                       Complex nu_bra = {}, Complex nu_ket = {}) {
    require_same_length(bra, ket, "physical_matrix_element");
    const double drive_norm = std::exp(-0.5 * std::norm(nu_bra) - 0.5 * std::norm(nu_ket));
    return kernel.amplitude(s) * coherent_normalization(bra, ket) * drive_norm;
}

inline Complex matrix_element_u1(const SystemParams& sys, const OscillatorBathSpec& bath, double t,
                                 SpinSector s, const CoherentPoint& bra, const CoherentPoint& ket) {
    const auto k = kernel_u1(sys, bath, t, bra.conjugate(), ket);
    return physical_matrix_element(k, s, bra, ket);
}

inline Complex matrix_element_u2(const SystemParams& sys, const OscillatorBathSpec& bath, double t,
                                 SpinSector s, Complex nu_bra, Complex nu_ket,
                                 const CoherentPoint& bra, const CoherentPoint& ket) {
    const auto k = kernel_u2(sys, bath, t, std::conj(nu_bra), nu_ket, bra.conjugate(), ket);
    return physical_matrix_element(k, s, bra, ket, nu_bra, nu_ket);
}

/// Coherence ratio rho_{up,down}(t) / rho_{up,down}(0) of the reduced system
/// state for an equal superposition with the bath in vacuum. Each sector
/// drives the bath to the coherent state -s phi, so the ratio is
/// e^{-i w t} <phi|-phi> = e^{-i w t} exp(-2 sum_k |phi_k|^2).
///
/// A finite bath is quasi-periodic: the magnitude returns to 1 whenever
/// every w_k t is a multiple of 2 pi.
inline Complex dephasing_factor(const SystemParams& sys, const OscillatorBathSpec& bath, double t) {
    validate_system(sys);
    const ComplexVector p = phi(sys, bath, t);
    return std::exp(-kI * (sys.omega * t)) * coherent_overlap(p, ComplexVector(-p));
}

}  // namespace qnd::oscillator
