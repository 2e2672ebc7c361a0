// spin_propagator.hpp — Dyson-series propagator of a two-level system dephased
// by a bath of two-level systems
//
// Hamiltonian (hbar = 1, Pauli eigenvalues +-1, no factor 1/2 on the bath):
//   H = (w/2) Sz + sum_k w_k sz_k + (w/2) sum_k c_k sx_k Sz
//
// In the sector Sz = s each bath spin evolves independently under
// w_k sz + l_k sx with l_k = (w/2) c_k s. Expanding in w_k, the n-th term is
//
//   (i w_k)^n  int_{0 <= tau_1 <= ... <= tau_n <= t}  R_n(Theta)
//
//   R_n(Theta) = [[cos Theta, i sin Theta], [(-1)^n i sin Theta, (-1)^n cos Theta]]
//   Theta      = l_k A_n,   A_n = sum_j (-1)^{j+1} 2 tau_j + (-1)^n t
//
// and the series resums to exp(+i t (w_k sz + l_k sx)). The default
// propagation is therefore Backward (exp(+iHt)); Forward flips the signs of
// w_k and l_k. Bath spin basis: index 0 = sz eigenvalue +1.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qnd/core.hpp"
#include "qnd/linalg.hpp"
#include "qnd/pauli.hpp"
#include "qnd/quadrature.hpp"

namespace qnd::spin {

inline constexpr int kDefaultQuadratureOrder = 32;
inline constexpr Propagation kDefaultPropagation = Propagation::Backward;

// Per-step budgets: |w_k| dt <= 4 and the Theta oscillation 2 |l_k| dt <= 8.
inline constexpr double kMaxStepFrequencyPhase = 4.0;
inline constexpr double kMaxStepCouplingPhase = 8.0;
inline constexpr long kMaxTimeSteps = 4096;

inline double a_n(std::span<const double> taus, double t) {
    double prev = 0.0;
    for (double tau : taus) {
        if (!(tau >= prev) || tau > t)
            throw DomainError("a_n: times must satisfy 0 <= tau_1 <= ... <= tau_n <= t");
        prev = tau;
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < taus.size(); ++j) sum += ((j % 2 == 0) ? 2.0 : -2.0) * taus[j];
    return sum + ((taus.size() % 2 == 0) ? t : -t);
}

inline double coupling_frequency(const SystemParams& sys, double coupling, SpinSector s) {
    return (sys.omega / 2.0) * eigenvalue(s) * coupling;
}

inline double theta(const SystemParams& sys, double coupling, SpinSector s, double a_n_value) {
    return coupling_frequency(sys, coupling, s) * a_n_value;
}

// Per-mode generator: U(t) = exp(+i t (omega sz + lambda sx)).
struct ModeGenerator {
    double omega{0.0};
    double lambda{0.0};
};

inline ModeGenerator generator(const SystemParams& sys, const SpinMode& mode, SpinSector s,
                               Propagation p = kDefaultPropagation) {
    const double sign = exponent_sign(p);
    return {sign * mode.omega, sign * coupling_frequency(sys, mode.coupling, s)};
}

struct DysonTerm {
    std::size_t mode{0};
    int order{0};
    Eigen::Matrix2cd value;
};

// The n-th series term for one mode over [0, t].
inline Eigen::Matrix2cd dyson_term_matrix(const ModeGenerator& g, double t, int n,
                                          const quadrature::SimplexIntegrator& simplex) {
    if (n < 0) throw DomainError("Dyson order must be non-negative");
    if (!(t >= 0.0)) throw DomainError("Dyson terms need t >= 0");
    if (n == 0) return pauli::exp_i_sigma_x(g.lambda * t);

    std::vector<double> rates(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) rates[j] = ((j % 2 == 0) ? 2.0 : -2.0) * g.lambda;
    std::vector<double> negated(rates.size());
    std::transform(rates.begin(), rates.end(), negated.begin(), [](double r) { return -r; });

    const double parity = (n % 2 == 0) ? 1.0 : -1.0;
    const double offset = g.lambda * parity * t;
    const Complex plus = std::exp(kI * offset) * simplex.integrate_exponential(rates, t);
    const Complex minus = std::exp(-kI * offset) * simplex.integrate_exponential(negated, t);
    const Complex cos_integral = 0.5 * (plus + minus);
    const Complex sin_integral = (plus - minus) / (2.0 * kI);

    const Complex weight = std::pow(kI * g.omega, n);
    Eigen::Matrix2cd m;
    m << cos_integral, kI * sin_integral, parity * kI * sin_integral, parity * cos_integral;
    return weight * m;
}

inline DysonTerm dyson_term(const SystemParams& sys, const SpinMode& mode, SpinSector s, double t,
                            int n, int quadrature_order = kDefaultQuadratureOrder,
                            Propagation p = kDefaultPropagation) {
    const quadrature::SimplexIntegrator simplex(quadrature_order);
    return {0, n, dyson_term_matrix(generator(sys, mode, s, p), t, n, simplex)};
}

/// sum_{n > order} x^n / n!
inline double tail_bound(double x, int order) {
    x = std::abs(x);
    if (x == 0.0) return 0.0;
    const int first = order + 1;
    double term = std::exp(first * std::log(x) - std::lgamma(first + 1.0));
    double sum = 0.0;
    for (int n = first; term > 0.0; ++n) {
        sum += term;
        if (term < sum * 1e-17 && n > x) break;
        term *= x / (n + 1);
    }
    return sum;
}

// Error bound for a product of `steps` truncated factors each within `eps`.
inline double compounded_bound(double eps, long steps) {
    return std::expm1(static_cast<double>(steps) * std::log1p(eps));
}

struct SeriesPlan {
    long time_steps{1};
    int order{0};
    double bound{0.0};
};

// Fewest time steps, then lowest order, meeting the tail bound.
inline SeriesPlan plan_series(const ModeGenerator& g, double t, const Tolerances& tol) {
    const double x = std::abs(g.omega) * t;
    const double y = 2.0 * std::abs(g.lambda) * t;
    long steps = std::max<long>({1L, static_cast<long>(std::ceil(x / kMaxStepFrequencyPhase)),
                                 static_cast<long>(std::ceil(y / kMaxStepCouplingPhase))});
    double best = std::numeric_limits<double>::infinity();
    while (steps <= kMaxTimeSteps) {
        for (int n = 0; n <= tol.max_dyson_order; ++n) {
            const double bound = compounded_bound(tail_bound(x / steps, n), steps);
            best = std::min(best, bound);
            if (bound < tol.rel_tol) return {steps, n, bound};
        }
        steps *= 2;
    }
    throw ConvergenceError("Dyson series: tail bound " + std::to_string(best) +
                               " above rel_tol at max_dyson_order " +
                               std::to_string(tol.max_dyson_order),
                           best);
}

struct ModeSeries {
    Eigen::Matrix2cd value;
    int order_used{0};
    double tail_bound{0.0};
    long time_steps{1};
    double step{0.0};
    std::vector<DysonTerm> terms;  // terms of a single step
};

// Partial sum through `order` over [0, t] without subdivision.
inline Eigen::Matrix2cd mode_propagator_at_order(const SystemParams& sys, const SpinMode& mode,
                                                 SpinSector s, double t, int order,
                                                 int quadrature_order = kDefaultQuadratureOrder,
                                                 Propagation p = kDefaultPropagation) {
    const quadrature::SimplexIntegrator simplex(quadrature_order);
    const auto g = generator(sys, mode, s, p);
    Eigen::Matrix2cd sum = Eigen::Matrix2cd::Zero();
    for (int n = 0; n <= order; ++n) sum += dyson_term_matrix(g, t, n, simplex);
    return sum;
}

inline ModeSeries mode_propagator_series(const SystemParams& sys, const SpinMode& mode,
                                         SpinSector s, double t, const Tolerances& tol,
                                         int quadrature_order = kDefaultQuadratureOrder,
                                         Propagation p = kDefaultPropagation) {
    tol.validate();
    if (!(t >= 0.0)) throw DomainError("propagation time must be >= 0");
    const quadrature::SimplexIntegrator simplex(quadrature_order);
    const auto g = generator(sys, mode, s, p);
    const auto plan = plan_series(g, t, tol);

    ModeSeries out;
    out.order_used = plan.order;
    out.tail_bound = plan.bound;
    out.time_steps = plan.time_steps;
    out.step = t / static_cast<double>(plan.time_steps);

    Eigen::Matrix2cd step_matrix = Eigen::Matrix2cd::Zero();
    for (int n = 0; n <= plan.order; ++n) {
        DysonTerm term{0, n, dyson_term_matrix(g, out.step, n, simplex)};
        step_matrix += term.value;
        out.terms.push_back(std::move(term));
    }
    out.value = Eigen::Matrix2cd::Identity();
    for (long i = 0; i < plan.time_steps; ++i) out.value = step_matrix * out.value;
    return out;
}

/// Closed form exp(+-i t (omega sz + lambda sx)), + for Backward.
inline Eigen::Matrix2cd exact_mode_propagator(double omega, double lambda, double t,
                                              Propagation p = kDefaultPropagation) {
    const double r = std::hypot(omega, lambda);
    if (r == 0.0) return Eigen::Matrix2cd::Identity();
    const Eigen::Matrix2cd n = (omega * pauli::sigma_z() + lambda * pauli::sigma_x()) / r;
    return std::cos(r * t) * Eigen::Matrix2cd::Identity() +
           exponent_sign(p) * kI * std::sin(r * t) * n;
}

struct SpinKernel {
    SpinSector sector{SpinSector::Up};
    Propagation propagation{kDefaultPropagation};
    Complex system_phase{1.0, 0.0};
    std::vector<ModeSeries> modes;

    int order_used() const {
        int n = 0;
        for (const auto& m : modes) n = std::max(n, m.order_used);
        return n;
    }

    // Bound on the error of the tensor product of the truncated factors.
    double tail_bound() const {
        double prod = 1.0;
        for (const auto& m : modes) prod *= 1.0 + m.tail_bound;
        return prod - 1.0;
    }

    Eigen::MatrixXcd bath_propagator() const {
        std::vector<Eigen::MatrixXcd> factors;
        factors.reserve(modes.size());
        for (const auto& m : modes) factors.emplace_back(m.value);
        return linalg::kron_all(factors);
    }

    Eigen::MatrixXcd sector_propagator() const { return system_phase * bath_propagator(); }
};

inline SpinKernel kernel_u3(const SystemParams& sys, const SpinBathSpec& bath, SpinSector s,
                            double t, const Tolerances& tol,
                            int quadrature_order = kDefaultQuadratureOrder,
                            Propagation p = kDefaultPropagation) {
    validate_system(sys);
    validate_bath(bath);
    SpinKernel k;
    k.sector = s;
    k.propagation = p;
    k.system_phase = std::exp(exponent_sign(p) * kI * (sys.omega / 2.0 * eigenvalue(s) * t));
    for (std::size_t i = 0; i < bath.size(); ++i) {
        auto series = mode_propagator_series(sys, bath.modes[i], s, t, tol, quadrature_order, p);
        for (auto& term : series.terms) term.mode = i;
        k.modes.push_back(std::move(series));
    }
    return k;
}

}  // namespace qnd::spin
