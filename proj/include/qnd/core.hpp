// core.hpp — Shared types, coherent-state algebra and parameter validation

#pragma once

#include <array>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace qnd {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;

// Coherent-state labels, one amplitude per bath mode in bath list order.
using CoherentPoint = Eigen::VectorXcd;

inline constexpr Complex kI{0.0, 1.0};

// ----------------------------------------------------------------- errors --

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ConfigurationError : public Error {
public:
    using Error::Error;
};

class CapacityError : public Error {
public:
    using Error::Error;
};

// Series truncation could not reach the requested tail bound.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double achieved_bound)
        : Error(what), achieved_bound_(achieved_bound) {}
    double achieved_bound() const noexcept { return achieved_bound_; }

private:
    double achieved_bound_;
};

// Fock truncation is not adequate: too much population near the cutoff.
class TruncationError : public Error {
public:
    TruncationError(const std::string& what, double top_population, int n_max)
        : Error(what), top_population_(top_population), n_max_(n_max) {}
    double top_population() const noexcept { return top_population_; }
    int n_max() const noexcept { return n_max_; }

private:
    double top_population_;
    int n_max_;
};

struct BathIssue {
    std::size_t mode;
    std::string reason;
};

class ValidationError : public Error {
public:
    explicit ValidationError(std::vector<BathIssue> issues)
        : Error(format(issues)), issues_(std::move(issues)) {}
    const std::vector<BathIssue>& issues() const noexcept { return issues_; }

private:
    static std::string format(const std::vector<BathIssue>& issues) {
        std::ostringstream os;
        os << "invalid bath:";
        for (const auto& i : issues) os << " [mode " << i.mode << ": " << i.reason << "]";
        return os.str();
    }
    std::vector<BathIssue> issues_;
};

// ------------------------------------------------------------ conventions --

// Eigenvalue of the conserved system operator (sigma_z or S_z), Pauli-like.
enum class SpinSector : int { Down = -1, Up = +1 };

inline constexpr double eigenvalue(SpinSector s) noexcept { return static_cast<int>(s); }
inline constexpr SpinSector flipped(SpinSector s) noexcept {
    return s == SpinSector::Up ? SpinSector::Down : SpinSector::Up;
}
inline constexpr std::array<SpinSector, 2> kSectors{SpinSector::Up, SpinSector::Down};

inline SpinSector sector_from_int(int s) {
    if (s == 1) return SpinSector::Up;
    if (s == -1) return SpinSector::Down;
    throw DomainError("spin sector must be +1 or -1, got " + std::to_string(s));
}

// Index of a sector in a system-space basis: 0 = spin-up, 1 = spin-down.
inline constexpr std::size_t system_index(SpinSector s) noexcept {
    return s == SpinSector::Up ? 0 : 1;
}

// Forward is exp(-iHt); Backward is exp(+iHt).
enum class Propagation { Forward, Backward };

inline constexpr double exponent_sign(Propagation p) noexcept {
    return p == Propagation::Forward ? -1.0 : 1.0;
}

// ------------------------------------------------------------------ types --

struct SystemParams {
    double omega{1.0};                  // two-level splitting
    std::optional<double> drive_omega;  // external mode frequency
};

struct OscillatorMode {
    double omega{1.0};
    double coupling{0.0};
};

struct OscillatorBathSpec {
    std::vector<OscillatorMode> modes;
    std::size_t size() const noexcept { return modes.size(); }
};

struct SpinMode {
    double omega{1.0};
    double coupling{0.0};
};

struct SpinBathSpec {
    std::vector<SpinMode> modes;
    std::size_t size() const noexcept { return modes.size(); }
};

struct Tolerances {
    double rel_tol{1e-9};
    double abs_tol{1e-12};
    int max_fock{64};
    int max_dyson_order{10};

    const Tolerances& validate() const {
        if (!(rel_tol > 0.0) || !std::isfinite(rel_tol))
            throw ConfigurationError("rel_tol must be positive and finite");
        if (!(abs_tol > 0.0) || !std::isfinite(abs_tol))
            throw ConfigurationError("abs_tol must be positive and finite");
        if (max_fock < 2) throw ConfigurationError("max_fock must be at least 2");
        if (max_dyson_order < 0) throw ConfigurationError("max_dyson_order must be non-negative");
        return *this;
    }
};

// ------------------------------------------------------------- validation --

inline const SystemParams& validate_system(const SystemParams& sys) {
    if (!std::isfinite(sys.omega)) throw DomainError("system omega must be finite");
    if (sys.drive_omega && !std::isfinite(*sys.drive_omega))
        throw DomainError("drive omega must be finite");
    return sys;
}

inline const OscillatorBathSpec& validate_bath(const OscillatorBathSpec& bath) {
    std::vector<BathIssue> issues;
    for (std::size_t k = 0; k < bath.modes.size(); ++k) {
        const auto& m = bath.modes[k];
        if (!std::isfinite(m.omega) || !std::isfinite(m.coupling))
            issues.push_back({k, "non-finite entry"});
        else if (!(m.omega > 0.0))
            issues.push_back({k, "division-by-frequency: oscillator frequency must be > 0"});
    }
    if (!issues.empty()) throw ValidationError(std::move(issues));
    return bath;
}

// Spin-bath frequencies may carry either sign; nothing divides by them.
inline const SpinBathSpec& validate_bath(const SpinBathSpec& bath) {
    std::vector<BathIssue> issues;
    for (std::size_t k = 0; k < bath.modes.size(); ++k) {
        const auto& m = bath.modes[k];
        if (!std::isfinite(m.omega) || !std::isfinite(m.coupling))
            issues.push_back({k, "non-finite entry"});
    }
    if (!issues.empty()) throw ValidationError(std::move(issues));
    return bath;
}

// ------------------------------------------------------- coherent algebra --

inline void require_same_length(const ComplexVector& a, const ComplexVector& b, const char* what) {
    if (a.size() != b.size()) {
        std::ostringstream os;
        os << what << ": length mismatch (" << a.size() << " vs " << b.size() << ")";
        throw DimensionError(os.str());
    }
}

/// Overlap <alpha'|alpha> of normalized multimode coherent states:
/// exp(-|alpha'|^2/2 - |alpha|^2/2 + conj(alpha') . alpha).
inline Complex coherent_overlap(const ComplexVector& alpha_prime, const ComplexVector& alpha) {
    require_same_length(alpha_prime, alpha, "coherent_overlap");
    Complex exponent{0.0, 0.0};
    for (Eigen::Index k = 0; k < alpha.size(); ++k) {
        exponent += -0.5 * std::norm(alpha_prime[k]) - 0.5 * std::norm(alpha[k]) +
                    std::conj(alpha_prime[k]) * alpha[k];
    }
    return std::exp(exponent);
}

// |a - ref| / max(|ref|, floor).
inline double scaled_residual(Complex a, Complex ref, double floor) {
    return std::abs(a - ref) / std::max(std::abs(ref), floor);
}

}  // namespace qnd
