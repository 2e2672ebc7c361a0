// oracle.hpp — Brute-force reference dynamics on truncated Hilbert spaces
//
// Everything here is independent of the analytic propagators: Hamiltonians
// are assembled as dense matrices in the Fock / spin product basis,
// exponentiated through a Hermitian eigendecomposition, and compared against
// the kernels by the tests and the CLI.
//
// Layout: the system (when present) is the most significant factor, then the
// external drive mode (when present), then bath modes in list order. System
// and bath-spin index 0 is the +1 eigenvector of sz.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qnd/core.hpp"
#include "qnd/linalg.hpp"

namespace qnd::oracle {

using DenseOperator = Eigen::MatrixXcd;
using StateVector = Eigen::VectorXcd;

// Highest retained Fock level per mode (levels 0..n_max).
struct FockTruncation {
    std::vector<int> n_max;

    static FockTruncation uniform(std::size_t modes, int levels) {
        return {std::vector<int>(modes, levels)};
    }

    std::vector<Eigen::Index> dims() const {
        std::vector<Eigen::Index> d;
        d.reserve(n_max.size());
        for (int n : n_max) d.push_back(n + 1);
        return d;
    }
};

// Mixed-radix indexing over a product basis, first factor most significant.
class ProductLayout {
public:
    ProductLayout(std::vector<Eigen::Index> dims, Eigen::Index cap) : dims_(std::move(dims)) {
        strides_.assign(dims_.size(), 1);
        total_ = 1;
        for (std::size_t k = dims_.size(); k-- > 0;) {
            if (dims_[k] < 1) throw DimensionError("factor dimension must be positive");
            strides_[k] = total_;
            total_ *= dims_[k];
            if (total_ > cap)
                throw CapacityError("product dimension exceeds cap " + std::to_string(cap));
        }
    }

    Eigen::Index size() const noexcept { return total_; }
    std::size_t factors() const noexcept { return dims_.size(); }
    Eigen::Index dim(std::size_t k) const { return dims_[k]; }
    Eigen::Index stride(std::size_t k) const { return strides_[k]; }
    Eigen::Index digit(Eigen::Index index, std::size_t k) const {
        return (index / strides_[k]) % dims_[k];
    }

private:
    std::vector<Eigen::Index> dims_;
    std::vector<Eigen::Index> strides_;
    Eigen::Index total_{1};
};

// ------------------------------------------------------------- operators --

inline DenseOperator annihilation(int n_max) {
    if (n_max < 1) throw DimensionError("ladder operators need n_max >= 1");
    DenseOperator b = DenseOperator::Zero(n_max + 1, n_max + 1);
    for (int n = 1; n <= n_max; ++n) b(n - 1, n) = std::sqrt(static_cast<double>(n));
    return b;
}

inline DenseOperator creation(int n_max) { return annihilation(n_max).adjoint(); }

inline DenseOperator tensor_product(std::span<const DenseOperator> ops,
                                    Eigen::Index cap = linalg::kDefaultDimensionCap) {
    return linalg::kron_all(ops, cap);
}

inline StateVector tensor_product(std::span<const StateVector> states,
                                  Eigen::Index cap = linalg::kDefaultDimensionCap) {
    Eigen::Index dim = 1;
    for (const auto& s : states) {
        dim *= s.size();
        if (dim > cap) throw CapacityError("tensor product dimension exceeds cap " + std::to_string(cap));
    }
    StateVector out = StateVector::Ones(1);
    for (const auto& s : states) out = linalg::kron(out, s);
    return out;
}

// ---------------------------------------------------------- Hamiltonians --

namespace detail {

struct OscillatorAssembly {
    std::optional<SpinSector> fixed_sector;  // empty: include the system factor
    std::optional<int> drive_levels;
};

inline DenseOperator assemble_oscillator(const SystemParams& sys, const OscillatorBathSpec& bath,
                                         const FockTruncation& trunc,
                                         const OscillatorAssembly& how, Eigen::Index cap) {
    validate_system(sys);
    validate_bath(bath);
    if (trunc.n_max.size() != bath.size())
        throw DimensionError("truncation has " + std::to_string(trunc.n_max.size()) +
                             " modes, bath has " + std::to_string(bath.size()));
    for (int n : trunc.n_max)
        if (n < 1) throw DimensionError("n_max must be >= 1");
    const double drive = how.drive_levels ? *sys.drive_omega : 0.0;
    if (how.drive_levels && !sys.drive_omega)
        throw ConfigurationError("driven Hamiltonian requires drive_omega");

    std::vector<Eigen::Index> dims;
    if (!how.fixed_sector) dims.push_back(2);
    if (how.drive_levels) dims.push_back(*how.drive_levels + 1);
    const std::size_t first_bath = dims.size();
    for (int n : trunc.n_max) dims.push_back(n + 1);
    const ProductLayout layout(dims, cap);

    const double half = sys.omega / 2.0;
    DenseOperator h = DenseOperator::Zero(layout.size(), layout.size());
    for (Eigen::Index i = 0; i < layout.size(); ++i) {
        const double s = how.fixed_sector ? eigenvalue(*how.fixed_sector)
                                          : (layout.digit(i, 0) == 0 ? 1.0 : -1.0);
        double diag = s * half;
        if (how.drive_levels) {
            const auto n_ext = static_cast<double>(layout.digit(i, first_bath - 1));
            diag += drive * n_ext - s * drive / 2.0;
        }
        for (std::size_t k = 0; k < bath.size(); ++k) {
            const auto n = layout.digit(i, first_bath + k);
            diag += bath.modes[k].omega * static_cast<double>(n);
            if (n + 1 < layout.dim(first_bath + k)) {
                const Eigen::Index j = i + layout.stride(first_bath + k);
                const double v = s * half * bath.modes[k].coupling * std::sqrt(static_cast<double>(n + 1));
                h(j, i) += v;
                h(i, j) += v;
            }
        }
        h(i, i) += diag;
    }
    return h;
}

}  // namespace detail

/// H_s = s w/2 + sum_k w_k b_k^+ b_k + s (w/2) sum_k g_k (b_k + b_k^+)
inline DenseOperator build_sector_hamiltonian_oscillator(const SystemParams& sys,
                                                         const OscillatorBathSpec& bath,
                                                         SpinSector s, const FockTruncation& trunc,
                                                         Eigen::Index cap = linalg::kDefaultDimensionCap) {
    return detail::assemble_oscillator(sys, bath, trunc, {s, std::nullopt}, cap);
}

/// Full system (x) [drive mode] (x) bath Hamiltonian. With drive_levels set,
/// the external mode W a^+ a - (W/2) sz is included, truncated at that level.
inline DenseOperator build_full_hamiltonian_oscillator(const SystemParams& sys,
                                                       const OscillatorBathSpec& bath,
                                                       const FockTruncation& trunc,
                                                       std::optional<int> drive_levels = std::nullopt,
                                                       Eigen::Index cap = linalg::kDefaultDimensionCap) {
    return detail::assemble_oscillator(sys, bath, trunc, {std::nullopt, drive_levels}, cap);
}

namespace detail {

inline void check_spin_cap(const SpinBathSpec& bath, std::size_t max_modes) {
    if (bath.size() > max_modes)
        throw CapacityError("spin bath with " + std::to_string(bath.size()) +
                            " modes exceeds cap of " + std::to_string(max_modes));
}

inline DenseOperator assemble_spin(const SystemParams& sys, const SpinBathSpec& bath,
                                   std::optional<SpinSector> fixed_sector) {
    validate_system(sys);
    validate_bath(bath);
    std::vector<Eigen::Index> dims;
    if (!fixed_sector) dims.push_back(2);
    const std::size_t first_bath = dims.size();
    for (std::size_t k = 0; k < bath.size(); ++k) dims.push_back(2);
    const ProductLayout layout(dims, std::numeric_limits<Eigen::Index>::max());

    const double half = sys.omega / 2.0;
    DenseOperator h = DenseOperator::Zero(layout.size(), layout.size());
    for (Eigen::Index i = 0; i < layout.size(); ++i) {
        const double s = fixed_sector ? eigenvalue(*fixed_sector)
                                      : (layout.digit(i, 0) == 0 ? 1.0 : -1.0);
        double diag = s * half;
        for (std::size_t k = 0; k < bath.size(); ++k) {
            const auto bit = layout.digit(i, first_bath + k);
            diag += bath.modes[k].omega * (bit == 0 ? 1.0 : -1.0);
            const Eigen::Index stride = layout.stride(first_bath + k);
            const Eigen::Index j = bit == 0 ? i + stride : i - stride;
            h(j, i) += s * half * bath.modes[k].coupling;
        }
        h(i, i) += diag;
    }
    return h;
}

}  // namespace detail

inline constexpr std::size_t kMaxSpinModes = 11;

/// H_s = s w/2 + sum_k (w_k sz_k + s (w/2) c_k sx_k) on 2^M states.
inline DenseOperator build_sector_hamiltonian_spin(const SystemParams& sys, const SpinBathSpec& bath,
                                                   SpinSector s, std::size_t max_modes = kMaxSpinModes) {
    detail::check_spin_cap(bath, max_modes);
    return detail::assemble_spin(sys, bath, s);
}

inline DenseOperator build_full_hamiltonian_spin(const SystemParams& sys, const SpinBathSpec& bath,
                                                 std::size_t max_modes = kMaxSpinModes) {
    detail::check_spin_cap(bath, max_modes);
    return detail::assemble_spin(sys, bath, std::nullopt);
}

// Diagonal block of a system-first operator for sector s.
inline DenseOperator sector_block(const DenseOperator& full, SpinSector s) {
    if (full.rows() != full.cols() || full.rows() % 2 != 0)
        throw DimensionError("sector_block needs a square operator of even dimension");
    const Eigen::Index n = full.rows() / 2;
    const Eigen::Index off = static_cast<Eigen::Index>(system_index(s)) * n;
    return full.block(off, off, n, n);
}

// --------------------------------------------------------- exponentials --

/// Eigendecomposition H = V diag(e) V^+, reused for every time.
class HermitianSpectrum {
public:
    explicit HermitianSpectrum(const DenseOperator& h, double hermiticity_tol = 1e-10) {
        if (h.rows() != h.cols()) throw DimensionError("Hamiltonian must be square");
        if (h.size() == 0) throw DimensionError("Hamiltonian is empty");
        const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
        if (linalg::hermiticity_defect(h) > hermiticity_tol * scale)
            throw DomainError("unitary_exponential: operator is not Hermitian");
        if (h.imag().cwiseAbs().maxCoeff() == 0.0) {
            const Eigen::MatrixXd real = h.real();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(real);
            if (es.info() != Eigen::Success) throw Error("eigendecomposition failed");
            values_ = es.eigenvalues();
            vectors_ = es.eigenvectors().cast<Complex>();
        } else {
            Eigen::SelfAdjointEigenSolver<DenseOperator> es(h);
            if (es.info() != Eigen::Success) throw Error("eigendecomposition failed");
            values_ = es.eigenvalues();
            vectors_ = es.eigenvectors();
        }
    }

    Eigen::Index dim() const noexcept { return values_.size(); }
    const Eigen::VectorXd& eigenvalues() const noexcept { return values_; }
    const DenseOperator& eigenvectors() const noexcept { return vectors_; }

    DenseOperator unitary(double t, Propagation p = Propagation::Forward) const {
        return vectors_ * phases(t, p).asDiagonal() * vectors_.adjoint();
    }

    StateVector evolve(const StateVector& v, double t, Propagation p = Propagation::Forward) const {
        if (v.size() != dim()) throw DimensionError("state dimension does not match Hamiltonian");
        const StateVector coeffs = vectors_.adjoint() * v;
        return vectors_ * phases(t, p).cwiseProduct(coeffs);
    }

    // <bra| U(t) |ket>
    Complex matrix_element(const StateVector& bra, const StateVector& ket, double t,
                           Propagation p = Propagation::Forward) const {
        if (bra.size() != dim() || ket.size() != dim())
            throw DimensionError("state dimension does not match Hamiltonian");
        const StateVector left = vectors_.adjoint() * bra;
        const StateVector right = vectors_.adjoint() * ket;
        return (left.conjugate().cwiseProduct(phases(t, p)).cwiseProduct(right)).sum();
    }

private:
    Eigen::VectorXcd phases(double t, Propagation p) const {
        const double sign = exponent_sign(p);
        Eigen::VectorXcd out(values_.size());
        for (Eigen::Index i = 0; i < values_.size(); ++i) out[i] = std::exp(kI * (sign * values_[i] * t));
        return out;
    }

    Eigen::VectorXd values_;
    DenseOperator vectors_;
};

inline DenseOperator unitary_exponential(const DenseOperator& h, double t,
                                         Propagation p = Propagation::Forward) {
    return HermitianSpectrum(h).unitary(t, p);
}

// -------------------------------------------------------- coherent states --

namespace detail {

// Unnormalized truncated amplitudes e^{-|a|^2/2} a^n / sqrt(n!), n <= n_max,
// and the exact population at levels >= n_max - 1 (including levels dropped).
inline std::pair<StateVector, double> coherent_amplitudes(Complex alpha, int n_max) {
    StateVector v(n_max + 1);
    Complex a = std::exp(-0.5 * std::norm(alpha));
    v[0] = a;
    for (int n = 1; n <= n_max; ++n) {
        a *= alpha / std::sqrt(static_cast<double>(n));
        v[n] = a;
    }
    double tail = 0.0;
    double term = std::norm(v[std::max(0, n_max - 1)]);
    const double r2 = std::norm(alpha);
    for (int n = std::max(0, n_max - 1); term > 0.0; ++n) {
        tail += term;
        if (term < tail * 1e-17 && n > r2) break;
        term *= r2 / (n + 1);
    }
    return {v, std::min(tail, 1.0)};
}

}  // namespace detail

/// Truncated coherent state, renormalized. Throws TruncationError when the
/// population at or above level n_max - 1 is not below rel_tol.
inline StateVector coherent_state_vector(Complex alpha, int n_max, double rel_tol = 1e-9) {
    if (n_max < 1) throw DimensionError("coherent state needs n_max >= 1");
    auto [v, top] = detail::coherent_amplitudes(alpha, n_max);
    if (!(top < rel_tol))
        throw TruncationError("coherent state |alpha| = " + std::to_string(std::abs(alpha)) +
                                  " not resolved with n_max = " + std::to_string(n_max),
                              top, n_max);
    return v / v.norm();
}

// Population of each factor's top two retained levels.
inline std::vector<double> top_levels_populations(const StateVector& psi,
                                                  std::span<const Eigen::Index> dims) {
    const ProductLayout layout(std::vector<Eigen::Index>(dims.begin(), dims.end()),
                               std::numeric_limits<Eigen::Index>::max());
    if (layout.size() != psi.size()) throw DimensionError("state does not match layout");
    std::vector<double> pops(dims.size(), 0.0);
    for (Eigen::Index i = 0; i < psi.size(); ++i) {
        const double p = std::norm(psi[i]);
        if (p == 0.0) continue;
        for (std::size_t k = 0; k < dims.size(); ++k)
            if (layout.digit(i, k) + 2 >= dims[k]) pops[k] += p;
    }
    return pops;
}

// ---------------------------------------------------------- partial trace --

namespace detail {

struct TraceSplit {
    Eigen::Index kept_dim{1};
    Eigen::Index traced_dim{1};
    std::vector<Eigen::Index> kept_index;    // per full index
    std::vector<Eigen::Index> traced_index;  // per full index
};

inline TraceSplit split(std::span<const Eigen::Index> dims, std::span<const std::size_t> keep) {
    const ProductLayout layout(std::vector<Eigen::Index>(dims.begin(), dims.end()),
                               std::numeric_limits<Eigen::Index>::max());
    std::vector<bool> kept(dims.size(), false);
    for (auto k : keep) {
        if (k >= dims.size()) throw DimensionError("partial_trace: subsystem index out of range");
        kept[k] = true;
    }
    TraceSplit s;
    for (std::size_t k = 0; k < dims.size(); ++k) (kept[k] ? s.kept_dim : s.traced_dim) *= dims[k];
    s.kept_index.resize(layout.size());
    s.traced_index.resize(layout.size());
    for (Eigen::Index i = 0; i < layout.size(); ++i) {
        Eigen::Index a = 0, b = 0;
        for (std::size_t k = 0; k < dims.size(); ++k) {
            const auto d = layout.digit(i, k);
            if (kept[k]) a = a * dims[k] + d;
            else b = b * dims[k] + d;
        }
        s.kept_index[i] = a;
        s.traced_index[i] = b;
    }
    return s;
}

}  // namespace detail

/// Reduced operator on the subsystems listed in `keep` (kept in layout order).
inline DenseOperator partial_trace(const DenseOperator& rho, std::span<const Eigen::Index> dims,
                                   std::span<const std::size_t> keep) {
    Eigen::Index total = 1;
    for (auto d : dims) total *= d;
    if (rho.rows() != total || rho.cols() != total)
        throw DimensionError("partial_trace: operator dimension does not factorize as declared");
    const auto s = detail::split(dims, keep);
    // full index for (kept, traced)
    Eigen::MatrixX<Eigen::Index> full(s.kept_dim, s.traced_dim);
    for (Eigen::Index i = 0; i < total; ++i) full(s.kept_index[i], s.traced_index[i]) = i;
    DenseOperator out = DenseOperator::Zero(s.kept_dim, s.kept_dim);
    for (Eigen::Index b = 0; b < s.traced_dim; ++b)
        for (Eigen::Index a1 = 0; a1 < s.kept_dim; ++a1)
            for (Eigen::Index a2 = 0; a2 < s.kept_dim; ++a2) out(a1, a2) += rho(full(a1, b), full(a2, b));
    return out;
}

/// partial_trace(|psi><psi|) without forming the full projector.
inline DenseOperator partial_trace_pure(const StateVector& psi, std::span<const Eigen::Index> dims,
                                        std::span<const std::size_t> keep) {
    Eigen::Index total = 1;
    for (auto d : dims) total *= d;
    if (psi.size() != total) throw DimensionError("partial_trace: state dimension does not factorize");
    const auto s = detail::split(dims, keep);
    DenseOperator m = DenseOperator::Zero(s.kept_dim, s.traced_dim);
    for (Eigen::Index i = 0; i < total; ++i) m(s.kept_index[i], s.traced_index[i]) = psi[i];
    return m * m.adjoint();
}

// ------------------------------------------------------- bath-level oracles --

namespace detail {

inline StateVector joint_state(const Eigen::Vector2cd& system_state, const StateVector& up_branch,
                               const StateVector& down_branch) {
    StateVector psi(2 * up_branch.size());
    psi << system_state[0] * up_branch, system_state[1] * down_branch;
    return psi;
}

}  // namespace detail

/// Sector spectra of an oscillator bath (optionally with the external drive
/// mode), built once per truncation.
class OscillatorOracle {
public:
    OscillatorOracle(const SystemParams& sys, const OscillatorBathSpec& bath, FockTruncation trunc,
                     std::optional<int> drive_levels = std::nullopt,
                     Eigen::Index cap = linalg::kDefaultDimensionCap)
        : trunc_(std::move(trunc)), drive_levels_(drive_levels),
          up_(sector_hamiltonian(sys, bath, SpinSector::Up, cap)),
          down_(sector_hamiltonian(sys, bath, SpinSector::Down, cap)) {}

    const FockTruncation& truncation() const noexcept { return trunc_; }
    std::optional<int> drive_levels() const noexcept { return drive_levels_; }

    // Factor dimensions of the bath-level space: [drive], modes...
    std::vector<Eigen::Index> dims() const {
        std::vector<Eigen::Index> d;
        if (drive_levels_) d.push_back(*drive_levels_ + 1);
        for (auto n : trunc_.dims()) d.push_back(n);
        return d;
    }

    const HermitianSpectrum& spectrum(SpinSector s) const { return s == SpinSector::Up ? up_ : down_; }

    StateVector coherent_state(const CoherentPoint& alpha, Complex nu = {}, double rel_tol = 1e-9) const {
        if (static_cast<std::size_t>(alpha.size()) != trunc_.n_max.size())
            throw DimensionError("coherent point length does not match bath");
        std::vector<StateVector> factors;
        if (drive_levels_) factors.push_back(coherent_state_vector(nu, *drive_levels_, rel_tol));
        for (std::size_t k = 0; k < trunc_.n_max.size(); ++k)
            factors.push_back(coherent_state_vector(alpha[static_cast<Eigen::Index>(k)], trunc_.n_max[k], rel_tol));
        return tensor_product(factors, std::numeric_limits<Eigen::Index>::max());
    }

    StateVector evolve(SpinSector s, const StateVector& ket, double t,
                       Propagation p = Propagation::Forward) const {
        return spectrum(s).evolve(ket, t, p);
    }

    Complex matrix_element(SpinSector s, double t, const StateVector& bra, const StateVector& ket,
                           Propagation p = Propagation::Forward) const {
        return spectrum(s).matrix_element(bra, ket, t, p);
    }

    /// Evolve (system (x) bath) from a product state and trace out the bath.
    /// system_state index 0 = spin-up.
    Eigen::Matrix2cd reduced_density_matrix(const Eigen::Vector2cd& system_state,
                                            const StateVector& bath_state, double t) const {
        const StateVector psi = detail::joint_state(system_state, evolve(SpinSector::Up, bath_state, t),
                                                    evolve(SpinSector::Down, bath_state, t));
        std::vector<Eigen::Index> d{2};
        for (auto n : dims()) d.push_back(n);
        const std::size_t keep[] = {0};
        return partial_trace_pure(psi, d, keep);
    }

    double max_top_population(const StateVector& state) const {
        const auto d = dims();
        const auto pops = top_levels_populations(state, d);
        return pops.empty() ? 0.0 : *std::max_element(pops.begin(), pops.end());
    }

private:
    DenseOperator sector_hamiltonian(const SystemParams& sys, const OscillatorBathSpec& bath,
                                     SpinSector s, Eigen::Index cap) const {
        if (drive_levels_) {
            // Block of the full driven Hamiltonian.
            return sector_block(build_full_hamiltonian_oscillator(sys, bath, trunc_, drive_levels_, 2 * cap), s);
        }
        return build_sector_hamiltonian_oscillator(sys, bath, s, trunc_, cap);
    }

    FockTruncation trunc_;
    std::optional<int> drive_levels_;
    HermitianSpectrum up_;
    HermitianSpectrum down_;
};

// A coherent state used by a comparison, both as a bra and as an evolved ket.
struct OracleProbe {
    CoherentPoint alpha;
    Complex nu{0.0, 0.0};
};

inline constexpr int kInitialFockLevels = 8;

/// Oracle whose per-mode truncation is doubled until every probe state, and
/// every probe evolved to every requested time in both sectors, keeps its
/// top-two-level population below rel_tol. Throws TruncationError once a mode
/// would need more than max_fock levels.
inline OscillatorOracle adequate_oscillator_oracle(const SystemParams& sys, const OscillatorBathSpec& bath,
                                                   std::span<const OracleProbe> probes,
                                                   std::span<const double> times, const Tolerances& tol,
                                                   bool driven = false,
                                                   Eigen::Index cap = linalg::kDefaultDimensionCap) {
    tol.validate();
    const int start = std::min(kInitialFockLevels, tol.max_fock);
    const std::size_t offset = driven ? 1 : 0;
    std::vector<int> levels(bath.size() + offset, start);

    for (;;) {
        FockTruncation trunc{std::vector<int>(levels.begin() + static_cast<long>(offset), levels.end())};
        std::optional<int> drive_levels;
        if (driven) drive_levels = levels[0];

        std::vector<double> worst(levels.size(), 0.0);
        auto absorb = [&](const std::vector<double>& pops) {
            for (std::size_t k = 0; k < pops.size(); ++k) worst[k] = std::max(worst[k], pops[k]);
        };
        std::vector<Eigen::Index> dims;
        for (int n : levels) dims.push_back(n + 1);

        // Initial states first; an unresolved probe never reaches the build.
        std::vector<StateVector> states;
        for (const auto& probe : probes) {
            std::vector<StateVector> factors;
            std::vector<double> pops;
            auto add = [&](Complex a, int n) {
                auto [v, top] = detail::coherent_amplitudes(a, n);
                factors.push_back(v / v.norm());
                pops.push_back(top);
            };
            if (driven) add(probe.nu, levels[0]);
            if (static_cast<std::size_t>(probe.alpha.size()) != bath.size())
                throw DimensionError("probe length does not match bath");
            for (std::size_t k = 0; k < bath.size(); ++k)
                add(probe.alpha[static_cast<Eigen::Index>(k)], levels[k + offset]);
            absorb(pops);
            states.push_back(tensor_product(factors, std::numeric_limits<Eigen::Index>::max()));
        }

        bool initial_ok = std::all_of(worst.begin(), worst.end(), [&](double p) { return p < tol.rel_tol; });
        if (initial_ok) {
            OscillatorOracle oracle(sys, bath, trunc, drive_levels, cap);
            for (const auto& psi : states)
                for (double t : times)
                    for (auto s : kSectors) absorb(top_levels_populations(oracle.evolve(s, psi, t), dims));
            if (std::all_of(worst.begin(), worst.end(), [&](double p) { return p < tol.rel_tol; }))
                return oracle;
        }

        for (std::size_t k = 0; k < levels.size(); ++k) {
            if (worst[k] < tol.rel_tol) continue;
            if (levels[k] >= tol.max_fock)
                throw TruncationError("Fock truncation inadequate: mode " + std::to_string(k) +
                                          " keeps top-level population " + std::to_string(worst[k]) +
                                          " at n_max = " + std::to_string(levels[k]),
                                      worst[k], levels[k]);
            levels[k] = std::min(2 * levels[k], tol.max_fock);
        }
    }
}

/// Reduced system density matrix for an oscillator bath prepared in a
/// coherent state, with automatic truncation.
inline Eigen::Matrix2cd reduced_density_matrix(const SystemParams& sys, const OscillatorBathSpec& bath,
                                               const Eigen::Vector2cd& system_state,
                                               const CoherentPoint& bath_point, double t,
                                               const Tolerances& tol) {
    const OracleProbe probe{bath_point, {}};
    const double times[] = {t};
    const auto oracle = adequate_oscillator_oracle(sys, bath, std::span(&probe, 1), times, tol);
    return oracle.reduced_density_matrix(system_state, oracle.coherent_state(bath_point, {}, tol.rel_tol), t);
}

/// Full and sector spectra of a spin bath.
class SpinOracle {
public:
    SpinOracle(const SystemParams& sys, const SpinBathSpec& bath)
        : modes_(bath.size()),
          full_(build_full_hamiltonian_spin(sys, bath)),
          up_(build_sector_hamiltonian_spin(sys, bath, SpinSector::Up)),
          down_(build_sector_hamiltonian_spin(sys, bath, SpinSector::Down)) {}

    std::size_t modes() const noexcept { return modes_; }
    const HermitianSpectrum& full() const noexcept { return full_; }
    const HermitianSpectrum& spectrum(SpinSector s) const { return s == SpinSector::Up ? up_ : down_; }

    // Sector block of the full-space exponential.
    DenseOperator sector_unitary(SpinSector s, double t, Propagation p = Propagation::Forward) const {
        return sector_block(full_.unitary(t, p), s);
    }

    Eigen::Matrix2cd reduced_density_matrix(const Eigen::Vector2cd& system_state,
                                            const StateVector& bath_state, double t) const {
        const StateVector psi = detail::joint_state(system_state, up_.evolve(bath_state, t),
                                                    down_.evolve(bath_state, t));
        const std::vector<Eigen::Index> d(modes_ + 1, 2);
        const std::size_t keep[] = {0};
        return partial_trace_pure(psi, d, keep);
    }

private:
    std::size_t modes_;
    HermitianSpectrum full_;
    HermitianSpectrum up_;
    HermitianSpectrum down_;
};

}  // namespace qnd::oracle
