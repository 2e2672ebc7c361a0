// linalg.hpp — Small dense helpers shared by the propagators and the oracle

#pragma once

#include <cstddef>
#include <span>

#include <Eigen/Dense>

#include "qnd/core.hpp"

namespace qnd::linalg {

// Default cap on composite Hilbert-space dimensions.
inline constexpr Eigen::Index kDefaultDimensionCap = 4096;

// A (x) B, with A's index most significant.
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, Eigen::Dynamic> kron(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    using Scalar = typename DerivedA::Scalar;
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(a.rows() * b.rows(),
                                                               a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline Eigen::MatrixXcd kron_all(std::span<const Eigen::MatrixXcd> factors,
                                 Eigen::Index cap = kDefaultDimensionCap) {
    Eigen::Index rows = 1, cols = 1;
    for (const auto& f : factors) {
        rows *= f.rows();
        cols *= f.cols();
        if (rows > cap || cols > cap)
            throw CapacityError("tensor product dimension exceeds cap " + std::to_string(cap));
    }
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Identity(1, 1);
    for (const auto& f : factors) out = kron(out, f);
    return out;
}

// ||U^+ U - I|| in the Frobenius norm.
template <typename Derived>
double unitarity_defect(const Eigen::MatrixBase<Derived>& u) {
    const auto n = u.cols();
    return (u.adjoint() * u - Eigen::MatrixXcd::Identity(n, n)).norm();
}

template <typename Derived>
double hermiticity_defect(const Eigen::MatrixBase<Derived>& h) {
    return (h - h.adjoint()).cwiseAbs().maxCoeff();
}

}  // namespace qnd::linalg
