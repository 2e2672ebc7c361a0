// pauli.hpp — Pauli matrices in the (up, down) basis

#pragma once

#include <array>
#include <cmath>

#include <Eigen/Dense>

#include "qnd/core.hpp"

namespace qnd::pauli {

inline Eigen::Matrix2cd identity() { return Eigen::Matrix2cd::Identity(); }

inline Eigen::Matrix2cd sigma_x() {
    Eigen::Matrix2cd m;
    m << 0.0, 1.0, 1.0, 0.0;
    return m;
}

inline Eigen::Matrix2cd sigma_y() {
    Eigen::Matrix2cd m;
    m << 0.0, -kI, kI, 0.0;
    return m;
}

inline Eigen::Matrix2cd sigma_z() {
    Eigen::Matrix2cd m;
    m << 1.0, 0.0, 0.0, -1.0;
    return m;
}

inline std::array<Eigen::Matrix2cd, 3> vector() { return {sigma_x(), sigma_y(), sigma_z()}; }

// exp(i angle sigma_x) = cos(angle) I + i sin(angle) sigma_x
inline Eigen::Matrix2cd exp_i_sigma_x(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    Eigen::Matrix2cd m;
    m << c, kI * s, kI * s, c;
    return m;
}

}  // namespace qnd::pauli
