// support.hpp — Shared helpers for the test binaries

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "qnd/core.hpp"

namespace qnd::test {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
    int sign() { return uniform(0.0, 1.0) < 0.5 ? -1 : 1; }

    // Uniform in a disk of the given radius.
    Complex disk(double radius) {
        const double r = radius * std::sqrt(uniform(0.0, 1.0));
        return std::polar(r, uniform(0.0, 2.0 * std::numbers::pi));
    }

    ComplexVector disk_vector(Eigen::Index n, double radius) {
        ComplexVector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = disk(radius);
        return v;
    }

    Eigen::MatrixXcd matrix(Eigen::Index r, Eigen::Index c) {
        Eigen::MatrixXcd m(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) m(i, j) = {uniform(-1, 1), uniform(-1, 1)};
        return m;
    }

    Eigen::MatrixXcd hermitian(Eigen::Index n) {
        const Eigen::MatrixXcd a = matrix(n, n);
        return 0.5 * (a + a.adjoint());
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

// Plain matrix exponential by Taylor series with scaling and squaring,
// independent of any eigensolver.
inline Eigen::MatrixXcd taylor_expm(const Eigen::MatrixXcd& a) {
    const double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
    int squarings = 0;
    double scale = 1.0;
    while (norm * scale > 0.5) {
        scale *= 0.5;
        ++squarings;
    }
    const Eigen::MatrixXcd x = a * scale;
    Eigen::MatrixXcd term = Eigen::MatrixXcd::Identity(a.rows(), a.cols());
    Eigen::MatrixXcd sum = term;
    for (int k = 1; k < 30; ++k) {
        term = term * x / static_cast<double>(k);
        sum += term;
    }
    for (int i = 0; i < squarings; ++i) sum = sum * sum;
    return sum;
}

// Composite trapezoid rule on [a, b].
inline Complex trapezoid(const std::function<Complex(double)>& f, double a, double b, int intervals) {
    const double h = (b - a) / intervals;
    Complex sum = 0.5 * (f(a) + f(b));
    for (int i = 1; i < intervals; ++i) sum += f(a + i * h);
    return h * sum;
}

}  // namespace qnd::test
