// quadrature.hpp — Gauss–Legendre rules and nested time-simplex integration

#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qnd/core.hpp"

namespace qnd::quadrature {

// n-point Gauss–Legendre rule on [-1, 1], nodes ascending.
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;

    explicit GaussLegendre(int n) {
        if (n < 1) throw ConfigurationError("quadrature order must be at least 1");
        nodes.resize(static_cast<std::size_t>(n));
        weights.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
            double dp = 1.0;
            for (int iter = 0; iter < 100; ++iter) {
                const auto [p, d] = legendre(n, x);
                dp = d;
                const double dx = p / d;
                x -= dx;
                if (std::abs(dx) < 1e-16) break;
            }
            dp = legendre(n, x).second;
            const auto j = static_cast<std::size_t>(n - 1 - i);
            nodes[j] = x;
            weights[j] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
    }

    // (P_n(x), P_n'(x)) by the three-term recurrence.
    static std::pair<double, double> legendre(int n, double x) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        return {p1, n * (x * p1 - p0) / (x * x - 1.0)};
    }

    int order() const noexcept { return static_cast<int>(nodes.size()); }
};

/// Integrals over the time simplex 0 <= tau_1 <= ... <= tau_n <= t of
/// exp(i sum_j rate_j tau_j).
///
/// Each nesting level is a Gauss–Legendre rule: the inner integral
/// int_0^{x_i} f is taken with the same rule mapped onto [0, x_i], applied to
/// the Lagrange interpolant of f on the outer nodes. That yields a fixed
/// q x q integration matrix, so an n-fold simplex costs n q^2 operations
/// instead of q^n.
class SimplexIntegrator {
public:
    explicit SimplexIntegrator(int order) : rule_(order) {
        const int q = rule_.order();
        nodes_.resize(q);
        weights_.resize(q);
        for (int i = 0; i < q; ++i) {
            nodes_[i] = 0.5 * (rule_.nodes[i] + 1.0);
            weights_[i] = 0.5 * rule_.weights[i];
        }
        // Barycentric weights for Gauss–Legendre nodes (up to a common scale).
        Eigen::VectorXd bary(q);
        for (int j = 0; j < q; ++j) {
            const double xi = rule_.nodes[j];
            bary[j] = ((j % 2 == 0) ? 1.0 : -1.0) * std::sqrt((1.0 - xi * xi) * rule_.weights[j]);
        }
        integration_.resize(q, q);
        integration_.setZero();
        for (int i = 0; i < q; ++i) {
            for (int m = 0; m < q; ++m) {
                const double x = nodes_[i] * nodes_[m];
                const double w = nodes_[i] * weights_[m];
                accumulate_lagrange(x, w, bary, integration_.row(i));
            }
        }
    }

    int order() const noexcept { return rule_.order(); }
    const Eigen::VectorXd& nodes() const noexcept { return nodes_; }      // on [0, 1]
    const Eigen::VectorXd& weights() const noexcept { return weights_; }  // on [0, 1]

    // S(i, j) = int_0^{x_i} L_j(s) ds on [0, 1].
    const Eigen::MatrixXd& integration_matrix() const noexcept { return integration_; }

    Complex integrate_exponential(std::span<const double> rates, double t) const {
        const auto n = rates.size();
        if (n == 0) return {1.0, 0.0};
        const Eigen::VectorXd tau = t * nodes_;
        Eigen::VectorXcd inner = Eigen::VectorXcd::Ones(order());
        for (std::size_t j = 0; j + 1 < n; ++j) {
            Eigen::VectorXcd f(order());
            for (int i = 0; i < order(); ++i) f[i] = std::exp(kI * (rates[j] * tau[i])) * inner[i];
            inner.real() = t * (integration_ * f.real());
            inner.imag() = t * (integration_ * f.imag());
        }
        Complex total{0.0, 0.0};
        for (int i = 0; i < order(); ++i)
            total += weights_[i] * std::exp(kI * (rates[n - 1] * tau[i])) * inner[i];
        return t * total;
    }

private:
    template <typename Row>
    void accumulate_lagrange(double x, double w, const Eigen::VectorXd& bary, Row&& row) const {
        const int q = order();
        for (int j = 0; j < q; ++j) {
            if (x == nodes_[j]) {
                row[j] += w;
                return;
            }
        }
        double denom = 0.0;
        for (int j = 0; j < q; ++j) denom += bary[j] / (x - nodes_[j]);
        for (int j = 0; j < q; ++j) row[j] += w * (bary[j] / (x - nodes_[j])) / denom;
    }

    GaussLegendre rule_;
    Eigen::VectorXd nodes_;
    Eigen::VectorXd weights_;
    Eigen::MatrixXd integration_;
};

}  // namespace qnd::quadrature
