#pragma once

#include <Eigen/Dense>
#include <string>

#include "gpanel/panel.hpp"
#include "gpanel/rng.hpp"

namespace test_helpers {

inline Eigen::MatrixXd random_matrix(gpanel::Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = rng.next_normal(1.0);
    return out;
}

inline Eigen::VectorXd random_vector(gpanel::Rng& rng, Eigen::Index n) {
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) out(i) = rng.next_normal(1.0);
    return out;
}

inline Eigen::MatrixXd random_symmetric(gpanel::Rng& rng, Eigen::Index n) {
    Eigen::MatrixXd a = random_matrix(rng, n, n);
    return 0.5 * (a + a.transpose());
}

inline Eigen::MatrixXd random_orthogonal(gpanel::Rng& rng, Eigen::Index n) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(rng, n, n));
    return qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
}

/// Symmetric matrix with the given eigenvalues under a random basis.
inline Eigen::MatrixXd planted_symmetric(gpanel::Rng& rng, const Eigen::VectorXd& eigenvalues) {
    const Eigen::MatrixXd q = random_orthogonal(rng, eigenvalues.size());
    return q * eigenvalues.asDiagonal() * q.transpose();
}

/// Spectrum with |lambda_j| decaying geometrically (every gap ratio >= 2)
/// and alternating signs.
inline Eigen::VectorXd geometric_spectrum(Eigen::Index n, double top = 10.0) {
    Eigen::VectorXd v(n);
    double mag = top;
    for (Eigen::Index j = 0; j < n; ++j) {
        v(j) = (j % 2 == 0 ? mag : -mag);
        mag /= 2.0;
    }
    return v;
}

/// Gap of 2 at index k, then a slowly decaying tail (visible power-iteration
/// error at q = 0).
inline Eigen::VectorXd slow_tail_spectrum(Eigen::Index n, int k, double top = 10.0) {
    Eigen::VectorXd v(n);
    double mag = top;
    for (int j = 0; j < k; ++j) {
        v(j) = (j % 2 == 0 ? mag : -mag);
        mag /= 2.0;
    }
    const double tail_top = mag;  // |lambda_k| / 2 relative to last kept value
    for (Eigen::Index j = k; j < n; ++j)
        v(j) = tail_top / std::sqrt(static_cast<double>(j - k + 1));
    return v;
}

/// Small random panel with arbitrary (unstructured) data.
inline gpanel::BalancedPanel random_panel(gpanel::Rng& rng, Eigen::Index n, Eigen::Index t,
                                          Eigen::Index d) {
    gpanel::BalancedPanel p;
    p.n_units = n;
    p.n_periods = t;
    p.n_covariates = d;
    p.y = random_matrix(rng, n, t);
    for (Eigen::Index k = 0; k < d; ++k) p.x.push_back(random_matrix(rng, n, t));
    for (Eigen::Index i = 0; i < n; ++i) p.unit_ids.push_back("u" + std::to_string(i + 1));
    for (Eigen::Index s = 0; s < t; ++s) p.period_ids.push_back(std::to_string(s + 1));
    return p;
}

} // namespace test_helpers
