#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gpanel/eigsolve.hpp"
#include "gpanel/panel.hpp"

namespace gpanel {

enum class EigBackend { automatic, dense, randomized };

/// Controls the eigenvalue-sum estimator. k_eigs = 0 derives the count from
/// gm_product via the default rule 2*GM + 2.
struct SpectralConfig {
    int gm_product = 1;  // G*M, or J for the interactive fixed-effect variant
    int k_eigs = 0;
    EigBackend backend = EigBackend::automatic;
    Eigen::Index dense_threshold = 512;
    int oversampling = 10;
    std::optional<int> power_depth;  // default ceil(log N)
    RngSpec rng;                     // randomized backend only

    int effective_k() const { return k_eigs > 0 ? k_eigs : 2 * gm_product + 2; }
};

/// Eigenvalue count for the relaxed covariate process (rank-M component):
/// 2*(G + M + 1) in place of 2*G*M + 2.
inline int relaxed_k_eigs(int g, int m) { return 2 * (g + m + 1); }

struct SpectralFit {
    Eigen::VectorXd beta_tilde;
    Eigen::MatrixXd sigma_hat;  // symmetric by construction
    Eigen::VectorXd s_hat;
    double l_hat = 0.0;
    int k_eigs_used = 0;  // eigenvalue count before any clamping
    std::vector<std::pair<Eigen::VectorXd, double>> probe_values;  // (b, f_hat(b))
    double sigma_min_abs_eig = 0.0;  // condition diagnostics for sigma_hat
    double sigma_max_abs_eig = 0.0;
    std::vector<std::string> warnings;
};

/// Matrix-free operator for the N x N residual-difference matrix
///   A^b_ij = (1/NT) sum_t {(y_it - x_it'b) - (y_jt - x_jt'b)}^2.
/// apply costs O(NT); the diagonal is exactly zero and the dense
/// materialization preserves that.
SymmetricOperator make_A_operator(const BalancedPanel& panel, const Eigen::VectorXd& b);

/// Sum of the k largest-in-absolute-value eigenvalues of A^b. k is clamped to
/// N when necessary (a warning is appended when a warnings sink is given).
double f_hat(const BalancedPanel& panel, const Eigen::VectorXd& b, const SpectralConfig& cfg,
             std::vector<std::string>* warnings = nullptr);

/// Coefficients of the fitted quadratic, before any inversion.
struct QuadraticCoefficients {
    Eigen::MatrixXd sigma_hat;
    Eigen::VectorXd s_hat;
    double l_hat = 0.0;
    std::vector<std::pair<Eigen::VectorXd, double>> probe_values;
};

/// Fits b'Sigma b + S'b + L through values of f at the probe set
/// {0} u {+-e_k} u {e_k + e_l}. Exposed on a plain callable so exact
/// quadratics can drive it directly.
QuadraticCoefficients reconstruct_coefficients_from_f(
    const std::function<double(const Eigen::VectorXd&)>& f, Eigen::Index d);

/// reconstruct_coefficients_from_f plus the minimizer -Sigma^{-1} S / 2.
/// Throws SingularSigma (with condition diagnostics) when rcond < 1e-12.
SpectralFit reconstruct_from_f(const std::function<double(const Eigen::VectorXd&)>& f,
                               Eigen::Index d);

/// reconstruct_from_f over f_hat on the panel.
SpectralFit reconstruct_quadratic(const BalancedPanel& panel, const SpectralConfig& cfg);

/// Spectral estimator with the default eigenvalue count 2*G*M + 2.
SpectralFit spectral_estimate(const BalancedPanel& panel, int g, int m,
                              const SpectralConfig& cfg = {});

/// Interactive fixed-effect variant: J factors, eigenvalue count 2*J + 2.
SpectralFit spectral_estimate_ife(const BalancedPanel& panel, int j,
                                  const SpectralConfig& cfg = {});

/// Threshold for counting the non-vanishing eigenvalues of A^0:
/// tau = constant * ||A^0||_2 * (T ^ N)^(-exponent).
struct ThresholdRule {
    double constant = 1.0;
    double exponent = 1.0 / 3.0;
};

/// Heuristic estimate of the product G*M: counts eigenvalues of A^0 with
/// |lambda| > tau and returns max(ceil((count - 2)/2), 1).
int estimate_gm_product(const BalancedPanel& panel, const ThresholdRule& rule = {});

} // namespace gpanel
