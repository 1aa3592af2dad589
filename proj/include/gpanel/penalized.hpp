#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "gpanel/spectral.hpp"

namespace gpanel {

/// l1-penalized quadratic min_b b'Sigma b + S'b + lambda ||b||_1.
/// psd_floor clips negative eigenvalues of sigma_hat before solving (the
/// reconstructed matrix need not be PSD in finite samples); disabling it
/// makes an indefinite sigma_hat a hard error.
struct LassoProblem {
    Eigen::MatrixXd sigma_hat;
    Eigen::VectorXd s_hat;
    double lambda = 0.0;
    std::optional<double> psd_floor = 0.0;
    double c_lambda = 2.0;              // diagnostics only
    std::optional<int> sparsity_s;      // diagnostics only
};

struct LassoSolution {
    Eigen::VectorXd beta_lambda;
    double kkt_residual = 0.0;  // recomputed from scratch at exit
    int iterations = 0;         // coordinate sweeps
    double objective = 0.0;
    bool converged = true;      // false when max_iter was hit
    std::vector<std::string> warnings;
};

/// Cyclic coordinate descent with exact scalar soft-threshold updates.
LassoSolution solve_penalized(const LassoProblem& problem, double tol = 1e-10,
                              int max_iter = 10000);

/// lambda = C * (1/(T ^ N) + sqrt(log d / (NT))). The constant is an open
/// practical question; 1.0 is only a placeholder default.
double lambda_rule(Eigen::Index n, Eigen::Index t, Eigen::Index d, double c = 1.0);

/// Reconstructs (sigma_hat, s_hat) spectrally, then solves the penalized
/// problem. Probe count grows as d^2; a warning is attached above d = 200.
LassoSolution penalized_spectral(const BalancedPanel& panel, int g, int m, double lambda,
                                 const SpectralConfig& cfg = {});

} // namespace gpanel
