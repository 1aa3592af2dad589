#pragma once

#include <Eigen/Dense>
#include <utility>

#include "gpanel/classify.hpp"
#include "gpanel/panel.hpp"

namespace gpanel {

struct PostSpectralFit {
    Eigen::VectorXd beta_hat;
    Eigen::MatrixXd alpha_hat;   // n_groups x T group-time effects
    Eigen::MatrixXd residuals;   // N x T
    Eigen::MatrixXd sigma_check; // d x d within-cell covariate second moment
    Eigen::MatrixXd omega_hat;   // d x d cluster-summed score outer product
    Eigen::MatrixXd vcov;        // sigma_check^{-1} omega sigma_check^{-1} / (NT)
    Eigen::VectorXd std_errors;
    GroupAssignment groups_used;
};

/// Pooled OLS with group-time effects, computed by within-(group, period)
/// demeaning. Every group must be nonempty and the demeaned covariate Gram
/// matrix invertible (rcond >= 1e-12).
PostSpectralFit pooled_ols(const BalancedPanel& panel, const GroupAssignment& groups);

/// pooled_ols on the true assignment (the infeasible benchmark).
PostSpectralFit oracle_ols(const BalancedPanel& panel, const GroupAssignment& true_groups);

/// Unit-clustered covariance pieces: omega = (NT)^{-1} sum_i u_i u_i' with
/// u_i = sum_t vhat_it xcheck_it. Exposed on raw arrays so the formula can be
/// checked directly.
Eigen::MatrixXd arellano_omega(const std::vector<Eigen::MatrixXd>& x_demeaned,
                               const Eigen::MatrixXd& residuals);

/// Recomputes (vcov, std_errors) for a fit produced on this panel.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> clustered_vcov(const PostSpectralFit& fit,
                                                           const BalancedPanel& panel);

/// classify + pooled_ols on the estimated groups.
std::pair<Classification, PostSpectralFit> post_spectral(const BalancedPanel& panel, int g, int m,
                                                         const RngSpec& rng,
                                                         const SpectralConfig& cfg = {});

} // namespace gpanel
