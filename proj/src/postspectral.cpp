#include "gpanel/postspectral.hpp"

#include <cmath>

namespace gpanel {

namespace {

// Per-(group, period) means with compensated summation so the reduction is
// insensitive to accumulation order.
Eigen::MatrixXd cell_means(const Eigen::MatrixXd& values, const GroupAssignment& groups) {
    const Eigen::Index n = values.rows(), t = values.cols();
    const int g = groups.n_groups;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(g, t);
    Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(g, t);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(g);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int gamma = groups.labels[static_cast<std::size_t>(i)] - 1;
        counts(gamma) += 1.0;
        for (Eigen::Index s = 0; s < t; ++s) {
            const double y = values(i, s) - comp(gamma, s);
            const double acc = sums(gamma, s) + y;
            comp(gamma, s) = (acc - sums(gamma, s)) - y;
            sums(gamma, s) = acc;
        }
    }
    return sums.array().colwise() / counts.array();
}

Eigen::MatrixXd demean_by_cell(const Eigen::MatrixXd& values, const GroupAssignment& groups,
                               const Eigen::MatrixXd& means) {
    Eigen::MatrixXd out = values;
    for (Eigen::Index i = 0; i < values.rows(); ++i)
        out.row(i) -= means.row(groups.labels[static_cast<std::size_t>(i)] - 1);
    return out;
}

// Inverse through the symmetric eigendecomposition, with an rcond gate.
Eigen::MatrixXd gram_inverse(const Eigen::MatrixXd& gram, const char* who) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    if (es.info() != Eigen::Success) throw SingularGramError(std::string(who) + ": eigensolve failed");
    const double max_abs = es.eigenvalues().cwiseAbs().maxCoeff();
    const double min_abs = es.eigenvalues().cwiseAbs().minCoeff();
    if (!(max_abs > 0.0) || min_abs / max_abs < 1e-12)
        throw SingularGramError(std::string(who) + ": demeaned covariate Gram matrix singular");
    return es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
           es.eigenvectors().transpose();
}

} // namespace

PostSpectralFit pooled_ols(const BalancedPanel& panel, const GroupAssignment& groups) {
    if (static_cast<Eigen::Index>(groups.labels.size()) != panel.n_units)
        throw DimensionMismatchError("pooled_ols: group labels size != n_units");
    groups.validate(true);

    const Eigen::Index n = panel.n_units, t = panel.n_periods, d = panel.n_covariates;
    const double nt = static_cast<double>(n) * static_cast<double>(t);

    std::vector<Eigen::MatrixXd> x_dm(static_cast<std::size_t>(d));
    for (Eigen::Index k = 0; k < d; ++k)
        x_dm[static_cast<std::size_t>(k)] =
            demean_by_cell(panel.x[static_cast<std::size_t>(k)], groups,
                           cell_means(panel.x[static_cast<std::size_t>(k)], groups));
    const Eigen::MatrixXd y_dm = demean_by_cell(panel.y, groups, cell_means(panel.y, groups));

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
    for (Eigen::Index k = 0; k < d; ++k) {
        for (Eigen::Index l = 0; l <= k; ++l) {
            gram(k, l) = x_dm[static_cast<std::size_t>(k)]
                             .cwiseProduct(x_dm[static_cast<std::size_t>(l)])
                             .sum();
            gram(l, k) = gram(k, l);
        }
        rhs(k) = x_dm[static_cast<std::size_t>(k)].cwiseProduct(y_dm).sum();
    }

    PostSpectralFit fit;
    fit.groups_used = groups;
    const Eigen::MatrixXd gram_inv = gram_inverse(gram, "pooled_ols");
    fit.beta_hat = gram_inv * rhs;

    // alpha_gt = group-gamma mean of (y_it - x_it'beta); residuals follow.
    Eigen::MatrixXd partial = panel.y;
    for (Eigen::Index k = 0; k < d; ++k)
        partial.noalias() -= fit.beta_hat(k) * panel.x[static_cast<std::size_t>(k)];
    fit.alpha_hat = cell_means(partial, groups);
    fit.residuals = demean_by_cell(partial, groups, fit.alpha_hat);

    fit.sigma_check = gram / nt;
    fit.omega_hat = arellano_omega(x_dm, fit.residuals);
    const Eigen::MatrixXd sigma_inv = gram_inv * nt;
    fit.vcov = sigma_inv * fit.omega_hat * sigma_inv / nt;
    fit.std_errors = fit.vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
    return fit;
}

PostSpectralFit oracle_ols(const BalancedPanel& panel, const GroupAssignment& true_groups) {
    return pooled_ols(panel, true_groups);
}

Eigen::MatrixXd arellano_omega(const std::vector<Eigen::MatrixXd>& x_demeaned,
                               const Eigen::MatrixXd& residuals) {
    const Eigen::Index d = static_cast<Eigen::Index>(x_demeaned.size());
    const Eigen::Index n = residuals.rows(), t = residuals.cols();
    for (const auto& xk : x_demeaned)
        if (xk.rows() != n || xk.cols() != t)
            throw DimensionMismatchError("arellano_omega: shape mismatch");
    Eigen::MatrixXd scores(n, d);  // row i = sum_t vhat_it xcheck_it
    for (Eigen::Index k = 0; k < d; ++k)
        scores.col(k) =
            residuals.cwiseProduct(x_demeaned[static_cast<std::size_t>(k)]).rowwise().sum();
    return (scores.transpose() * scores) /
           (static_cast<double>(n) * static_cast<double>(t));
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> clustered_vcov(const PostSpectralFit& fit,
                                                           const BalancedPanel& panel) {
    const Eigen::Index d = panel.n_covariates;
    const double nt =
        static_cast<double>(panel.n_units) * static_cast<double>(panel.n_periods);
    std::vector<Eigen::MatrixXd> x_dm(static_cast<std::size_t>(d));
    for (Eigen::Index k = 0; k < d; ++k)
        x_dm[static_cast<std::size_t>(k)] =
            demean_by_cell(panel.x[static_cast<std::size_t>(k)], fit.groups_used,
                           cell_means(panel.x[static_cast<std::size_t>(k)], fit.groups_used));
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index k = 0; k < d; ++k)
        for (Eigen::Index l = 0; l <= k; ++l) {
            sigma(k, l) = x_dm[static_cast<std::size_t>(k)]
                              .cwiseProduct(x_dm[static_cast<std::size_t>(l)])
                              .sum() /
                          nt;
            sigma(l, k) = sigma(k, l);
        }
    const Eigen::MatrixXd sigma_inv = gram_inverse(sigma, "clustered_vcov");
    const Eigen::MatrixXd omega = arellano_omega(x_dm, fit.residuals);
    Eigen::MatrixXd vcov = sigma_inv * omega * sigma_inv / nt;
    return {vcov, vcov.diagonal().cwiseMax(0.0).cwiseSqrt()};
}

std::pair<Classification, PostSpectralFit> post_spectral(const BalancedPanel& panel, int g, int m,
                                                         const RngSpec& rng,
                                                         const SpectralConfig& cfg) {
    Classification cls = classify(panel, g, m, rng, cfg);
    PostSpectralFit fit = pooled_ols(panel, cls.g_hat);
    return {std::move(cls), std::move(fit)};
}

} // namespace gpanel
