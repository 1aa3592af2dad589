#include "gpanel/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace gpanel {

SymmetricOperator make_A_operator(const BalancedPanel& panel, const Eigen::VectorXd& b) {
    const auto r = std::make_shared<Eigen::MatrixXd>(residuals(panel, b));
    const auto row_sq = std::make_shared<Eigen::VectorXd>(r->rowwise().squaredNorm());
    const Eigen::Index n = panel.n_units;
    const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(panel.n_periods));

    SymmetricOperator op;
    op.dim = n;
    // A = (s 1' + 1 s' - 2 R R') / (NT) with s_i = sum_t r_it^2
    op.apply = [r, row_sq, scale](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        const double ones_v = v.sum();
        const double s_v = row_sq->dot(v);
        Eigen::VectorXd out = (*row_sq) * ones_v;
        out.array() += s_v;
        out.noalias() -= 2.0 * ((*r) * (r->transpose() * v));
        return out * scale;
    };
    op.materialize = [r, scale, n]() {
        // Rank update keeps the Gram matrix exactly symmetric; evaluating
        // (s_i + s_j) - 2*gram_ij in this grouping makes A symmetric bit for
        // bit with an exactly zero diagonal.
        Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
        gram.selfadjointView<Eigen::Lower>().rankUpdate(*r);
        gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
        const Eigen::VectorXd s = gram.diagonal();
        Eigen::MatrixXd a = s.replicate(1, n).eval();
        a = (a + a.transpose()).eval();
        a.noalias() -= 2.0 * gram;
        return (a * scale).eval();
    };
    return op;
}

double f_hat(const BalancedPanel& panel, const Eigen::VectorXd& b, const SpectralConfig& cfg,
             std::vector<std::string>* warnings) {
    const Eigen::Index n = panel.n_units;
    int k = cfg.effective_k();
    if (k < 1) throw ValidationError("f_hat: eigenvalue count must be >= 1");
    if (k > n) {
        if (warnings)
            warnings->push_back("eigenvalue count " + std::to_string(k) + " clamped to N=" +
                                std::to_string(n) + "; estimator degenerate at this size");
        k = static_cast<int>(n);
    }

    const SymmetricOperator op = make_A_operator(panel, b);

    bool use_dense = cfg.backend == EigBackend::dense ||
                     (cfg.backend == EigBackend::automatic && n <= cfg.dense_threshold);
    int p = cfg.oversampling;
    if (!use_dense && k + p > n) {
        p = static_cast<int>(n) - k;
        if (p < 1) use_dense = true;  // sketch cannot be wider than the matrix
    }

    if (use_dense) {
        const DenseEigResult dense = dense_eigs(op);
        return dense.values.head(k).sum();
    }
    RandEigConfig rcfg;
    rcfg.k = k;
    rcfg.p = p;
    rcfg.q = cfg.power_depth;
    rcfg.rng = cfg.rng;
    return randomized_topk_abs_eigs(op, rcfg).sum();
}

QuadraticCoefficients reconstruct_coefficients_from_f(
    const std::function<double(const Eigen::VectorXd&)>& f, Eigen::Index d) {
    if (d < 1) throw ValidationError("reconstruct: d must be >= 1");

    QuadraticCoefficients coef;
    auto probe = [&](const Eigen::VectorXd& b) {
        const double value = f(b);
        coef.probe_values.emplace_back(b, value);
        return value;
    };

    const double l_hat = probe(Eigen::VectorXd::Zero(d));
    Eigen::VectorXd f_plus(d), f_minus(d);
    for (Eigen::Index k = 0; k < d; ++k) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
        e(k) = 1.0;
        f_plus(k) = probe(e);
        e(k) = -1.0;
        f_minus(k) = probe(e);
    }

    coef.l_hat = l_hat;
    coef.s_hat = (f_plus - f_minus) / 2.0;
    coef.sigma_hat.resize(d, d);
    for (Eigen::Index k = 0; k < d; ++k)
        coef.sigma_hat(k, k) = (f_plus(k) + f_minus(k)) / 2.0 - l_hat;
    for (Eigen::Index k = 0; k < d; ++k) {
        for (Eigen::Index l = 0; l < k; ++l) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
            e(k) = 1.0;
            e(l) = 1.0;
            const double f_kl = probe(e);
            const double off = (f_kl - coef.sigma_hat(k, k) - coef.sigma_hat(l, l) -
                                coef.s_hat(k) - coef.s_hat(l) - l_hat) /
                               2.0;
            coef.sigma_hat(k, l) = off;
            coef.sigma_hat(l, k) = off;
        }
    }
    return coef;
}

SpectralFit reconstruct_from_f(const std::function<double(const Eigen::VectorXd&)>& f,
                               Eigen::Index d) {
    QuadraticCoefficients coef = reconstruct_coefficients_from_f(f, d);
    SpectralFit fit;
    fit.sigma_hat = std::move(coef.sigma_hat);
    fit.s_hat = std::move(coef.s_hat);
    fit.l_hat = coef.l_hat;
    fit.probe_values = std::move(coef.probe_values);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.sigma_hat);
    if (es.info() != Eigen::Success) throw NumericError("reconstruct: eigensolve failed");
    fit.sigma_min_abs_eig = es.eigenvalues().cwiseAbs().minCoeff();
    fit.sigma_max_abs_eig = es.eigenvalues().cwiseAbs().maxCoeff();
    const double rcond =
        fit.sigma_max_abs_eig > 0.0 ? fit.sigma_min_abs_eig / fit.sigma_max_abs_eig : 0.0;
    if (!(rcond >= 1e-12))
        throw SingularSigmaError("reconstruct: sigma_hat singular (rcond=" + std::to_string(rcond) +
                                 ", |eig| in [" + std::to_string(fit.sigma_min_abs_eig) + ", " +
                                 std::to_string(fit.sigma_max_abs_eig) + "])");

    // beta = -Sigma^{-1} S / 2 through the eigendecomposition already at hand
    fit.beta_tilde = es.eigenvectors() *
                     (es.eigenvalues().cwiseInverse().asDiagonal() *
                      (es.eigenvectors().transpose() * (-0.5 * fit.s_hat)));
    return fit;
}

SpectralFit reconstruct_quadratic(const BalancedPanel& panel, const SpectralConfig& cfg) {
    std::vector<std::string> warnings;
    std::size_t probe_index = 0;
    auto f = [&](const Eigen::VectorXd& b) {
        SpectralConfig probe_cfg = cfg;
        if (cfg.backend == EigBackend::randomized ||
            (cfg.backend == EigBackend::automatic && panel.n_units > cfg.dense_threshold)) {
            probe_cfg.rng = Rng(cfg.rng).fork(probe_index).spec();
        }
        ++probe_index;
        return f_hat(panel, b, probe_cfg, &warnings);
    };
    SpectralFit fit = reconstruct_from_f(f, panel.n_covariates);
    fit.warnings = std::move(warnings);
    fit.k_eigs_used = cfg.effective_k();
    return fit;
}

SpectralFit spectral_estimate(const BalancedPanel& panel, int g, int m,
                              const SpectralConfig& cfg) {
    if (g < 1 || m < 1) throw ValidationError("spectral_estimate: G and M must be >= 1");
    SpectralConfig run_cfg = cfg;
    run_cfg.gm_product = g * m;
    return reconstruct_quadratic(panel, run_cfg);
}

SpectralFit spectral_estimate_ife(const BalancedPanel& panel, int j, const SpectralConfig& cfg) {
    if (j < 1) throw ValidationError("spectral_estimate_ife: J must be >= 1");
    SpectralConfig run_cfg = cfg;
    run_cfg.gm_product = j;
    return reconstruct_quadratic(panel, run_cfg);
}

int estimate_gm_product(const BalancedPanel& panel, const ThresholdRule& rule) {
    if (panel.n_units < 1) throw ValidationError("estimate_gm_product: empty panel");
    const SymmetricOperator op =
        make_A_operator(panel, Eigen::VectorXd::Zero(panel.n_covariates));
    const DenseEigResult dense = dense_eigs(op);
    const double op_norm = dense.values.cwiseAbs().maxCoeff();
    const double tn = static_cast<double>(std::min(panel.n_units, panel.n_periods));
    const double tau = rule.constant * op_norm * std::pow(tn, -rule.exponent);
    int count = 0;
    for (Eigen::Index j = 0; j < dense.values.size(); ++j)
        if (std::abs(dense.values(j)) > tau) ++count;
    const int c = count - 2;
    const int gm = c >= 0 ? (c + 1) / 2 : c / 2;  // ceil(c / 2)
    return std::max(gm, 1);
}

} // namespace gpanel
