#include "gpanel/dynamic.hpp"

#include <cmath>

namespace gpanel {

BalancedPanel augment_panel(const BalancedPanel& panel) {
    if (panel.n_periods < 3)
        throw TooFewPeriodsError("augment_panel: need at least 3 periods");
    const Eigen::Index t_out = panel.n_periods - 1;

    BalancedPanel aug;
    aug.n_units = panel.n_units;
    aug.n_periods = t_out;
    aug.n_covariates = panel.n_covariates + 1;
    aug.y = panel.y.rightCols(t_out);
    aug.x.reserve(static_cast<std::size_t>(aug.n_covariates));
    aug.x.push_back(panel.y.leftCols(t_out));  // lagged outcome first
    for (const auto& xk : panel.x) aug.x.push_back(xk.rightCols(t_out));
    aug.unit_ids = panel.unit_ids;
    aug.period_ids.assign(panel.period_ids.begin() + 1, panel.period_ids.end());
    return aug;
}

namespace {

DynamicFit finish(DynamicFit fit, const Eigen::VectorXd& coefs, Eigen::Index t_eff) {
    fit.theta_hat = coefs(0);
    fit.beta_hat = coefs.tail(coefs.size() - 1);
    fit.stationarity_warning = std::abs(fit.theta_hat) >= 1.0;
    fit.effective_periods = t_eff;
    return fit;
}

} // namespace

DynamicFit dynamic_spectral(const BalancedPanel& panel, int g, int m, const SpectralConfig& cfg) {
    const BalancedPanel aug = augment_panel(panel);
    DynamicFit fit;
    fit.spectral = spectral_estimate(aug, g, 2 * m, cfg);
    const Eigen::VectorXd coefs = fit.spectral.beta_tilde;
    return finish(std::move(fit), coefs, aug.n_periods);
}

DynamicFit dynamic_post_spectral(const BalancedPanel& panel, int g, int m, const RngSpec& rng,
                                 const SpectralConfig& cfg) {
    const BalancedPanel aug = augment_panel(panel);
    DynamicFit fit;
    auto [cls, post] = post_spectral(aug, g, 2 * m, rng, cfg);
    fit.classification = std::move(cls);
    fit.post = std::move(post);
    const Eigen::VectorXd coefs = fit.post->beta_hat;
    return finish(std::move(fit), coefs, aug.n_periods);
}

} // namespace gpanel
