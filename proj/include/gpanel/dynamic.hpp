#pragma once

#include <optional>

#include "gpanel/postspectral.hpp"
#include "gpanel/spectral.hpp"

namespace gpanel {

struct DynamicFit {
    double theta_hat = 0.0;
    Eigen::VectorXd beta_hat;  // coefficients on the original covariates
    bool stationarity_warning = false;  // |theta_hat| >= 1
    Eigen::Index effective_periods = 0;
    SpectralFit spectral;  // fit on the augmented panel (lag coefficient first)
    std::optional<Classification> classification;
    std::optional<PostSpectralFit> post;
};

/// Lag augmentation: drops the first period and prepends the lagged outcome
/// as covariate 0, so the output has T-1 periods and d+1 covariates.
BalancedPanel augment_panel(const BalancedPanel& panel);

/// Spectral estimator on the augmented panel with M doubled
/// (eigenvalue count 2*G*(2M) + 2). The lag coefficient is theta_hat.
DynamicFit dynamic_spectral(const BalancedPanel& panel, int g, int m,
                            const SpectralConfig& cfg = {});

/// classify + pooled OLS on the augmented panel with M doubled.
DynamicFit dynamic_post_spectral(const BalancedPanel& panel, int g, int m, const RngSpec& rng,
                                 const SpectralConfig& cfg = {});

} // namespace gpanel
