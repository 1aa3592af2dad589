#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gpanel/dynamic.hpp"
#include "gpanel/simulate.hpp"
#include "helpers.hpp"

using namespace gpanel;

TEST_CASE("augment_panel: index bookkeeping for T=3") {
    Rng rng(RngSpec{111, 0});
    const BalancedPanel p = test_helpers::random_panel(rng, 4, 3, 1);
    const BalancedPanel aug = augment_panel(p);
    CHECK(aug.n_periods == 2);
    CHECK(aug.n_covariates == 2);
    // first output period: lag = first input period's outcome
    for (Eigen::Index i = 0; i < 4; ++i) {
        CHECK(aug.x[0](i, 0) == p.y(i, 0));
        CHECK(aug.x[0](i, 1) == p.y(i, 1));
        CHECK(aug.y(i, 0) == p.y(i, 1));
        CHECK(aug.y(i, 1) == p.y(i, 2));
        CHECK(aug.x[1](i, 0) == p.x[0](i, 1));
    }
    CHECK(aug.period_ids == std::vector<std::string>{"2", "3"});
}

TEST_CASE("augment_panel: stripping the lag column recovers the truncated panel") {
    Rng rng(RngSpec{112, 0});
    const BalancedPanel p = test_helpers::random_panel(rng, 5, 6, 2);
    const BalancedPanel aug = augment_panel(p);
    CHECK((aug.y - p.y.rightCols(5)).cwiseAbs().maxCoeff() == 0.0);
    for (Eigen::Index k = 0; k < 2; ++k)
        CHECK((aug.x[k + 1] - p.x[k].rightCols(5)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("augment_panel: too few periods rejected") {
    Rng rng(RngSpec{113, 0});
    const BalancedPanel p = test_helpers::random_panel(rng, 3, 2, 1);
    CHECK_THROWS_AS(augment_panel(p), TooFewPeriodsError);
}

TEST_CASE("dynamic_spectral: eigenvalue count doubles M") {
    Rng rng(RngSpec{114, 0});
    DgpConfig cfg;
    cfg.n_units = 60;
    cfg.n_periods = 12;
    cfg.n_groups = 2;
    cfg.n_factors = 1;
    cfg.seed = 114;
    cfg.theta = 0.3;
    auto [panel, truth, params] = generate_dgp(cfg, rng);
    const DynamicFit fit = dynamic_spectral(panel, 2, 1);
    CHECK(fit.spectral.k_eigs_used == 2 * 2 * (2 * 1) + 2);
    CHECK(fit.effective_periods == 11);
    CHECK(fit.beta_hat.size() == 2);
}

TEST_CASE("dynamic_spectral: theta = 0 smoke recovery") {
    std::vector<double> theta_err;
    for (int rep = 0; rep < 5; ++rep) {
        Rng rng(RngSpec{115, static_cast<std::uint64_t>(rep)});
        DgpConfig cfg;
        cfg.n_units = 200;
        cfg.n_periods = 50;
        cfg.n_groups = 2;
        cfg.sigma2 = 4.0;
        cfg.seed = 115;
        cfg.theta = 0.0;
        auto [panel, truth, params] = generate_dgp(cfg, rng);
        theta_err.push_back(std::abs(dynamic_spectral(panel, 2, 1).theta_hat));
    }
    std::sort(theta_err.begin(), theta_err.end());
    CHECK(theta_err[2] <= 0.1);
}

TEST_CASE("dynamic_post_spectral: composes and reports the lag coefficient first") {
    Rng rng(RngSpec{116, 0});
    DgpConfig cfg;
    cfg.n_units = 80;
    cfg.n_periods = 30;
    cfg.n_groups = 2;
    cfg.sigma2 = 4.0;
    cfg.seed = 116;
    cfg.theta = 0.4;
    auto [panel, truth, params] = generate_dgp(cfg, rng);
    const DynamicFit fit = dynamic_post_spectral(panel, 2, 1, RngSpec{117, 0});
    REQUIRE(fit.post.has_value());
    REQUIRE(fit.classification.has_value());
    CHECK(fit.post->beta_hat.size() == 3);
    CHECK(fit.theta_hat == fit.post->beta_hat(0));
    CHECK(fit.beta_hat.size() == 2);
    CHECK_FALSE(fit.stationarity_warning);
}
