#include <doctest.h>

#include <cmath>

#include "gpanel/simulate.hpp"
#include "gpanel/spectral.hpp"
#include "helpers.hpp"

using namespace gpanel;

namespace {

Eigen::MatrixXd dense_A(const BalancedPanel& panel, const Eigen::VectorXd& b) {
    return make_A_operator(panel, b).materialize();
}

// Elementwise reference for A^b straight from the definition.
Eigen::MatrixXd brute_A(const BalancedPanel& panel, const Eigen::VectorXd& b) {
    const Eigen::MatrixXd r = residuals(panel, b);
    const Eigen::Index n = panel.n_units, t = panel.n_periods;
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            double sum = 0.0;
            for (Eigen::Index s = 0; s < t; ++s) {
                const double diff = r(i, s) - r(j, s);
                sum += diff * diff;
            }
            a(i, j) = sum / (static_cast<double>(n) * static_cast<double>(t));
        }
    return a;
}

DgpConfig small_cfg(Eigen::Index n, Eigen::Index t, int g, int m, double sigma2 = 1.0,
                    std::uint64_t seed = 7) {
    DgpConfig cfg;
    cfg.n_units = n;
    cfg.n_periods = t;
    cfg.n_groups = g;
    cfg.n_factors = m;
    cfg.sigma2 = sigma2;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("A operator: identical residuals across units give the zero operator") {
    Rng rng(RngSpec{51, 0});
    BalancedPanel p = test_helpers::random_panel(rng, 5, 3, 1);
    for (Eigen::Index i = 0; i < 5; ++i) p.y.row(i) = p.y.row(0);
    p.x[0].setZero();
    const SymmetricOperator op = make_A_operator(p, Eigen::VectorXd::Zero(1));
    const Eigen::VectorXd v = test_helpers::random_vector(rng, 5);
    CHECK(op.apply(v).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(op.materialize().cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("A operator: hand-checked N=2, T=1 case") {
    BalancedPanel p;
    p.n_units = 2;
    p.n_periods = 1;
    p.n_covariates = 1;
    p.y.resize(2, 1);
    p.y << 1, 0;
    p.x = {Eigen::MatrixXd::Zero(2, 1)};
    p.unit_ids = {"a", "b"};
    p.period_ids = {"1"};
    const SymmetricOperator op = make_A_operator(p, Eigen::VectorXd::Zero(1));
    const Eigen::MatrixXd a = op.materialize();
    CHECK(a(0, 0) == 0.0);
    CHECK(a(1, 1) == 0.0);
    CHECK(a(0, 1) == doctest::Approx(0.5));
    CHECK(a(1, 0) == doctest::Approx(0.5));
    Eigen::VectorXd e1(2);
    e1 << 1, 0;
    const Eigen::VectorXd ae1 = op.apply(e1);
    CHECK(ae1(0) == doctest::Approx(0.0));
    CHECK(ae1(1) == doctest::Approx(0.5));
}

TEST_CASE("A operator: matrix-free apply equals dense on random probes") {
    Rng rng(RngSpec{52, 0});
    const BalancedPanel p = test_helpers::random_panel(rng, 8, 5, 2);
    const Eigen::VectorXd b = test_helpers::random_vector(rng, 2);
    const SymmetricOperator op = make_A_operator(p, b);
    const Eigen::MatrixXd a = dense_A(p, b);
    CHECK((a - brute_A(p, b)).cwiseAbs().maxCoeff() < 1e-12 * a.cwiseAbs().maxCoeff());
    for (int probe = 0; probe < 20; ++probe) {
        const Eigen::VectorXd v = test_helpers::random_vector(rng, 8);
        const Eigen::VectorXd lhs = op.apply(v);
        const Eigen::VectorXd rhs = a * v;
        CHECK((lhs - rhs).norm() <= 1e-10 * (rhs.norm() + 1.0));
    }
}

TEST_CASE("A operator: zero diagonal and symmetry for every b") {
    Rng rng(RngSpec{53, 0});
    const BalancedPanel p = test_helpers::random_panel(rng, 6, 4, 2);
    for (int trial = 0; trial < 5; ++trial) {
        const Eigen::VectorXd b = test_helpers::random_vector(rng, 2);
        const Eigen::MatrixXd a = dense_A(p, b);
        CHECK(a.diagonal().cwiseAbs().maxCoeff() == 0.0);
        CHECK((a - a.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK(a.minCoeff() >= 0.0);
    }
}

TEST_CASE("f_hat: noiseless data sums to zero (rank bound + zero trace)") {
    Rng rng(RngSpec{54, 0});
    DgpConfig cfg = small_cfg(20, 8, 2, 1);
    cfg.zero_noise_v = true;
    cfg.zero_noise_z = true;
    auto [panel, groups, params] = generate_dgp(cfg, rng);
    SpectralConfig scfg;
    scfg.gm_product = 2;
    for (int trial = 0; trial < 4; ++trial) {
        const Eigen::VectorXd b = test_helpers::random_vector(rng, 2);
        const double norm = dense_A(panel, b).cwiseAbs().maxCoeff();
        CHECK(std::abs(f_hat(panel, b, scfg)) <= 1e-8 * (norm + 1.0));
    }
}

TEST_CASE("f_hat: zero panel gives zero") {
    BalancedPanel p;
    p.n_units = 4;
    p.n_periods = 3;
    p.n_covariates = 1;
    p.y = Eigen::MatrixXd::Zero(4, 3);
    p.x = {Eigen::MatrixXd::Zero(4, 3)};
    for (int i = 0; i < 4; ++i) p.unit_ids.push_back("u" + std::to_string(i));
    p.period_ids = {"1", "2", "3"};
    SpectralConfig cfg;
    CHECK(f_hat(p, Eigen::VectorXd::Zero(1), cfg) == 0.0);
}

TEST_CASE("f_hat: randomized backend agrees with dense under a spectral gap") {
    // Noiseless factor data has rank(A^b) <= 2GM+2 = k, so lambda_{k+1} = 0.
    Rng rng(RngSpec{55, 0});
    DgpConfig cfg = small_cfg(30, 10, 2, 1);
    cfg.zero_noise_v = true;
    cfg.zero_noise_z = true;
    auto [panel, groups, params] = generate_dgp(cfg, rng);

    SpectralConfig dense_cfg;
    dense_cfg.gm_product = 2;
    dense_cfg.backend = EigBackend::dense;
    SpectralConfig rand_cfg = dense_cfg;
    rand_cfg.backend = EigBackend::randomized;
    rand_cfg.rng = RngSpec{56, 0};

    const Eigen::VectorXd b = test_helpers::random_vector(rng, 2);
    // Step 9's square root turns fp noise on exactly-zero eigenvalues into
    // errors of order sqrt(eps)*||A||, so the natural scale is k*||A||_2.
    const double op_norm = dense_eigs(make_A_operator(panel, b)).values.cwiseAbs().maxCoeff();
    CHECK(std::abs(f_hat(panel, b, dense_cfg) - f_hat(panel, b, rand_cfg)) <
          1e-6 * 6.0 * op_norm);
}

TEST_CASE("reconstruct: exact quadratic oracle") {
    Eigen::MatrixXd sigma(2, 2);
    sigma << 2, 1, 1, 3;
    Eigen::VectorXd s(2);
    s << -4, -6;
    const double l = 5.0;
    auto f = [&](const Eigen::VectorXd& b) { return b.dot(sigma * b) + s.dot(b) + l; };
    const SpectralFit fit = reconstruct_from_f(f, 2);
    CHECK((fit.sigma_hat - sigma).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((fit.s_hat - s).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(fit.l_hat == doctest::Approx(5.0));
    CHECK(fit.beta_tilde(0) == doctest::Approx(0.6).epsilon(1e-10));
    CHECK(fit.beta_tilde(1) == doctest::Approx(0.8).epsilon(1e-10));
    CHECK(fit.probe_values.size() == 6);  // 1 + 2d + d(d-1)/2
}

TEST_CASE("reconstruct: one-dimensional closed form") {
    auto f = [](const Eigen::VectorXd& b) {
        // f(0)=1, f(1)=0, f(-1)=4
        if (b(0) == 0.0) return 1.0;
        return b(0) > 0.0 ? 0.0 : 4.0;
    };
    const SpectralFit fit = reconstruct_from_f(f, 1);
    CHECK(fit.l_hat == doctest::Approx(1.0));
    CHECK(fit.s_hat(0) == doctest::Approx(-2.0));
    CHECK(fit.sigma_hat(0, 0) == doctest::Approx(1.0));
    CHECK(fit.beta_tilde(0) == doctest::Approx(1.0));
}

TEST_CASE("reconstruct: random quadratics recovered to 1e-10") {
    Rng rng(RngSpec{57, 0});
    for (int trial = 0; trial < 25; ++trial) {
        const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.next_u64() % 6);
        Eigen::MatrixXd half = test_helpers::random_matrix(rng, d, d);
        const Eigen::MatrixXd sigma = half * half.transpose() + Eigen::MatrixXd::Identity(d, d);
        const Eigen::VectorXd s = test_helpers::random_vector(rng, d);
        const double l = rng.next_normal(1.0);
        auto f = [&](const Eigen::VectorXd& b) { return b.dot(sigma * b) + s.dot(b) + l; };
        const SpectralFit fit = reconstruct_from_f(f, d);
        const double scale = sigma.cwiseAbs().maxCoeff();
        CHECK((fit.sigma_hat - sigma).cwiseAbs().maxCoeff() < 1e-10 * scale);
        CHECK((fit.s_hat - s).cwiseAbs().maxCoeff() < 1e-10 * (s.cwiseAbs().maxCoeff() + scale));
        const Eigen::VectorXd beta = -0.5 * sigma.ldlt().solve(s);
        CHECK((fit.beta_tilde - beta).norm() < 1e-9 * (beta.norm() + 1.0));
    }
}

TEST_CASE("reconstruct: singular sigma is a hard error with diagnostics") {
    auto f = [](const Eigen::VectorXd&) { return 1.0; };  // Sigma = 0
    CHECK_THROWS_AS(reconstruct_from_f(f, 2), SingularSigmaError);
}

TEST_CASE("spectral_estimate: exact rank bound on noiseless data") {
    Rng base(RngSpec{58, 0});
    for (int trial = 0; trial < 10; ++trial) {
        Rng rng = base.fork(static_cast<std::uint64_t>(trial));
        const int g = 2 + static_cast<int>(rng.next_u64() % 2);
        const int m = 1 + static_cast<int>(rng.next_u64() % 2);
        DgpConfig cfg = small_cfg(24, 10, g, m, 1.0, 60 + trial);
        cfg.zero_noise_v = true;
        cfg.zero_noise_z = true;
        auto [panel, groups, params] = generate_dgp(cfg, rng);
        const Eigen::VectorXd b = test_helpers::random_vector(rng, 2);
        const DenseEigResult eigs = dense_eigs(make_A_operator(panel, b));
        const double norm = eigs.values.cwiseAbs().maxCoeff();
        int above = 0;
        for (Eigen::Index j = 0; j < eigs.values.size(); ++j)
            if (std::abs(eigs.values(j)) > 1e-8 * norm) ++above;
        CHECK(above <= 2 * g * m + 2);
    }
}

TEST_CASE("spectral_estimate: affine shift of y leaves beta unchanged") {
    Rng rng(RngSpec{59, 0});
    DgpConfig cfg = small_cfg(40, 12, 2, 1);
    auto [panel, groups, params] = generate_dgp(cfg, rng);
    const SpectralFit base = spectral_estimate(panel, 2, 1);
    BalancedPanel shifted = panel;
    shifted.y.array() += 3.25;
    const SpectralFit moved = spectral_estimate(shifted, 2, 1);
    CHECK((base.beta_tilde - moved.beta_tilde).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("spectral_estimate: inflated eigenvalue count keeps accuracy") {
    const Eigen::VectorXd beta = DgpConfig{}.effective_beta();
    double mae_default = 0.0, mae_inflated = 0.0;
    const int reps = 10;
    for (int rep = 0; rep < reps; ++rep) {
        Rng rng(RngSpec{61, static_cast<std::uint64_t>(rep)});
        DgpConfig cfg = small_cfg(200, 50, 2, 1);
        auto [panel, groups, params] = generate_dgp(cfg, rng);
        SpectralConfig inflated;
        inflated.gm_product = 2;
        inflated.k_eigs = 2 * 2 * 1 + 10;
        mae_default += (spectral_estimate(panel, 2, 1).beta_tilde - beta).cwiseAbs().mean();
        mae_inflated +=
            (reconstruct_quadratic(panel, inflated).beta_tilde - beta).cwiseAbs().mean();
    }
    CHECK(mae_inflated / reps <= 2.0 * mae_default / reps + 0.005);
}

TEST_CASE("spectral_estimate: k clamped with a warning when N < 2GM+2") {
    Rng rng(RngSpec{62, 0});
    DgpConfig cfg = small_cfg(6, 12, 2, 2);  // 2GM+2 = 10 > N would be false; use G=2,M=2 -> 10 > 6
    auto [panel, groups, params] = generate_dgp(cfg, rng);
    const SpectralFit fit = spectral_estimate(panel, 2, 2);
    CHECK_FALSE(fit.warnings.empty());
}

TEST_CASE("ife: J = G*M matches the grouped estimator bit for bit") {
    Rng rng(RngSpec{63, 0});
    DgpConfig cfg = small_cfg(50, 15, 2, 1);
    auto [panel, groups, params] = generate_dgp(cfg, rng);
    const SpectralFit grouped = spectral_estimate(panel, 2, 1);
    const SpectralFit ife = spectral_estimate_ife(panel, 2);
    CHECK((grouped.beta_tilde - ife.beta_tilde).cwiseAbs().maxCoeff() == 0.0);
    CHECK(grouped.l_hat == ife.l_hat);
}

TEST_CASE("ife: J = 0 rejected") {
    Rng rng(RngSpec{64, 0});
    DgpConfig cfg = small_cfg(10, 5, 2, 1);
    auto [panel, groups, params] = generate_dgp(cfg, rng);
    CHECK_THROWS_AS(spectral_estimate_ife(panel, 0), ValidationError);
}

TEST_CASE("ife: recovers beta under a 2-factor interactive model") {
    // y = x'beta + kappa'phi + v, x = omega'phi + z, J = 2 Gaussian factors.
    const int reps = 20;
    Eigen::VectorXd beta(2);
    beta << -1.0, 0.8;
    int good = 0;
    for (int rep = 0; rep < reps; ++rep) {
        Rng rng(RngSpec{65, static_cast<std::uint64_t>(rep)});
        const Eigen::Index n = 200, t = 200;
        BalancedPanel p;
        p.n_units = n;
        p.n_periods = t;
        p.n_covariates = 2;
        const Eigen::MatrixXd phi = test_helpers::random_matrix(rng, 2, t);
        const Eigen::MatrixXd kappa = test_helpers::random_matrix(rng, n, 2);
        std::vector<Eigen::MatrixXd> omega;
        omega.push_back(test_helpers::random_matrix(rng, n, 2));
        omega.push_back(test_helpers::random_matrix(rng, n, 2));
        p.x.push_back(omega[0] * phi + test_helpers::random_matrix(rng, n, t));
        p.x.push_back(omega[1] * phi + test_helpers::random_matrix(rng, n, t));
        p.y = beta(0) * p.x[0] + beta(1) * p.x[1] + kappa * phi +
              test_helpers::random_matrix(rng, n, t);
        for (Eigen::Index i = 0; i < n; ++i) p.unit_ids.push_back("u" + std::to_string(i));
        for (Eigen::Index s = 0; s < t; ++s) p.period_ids.push_back(std::to_string(s));
        const SpectralFit fit = spectral_estimate_ife(p, 2);
        if ((fit.beta_tilde - beta).norm() <= 0.05) ++good;
    }
    CHECK(good >= 18);
}

TEST_CASE("estimate_gm_product: noiseless rank bound and zero-panel floor") {
    Rng rng(RngSpec{66, 0});
    DgpConfig cfg = small_cfg(30, 10, 2, 1);
    cfg.zero_noise_v = true;
    cfg.zero_noise_z = true;
    auto [panel, groups, params] = generate_dgp(cfg, rng);
    const int est = estimate_gm_product(panel);
    CHECK(est >= 1);
    CHECK(est <= 2);

    BalancedPanel zero;
    zero.n_units = 5;
    zero.n_periods = 4;
    zero.n_covariates = 1;
    zero.y = Eigen::MatrixXd::Zero(5, 4);
    zero.x = {Eigen::MatrixXd::Zero(5, 4)};
    for (int i = 0; i < 5; ++i) zero.unit_ids.push_back("u" + std::to_string(i));
    for (int s = 0; s < 4; ++s) zero.period_ids.push_back(std::to_string(s));
    CHECK(estimate_gm_product(zero) == 1);
}

TEST_CASE("estimate_gm_product: never overestimates on the simulation design") {
    // At b = 0 this design exposes four strong eigenvalues (the spec's own
    // noiseless example bounds rank(A^0) by 4 for G=2, M=1), so the counting
    // heuristic underestimates G*M here -- the benign direction: dropped
    // eigenvalues are asymptotically vanishing and consistency survives.
    const int reps = 20;
    for (int rep = 0; rep < reps; ++rep) {
        Rng rng(RngSpec{67, static_cast<std::uint64_t>(rep)});
        DgpConfig cfg = small_cfg(400, 100, 2, 1);
        auto [panel, groups, params] = generate_dgp(cfg, rng);
        const int est = estimate_gm_product(panel);
        CHECK(est >= 1);
        CHECK(est <= 2);
    }
}

TEST_CASE("spectral convergence: error shrinks with the panel") {
    const Eigen::VectorXd beta = DgpConfig{}.effective_beta();
    std::vector<double> small_err, large_err;
    for (int rep = 0; rep < 10; ++rep) {
        Rng rng_small(RngSpec{68, static_cast<std::uint64_t>(rep)});
        Rng rng_large(RngSpec{69, static_cast<std::uint64_t>(rep)});
        DgpConfig cfg_small = small_cfg(100, 20, 2, 1);
        DgpConfig cfg_large = small_cfg(400, 100, 2, 1);
        auto [p_small, g1, d1] = generate_dgp(cfg_small, rng_small);
        auto [p_large, g2, d2] = generate_dgp(cfg_large, rng_large);
        small_err.push_back((spectral_estimate(p_small, 2, 1).beta_tilde - beta).norm());
        large_err.push_back((spectral_estimate(p_large, 2, 1).beta_tilde - beta).norm());
    }
    std::sort(small_err.begin(), small_err.end());
    std::sort(large_err.begin(), large_err.end());
    CHECK(large_err[5] <= 0.5 * small_err[5]);
}
