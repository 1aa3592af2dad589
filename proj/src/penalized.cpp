#include "gpanel/penalized.hpp"

#include <algorithm>
#include <cmath>

namespace gpanel {

namespace {

double soft_threshold(double value, double threshold) {
    if (value > threshold) return value - threshold;
    if (value < -threshold) return value + threshold;
    return 0.0;
}

// max_k dist(0, 2(Qb)_k + s_k + lambda * d|b_k|)
double kkt_residual(const Eigen::MatrixXd& q, const Eigen::VectorXd& s, double lambda,
                    const Eigen::VectorXd& b) {
    const Eigen::VectorXd grad = 2.0 * (q * b) + s;
    double res = 0.0;
    for (Eigen::Index k = 0; k < b.size(); ++k) {
        const double r = b(k) != 0.0 ? std::abs(grad(k) + lambda * (b(k) > 0.0 ? 1.0 : -1.0))
                                     : std::max(std::abs(grad(k)) - lambda, 0.0);
        res = std::max(res, r);
    }
    return res;
}

double objective(const Eigen::MatrixXd& q, const Eigen::VectorXd& s, double lambda,
                 const Eigen::VectorXd& b) {
    return b.dot(q * b) + s.dot(b) + lambda * b.lpNorm<1>();
}

} // namespace

LassoSolution solve_penalized(const LassoProblem& problem, double tol, int max_iter) {
    if (problem.lambda < 0.0) throw ValidationError("solve_penalized: lambda must be >= 0");
    if (problem.sigma_hat.rows() != problem.sigma_hat.cols() ||
        problem.sigma_hat.rows() != problem.s_hat.size())
        throw DimensionMismatchError("solve_penalized: sigma_hat/s_hat shape mismatch");
    const Eigen::Index d = problem.s_hat.size();

    // Condition the quadratic: clip eigenvalues below psd_floor.
    Eigen::MatrixXd sym = 0.5 * (problem.sigma_hat + problem.sigma_hat.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw NumericError("solve_penalized: eigensolve failed");
    Eigen::MatrixXd q = sym;
    if (es.eigenvalues().minCoeff() < 0.0) {
        if (!problem.psd_floor.has_value())
            throw NotConditionedError("solve_penalized: sigma_hat indefinite, conditioning disabled");
        const double floor = std::max(*problem.psd_floor, 0.0);
        q = es.eigenvectors() * es.eigenvalues().cwiseMax(floor).asDiagonal() *
            es.eigenvectors().transpose();
    }

    LassoSolution sol;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd qb = Eigen::VectorXd::Zero(d);
    double prev_obj = objective(q, problem.s_hat, problem.lambda, b);
    sol.converged = false;
    for (int sweep = 0; sweep < max_iter; ++sweep) {
        for (Eigen::Index k = 0; k < d; ++k) {
            const double qkk = q(k, k);
            const double partial = 2.0 * (qb(k) - qkk * b(k)) + problem.s_hat(k);
            const double bk_new =
                qkk > 0.0 ? soft_threshold(-partial, problem.lambda) / (2.0 * qkk) : 0.0;
            const double delta = bk_new - b(k);
            if (delta != 0.0) {
                qb.noalias() += delta * q.col(k);
                b(k) = bk_new;
            }
        }
        sol.iterations = sweep + 1;

        const double obj = objective(q, problem.s_hat, problem.lambda, b);
        if (obj > prev_obj + 1e-10 * (1.0 + std::abs(prev_obj)))
            throw NumericError("solve_penalized: objective increased across a sweep");
        prev_obj = obj;

        if (kkt_residual(q, problem.s_hat, problem.lambda, b) <= tol) {
            sol.converged = true;
            break;
        }
    }

    sol.beta_lambda = b;
    sol.kkt_residual = kkt_residual(q, problem.s_hat, problem.lambda, b);  // fresh recompute
    sol.objective = objective(q, problem.s_hat, problem.lambda, b);
    if (!sol.converged)
        sol.warnings.push_back("max_iter reached before KKT tolerance; returning best iterate");
    return sol;
}

double lambda_rule(Eigen::Index n, Eigen::Index t, Eigen::Index d, double c) {
    if (n < 1 || t < 1 || d < 1) throw ValidationError("lambda_rule: N, T, d must be positive");
    const double tn = static_cast<double>(std::min(n, t));
    const double nt = static_cast<double>(n) * static_cast<double>(t);
    return c * (1.0 / tn + std::sqrt(std::log(static_cast<double>(d)) / nt));
}

LassoSolution penalized_spectral(const BalancedPanel& panel, int g, int m, double lambda,
                                 const SpectralConfig& cfg) {
    if (g < 1 || m < 1) throw ValidationError("penalized_spectral: G and M must be >= 1");
    SpectralConfig run_cfg = cfg;
    run_cfg.gm_product = g * m;

    std::vector<std::string> warnings;
    if (panel.n_covariates > 200)
        warnings.push_back("d = " + std::to_string(panel.n_covariates) +
                           ": probe count grows as d^2; expect a long reconstruction");

    std::size_t probe_index = 0;
    auto f = [&](const Eigen::VectorXd& b) {
        SpectralConfig probe_cfg = run_cfg;
        if (run_cfg.backend == EigBackend::randomized ||
            (run_cfg.backend == EigBackend::automatic && panel.n_units > run_cfg.dense_threshold)) {
            probe_cfg.rng = Rng(run_cfg.rng).fork(probe_index).spec();
        }
        ++probe_index;
        return f_hat(panel, b, probe_cfg, &warnings);
    };
    const QuadraticCoefficients coef =
        reconstruct_coefficients_from_f(f, panel.n_covariates);

    LassoProblem prob;
    prob.sigma_hat = coef.sigma_hat;
    prob.s_hat = coef.s_hat;
    prob.lambda = lambda;
    LassoSolution sol = solve_penalized(prob);
    sol.warnings.insert(sol.warnings.begin(), warnings.begin(), warnings.end());
    return sol;
}

} // namespace gpanel
