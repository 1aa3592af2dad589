#include "gpanel/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "gpanel/postspectral.hpp"

namespace gpanel {

void DgpConfig::validate() const {
    if (n_units < 1 || n_periods < 1) throw ValidationError("dgp: N and T must be positive");
    if (n_groups < 1) throw ValidationError("dgp: G must be >= 1");
    if (n_units < n_groups) throw ValidationError("dgp: N must be at least G");
    if (n_factors != 1 && n_factors != 2)
        throw ValidationError("dgp: the loading recipe covers M = 1 or 2 only");
    if (sigma2 <= 0.0 || trunc <= 0.0 || n_reps < 1)
        throw ValidationError("dgp: sigma2, trunc, n_reps must be positive");
    if (theta && std::abs(*theta) >= 1.0)
        throw ValidationError("dgp: |theta| must be < 1");
}

std::tuple<BalancedPanel, GroupAssignment, DgpParams> generate_dgp(const DgpConfig& cfg,
                                                                   Rng& rng) {
    cfg.validate();
    const Eigen::Index n = cfg.n_units;
    const int g = cfg.n_groups;
    const int m_factors = cfg.n_factors;
    const Eigen::VectorXd beta = cfg.effective_beta();
    const Eigen::Index d = beta.size();
    const Eigen::Index burn = cfg.theta ? 100 : 0;
    const Eigen::Index t_total = cfg.n_periods + burn;

    // Equal group sizes; the last group takes the remainder.
    GroupAssignment groups;
    groups.n_groups = g;
    groups.labels.resize(static_cast<std::size_t>(n));
    const Eigen::Index base = n / g;
    for (Eigen::Index i = 0; i < n; ++i)
        groups.labels[static_cast<std::size_t>(i)] =
            static_cast<int>(std::min<Eigen::Index>(i / base, g - 1)) + 1;

    Rng alpha_rng = rng.fork(1);
    Rng rho_rng = rng.fork(2);
    Rng z_rng = rng.fork(3);
    Rng v_rng = rng.fork(4);

    DgpParams params;
    params.beta = beta;
    params.sigma2 = cfg.sigma2;
    params.trunc = cfg.trunc;
    params.theta = cfg.theta;
    params.alpha.reserve(static_cast<std::size_t>(m_factors));
    for (int m = 0; m < m_factors; ++m)
        params.alpha.push_back(
            sample_truncated_normal(alpha_rng, cfg.sigma2, cfg.trunc, g, t_total));

    // Loadings: factor 1 at varrho + Z for every covariate; factor 2 at
    // 1 + Z on the first covariate and plain Z on the rest.
    params.rho.reserve(static_cast<std::size_t>(m_factors));
    for (int m = 0; m < m_factors; ++m) {
        Eigen::MatrixXd rho(n, d);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index k = 0; k < d; ++k) {
                const double offset = m == 0 ? cfg.varrho : (k == 0 ? 1.0 : 0.0);
                rho(i, k) = offset + rho_rng.next_truncated_normal(1.0, cfg.trunc);
            }
        params.rho.push_back(std::move(rho));
    }

    BalancedPanel panel;
    panel.n_units = n;
    panel.n_periods = cfg.n_periods;
    panel.n_covariates = d;

    std::vector<Eigen::MatrixXd> x_full(static_cast<std::size_t>(d));
    for (Eigen::Index k = 0; k < d; ++k) {
        Eigen::MatrixXd z = cfg.zero_noise_z
                                ? Eigen::MatrixXd::Zero(n, t_total)
                                : sample_truncated_normal(z_rng, 1.0, cfg.trunc, n, t_total);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int gamma = groups.labels[static_cast<std::size_t>(i)] - 1;
            for (Eigen::Index t = 0; t < t_total; ++t) {
                double value = z(i, t);
                for (int m = 0; m < m_factors; ++m)
                    value += params.rho[static_cast<std::size_t>(m)](i, k) *
                             params.alpha[static_cast<std::size_t>(m)](gamma, t);
                z(i, t) = value;
            }
        }
        x_full[static_cast<std::size_t>(k)] = std::move(z);
    }

    Eigen::MatrixXd v = cfg.zero_noise_v
                            ? Eigen::MatrixXd::Zero(n, t_total)
                            : sample_truncated_normal(v_rng, 1.0, cfg.trunc, n, t_total);
    Eigen::MatrixXd y_full(n, t_total);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int gamma = groups.labels[static_cast<std::size_t>(i)] - 1;
        double lag = 0.0;  // dynamic DGP starts at zero and burns in
        for (Eigen::Index t = 0; t < t_total; ++t) {
            double value = params.alpha[0](gamma, t) + v(i, t);
            for (Eigen::Index k = 0; k < d; ++k)
                value += beta(k) * x_full[static_cast<std::size_t>(k)](i, t);
            if (cfg.theta) value += *cfg.theta * lag;
            y_full(i, t) = value;
            lag = value;
        }
    }

    panel.y = y_full.rightCols(cfg.n_periods);
    panel.x.reserve(static_cast<std::size_t>(d));
    for (Eigen::Index k = 0; k < d; ++k)
        panel.x.push_back(x_full[static_cast<std::size_t>(k)].rightCols(cfg.n_periods));
    panel.unit_ids.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) panel.unit_ids.push_back("u" + std::to_string(i + 1));
    panel.period_ids.reserve(static_cast<std::size_t>(cfg.n_periods));
    for (Eigen::Index t = 0; t < cfg.n_periods; ++t)
        panel.period_ids.push_back(std::to_string(t + 1));

    // Keep only the exposed window of the effects in the returned params.
    if (burn > 0)
        for (auto& a : params.alpha) a = a.rightCols(cfg.n_periods).eval();

    return {std::move(panel), std::move(groups), std::move(params)};
}

namespace {

Eigen::MatrixXi confusion_matrix(const GroupAssignment& g_hat, const GroupAssignment& g_true,
                                 int size) {
    Eigen::MatrixXi conf = Eigen::MatrixXi::Zero(size, size);
    for (std::size_t i = 0; i < g_hat.labels.size(); ++i)
        conf(g_hat.labels[i] - 1, g_true.labels[i] - 1) += 1;
    return conf;
}

// Max-trace assignment on a square count matrix, O(n^3) Hungarian with
// potentials (minimizes negated counts).
long long best_assignment_hungarian(const Eigen::MatrixXi& counts) {
    const int n = static_cast<int>(counts.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = -static_cast<double>(counts(i0 - 1, j - 1)) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    long long matched = 0;
    for (int j = 1; j <= n; ++j)
        if (p[j] != 0) matched += counts(p[j] - 1, j - 1);
    return matched;
}

long long best_assignment_enumerated(const Eigen::MatrixXi& counts) {
    const int n = static_cast<int>(counts.rows());
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    long long best = 0;
    do {
        long long matched = 0;
        for (int e = 0; e < n; ++e) matched += counts(e, perm[static_cast<std::size_t>(e)]);
        best = std::max(best, matched);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

double misclass_from(const GroupAssignment& g_hat, const GroupAssignment& g_true,
                     bool force_enumeration) {
    if (g_hat.labels.size() != g_true.labels.size())
        throw DimensionMismatchError("misclassification_rate: label vectors differ in length");
    g_hat.validate();
    g_true.validate();
    const int size = std::max(g_hat.n_groups, g_true.n_groups);
    const Eigen::MatrixXi conf = confusion_matrix(g_hat, g_true, size);
    const bool enumerate = force_enumeration || size <= 8;
    if (force_enumeration && size > 8)
        throw ValidationError("misclassification_rate_enumerated: more than 8 labels");
    const long long matched =
        enumerate ? best_assignment_enumerated(conf) : best_assignment_hungarian(conf);
    return 1.0 - static_cast<double>(matched) / static_cast<double>(g_hat.labels.size());
}

} // namespace

double misclassification_rate(const GroupAssignment& g_hat, const GroupAssignment& g_true) {
    return misclass_from(g_hat, g_true, false);
}

double misclassification_rate_enumerated(const GroupAssignment& g_hat,
                                         const GroupAssignment& g_true) {
    return misclass_from(g_hat, g_true, true);
}

namespace {

ReplicationResult run_one_replication(const DgpConfig& cfg, int rep,
                                      const std::vector<Estimator>& estimators,
                                      const SpectralConfig& spectral_cfg) {
    const auto start = std::chrono::steady_clock::now();
    ReplicationResult res;
    res.rep_index = rep;

    Rng rep_rng(RngSpec{cfg.seed, static_cast<std::uint64_t>(rep)});
    Rng dgp_rng = rep_rng.fork(1);
    auto [panel, true_groups, params] = generate_dgp(cfg, dgp_rng);

    SpectralConfig cell_cfg = spectral_cfg;
    cell_cfg.rng = rep_rng.fork(2).spec();
    const RngSpec split_rng = rep_rng.fork(3).spec();

    auto wants = [&](Estimator e) {
        return std::find(estimators.begin(), estimators.end(), e) != estimators.end();
    };

    if (wants(Estimator::spectral)) {
        try {
            res.beta_tilde =
                spectral_estimate(panel, cfg.n_groups, cfg.n_factors, cell_cfg).beta_tilde;
            res.ok_s = true;
        } catch (const Error&) {
        }
    }
    if (wants(Estimator::post_spectral)) {
        try {
            auto [cls, fit] =
                post_spectral(panel, cfg.n_groups, cfg.n_factors, split_rng, cell_cfg);
            res.beta_hat_ps = fit.beta_hat;
            res.misclass_s = misclassification_rate(cls.g_hat, true_groups);
            res.ok_ps = true;
        } catch (const Error&) {
        }
    }
    if (wants(Estimator::oracle)) {
        try {
            res.beta_hat_oracle = oracle_ols(panel, true_groups).beta_hat;
            res.ok_oracle = true;
        } catch (const Error&) {
        }
    }

    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

double mean_abs_error(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
    return (estimate - truth).cwiseAbs().mean();
}

} // namespace

CellResult run_replications(const DgpConfig& cfg, const std::vector<Estimator>& estimators,
                            int n_threads, const SpectralConfig& spectral_cfg) {
    cfg.validate();
    CellResult cell;
    cell.cfg = cfg;
    cell.reps.resize(static_cast<std::size_t>(cfg.n_reps));

    const int workers = std::max(1, std::min(n_threads, cfg.n_reps));
    if (workers == 1) {
        for (int r = 0; r < cfg.n_reps; ++r)
            cell.reps[static_cast<std::size_t>(r)] =
                run_one_replication(cfg, r, estimators, spectral_cfg);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                for (int r = next.fetch_add(1); r < cfg.n_reps; r = next.fetch_add(1))
                    cell.reps[static_cast<std::size_t>(r)] =
                        run_one_replication(cfg, r, estimators, spectral_cfg);
            });
        }
        for (auto& th : pool) th.join();
    }

    // Aggregate in replication order.
    const Eigen::VectorXd beta = cfg.effective_beta();
    double sum_s = 0.0, sum_ps = 0.0, sum_oracle = 0.0, sum_mis = 0.0;
    int n_s = 0, n_ps = 0, n_oracle = 0;
    for (const auto& rep : cell.reps) {
        if (rep.ok_s) {
            sum_s += mean_abs_error(rep.beta_tilde, beta);
            ++n_s;
        }
        if (rep.ok_ps) {
            sum_ps += mean_abs_error(rep.beta_hat_ps, beta);
            sum_mis += rep.misclass_s;
            ++n_ps;
        }
        if (rep.ok_oracle) {
            sum_oracle += mean_abs_error(rep.beta_hat_oracle, beta);
            ++n_oracle;
        }
    }
    auto wants = [&](Estimator e) {
        return std::find(estimators.begin(), estimators.end(), e) != estimators.end();
    };
    cell.mae_s = n_s > 0 ? sum_s / n_s : std::numeric_limits<double>::quiet_NaN();
    cell.mae_ps = n_ps > 0 ? sum_ps / n_ps : std::numeric_limits<double>::quiet_NaN();
    cell.mae_oracle = n_oracle > 0 ? sum_oracle / n_oracle : std::numeric_limits<double>::quiet_NaN();
    cell.misclass_s = n_ps > 0 ? sum_mis / n_ps : std::numeric_limits<double>::quiet_NaN();
    cell.failures_s = wants(Estimator::spectral) ? cfg.n_reps - n_s : 0;
    cell.failures_ps = wants(Estimator::post_spectral) ? cfg.n_reps - n_ps : 0;
    cell.failures_oracle = wants(Estimator::oracle) ? cfg.n_reps - n_oracle : 0;
    return cell;
}

namespace {

std::string fixed3(double value) {
    if (std::isnan(value)) return "na";
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(3);
    os << value;
    return os.str();
}

} // namespace

std::string emit_table(const std::vector<CellResult>& rows, TableFormat format) {
    std::ostringstream os;
    if (format == TableFormat::csv) {
        os << "G,M,sigma2,T,N,reps,S,P-S,Oracle,misclass_S,failures\n";
        for (const auto& r : rows) {
            os << r.cfg.n_groups << ',' << r.cfg.n_factors << ',' << fixed3(r.cfg.sigma2) << ','
               << r.cfg.n_periods << ',' << r.cfg.n_units << ',' << r.cfg.n_reps << ','
               << fixed3(r.mae_s) << ',' << fixed3(r.mae_ps) << ',' << fixed3(r.mae_oracle) << ','
               << fixed3(r.misclass_s) << ','
               << (r.failures_s + r.failures_ps + r.failures_oracle) << "\n";
        }
    } else {
        os << "| G | M | sigma2 | T | N | S | P-S | Oracle | Misclass. S |\n";
        os << "|---|---|--------|---|---|---|-----|--------|-------------|\n";
        for (const auto& r : rows) {
            os << "| " << r.cfg.n_groups << " | " << r.cfg.n_factors << " | "
               << fixed3(r.cfg.sigma2) << " | " << r.cfg.n_periods << " | " << r.cfg.n_units
               << " | " << fixed3(r.mae_s) << " | " << fixed3(r.mae_ps) << " | "
               << fixed3(r.mae_oracle) << " | " << fixed3(r.misclass_s) << " |\n";
        }
    }
    return os.str();
}

std::string emit_per_rep_csv(const std::vector<CellResult>& rows) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(12);
    os << "G,M,sigma2,T,N,rep,ok_s,ok_ps,ok_oracle,mae_s,mae_ps,mae_oracle,misclass_s\n";
    for (const auto& cell : rows) {
        const Eigen::VectorXd beta = cell.cfg.effective_beta();
        for (const auto& rep : cell.reps) {
            os << cell.cfg.n_groups << ',' << cell.cfg.n_factors << ',' << cell.cfg.sigma2 << ','
               << cell.cfg.n_periods << ',' << cell.cfg.n_units << ',' << rep.rep_index << ','
               << rep.ok_s << ',' << rep.ok_ps << ',' << rep.ok_oracle << ','
               << (rep.ok_s ? mean_abs_error(rep.beta_tilde, beta) : -1.0) << ','
               << (rep.ok_ps ? mean_abs_error(rep.beta_hat_ps, beta) : -1.0) << ','
               << (rep.ok_oracle ? mean_abs_error(rep.beta_hat_oracle, beta) : -1.0) << ','
               << (rep.ok_ps ? rep.misclass_s : -1.0) << "\n";
        }
    }
    return os.str();
}

std::vector<DgpConfig> paper_table_grid(int table_number, int n_reps, std::uint64_t seed) {
    if (table_number < 1 || table_number > 4)
        throw ValidationError("paper_table_grid: table number must be 1..4");
    const double sigma2 = (table_number == 2 || table_number == 4) ? 4.0 : 1.0;
    const int m = table_number >= 3 ? 2 : 1;

    std::vector<DgpConfig> grid;
    for (int g : {2, 7}) {
        for (Eigen::Index t : {20, 50, 100}) {
            for (Eigen::Index n : {100, 200, 400}) {
                DgpConfig cfg;
                cfg.n_units = n;
                cfg.n_periods = t;
                cfg.n_groups = g;
                cfg.n_factors = m;
                cfg.sigma2 = sigma2;
                cfg.n_reps = n_reps;
                cfg.seed = seed;
                grid.push_back(cfg);
            }
        }
    }
    return grid;
}

} // namespace gpanel
