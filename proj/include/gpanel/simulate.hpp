#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "gpanel/panel.hpp"
#include "gpanel/spectral.hpp"

namespace gpanel {

/// Simulation design. Defaults follow the Monte Carlo setup: two covariates
/// with beta = (-1, 0.8), loading location varrho = 3, truncation constant 20,
/// 50 replications. zero_noise_* stub the idiosyncratic draws to exact zeros
/// (the substreams stay aligned).
struct DgpConfig {
    Eigen::Index n_units = 100;
    Eigen::Index n_periods = 20;
    int n_groups = 2;   // G
    int n_factors = 1;  // M, 1 or 2
    double sigma2 = 1.0;
    double varrho = 3.0;
    double trunc = 20.0;
    Eigen::VectorXd beta;  // empty -> (-1, 0.8)
    std::optional<double> theta;  // set -> dynamic DGP (AR with 100-period burn-in)
    bool zero_noise_v = false;
    bool zero_noise_z = false;
    int n_reps = 50;
    std::uint64_t seed = 0;

    Eigen::VectorXd effective_beta() const {
        if (beta.size() > 0) return beta;
        Eigen::VectorXd b(2);
        b << -1.0, 0.8;
        return b;
    }
    void validate() const;
};

/// Draws one panel: equal group sizes (remainder to the last group),
/// truncated-normal effects/loadings/noise, covariates from the factor
/// structure, outcomes from the model equation.
std::tuple<BalancedPanel, GroupAssignment, DgpParams> generate_dgp(const DgpConfig& cfg, Rng& rng);

/// Fraction of units whose estimated label differs from the true one under
/// the best injective relabeling (exact enumeration up to 8 labels, Hungarian
/// assignment beyond).
double misclassification_rate(const GroupAssignment& g_hat, const GroupAssignment& g_true);

/// Min-mismatch label matching via enumeration (test oracle; requires
/// max(G_hat, G_true) <= 8).
double misclassification_rate_enumerated(const GroupAssignment& g_hat,
                                         const GroupAssignment& g_true);

enum class Estimator { spectral, post_spectral, oracle };

struct ReplicationResult {
    int rep_index = 0;
    Eigen::VectorXd beta_tilde;       // S
    Eigen::VectorXd beta_hat_ps;      // P-S
    Eigen::VectorXd beta_hat_oracle;  // Oracle
    bool ok_s = false, ok_ps = false, ok_oracle = false;
    double misclass_s = 0.0;
    double wall_seconds = 0.0;
};

struct CellResult {
    DgpConfig cfg;
    double mae_s = 0.0, mae_ps = 0.0, mae_oracle = 0.0;
    double misclass_s = 0.0;
    int failures_s = 0, failures_ps = 0, failures_oracle = 0;
    std::vector<ReplicationResult> reps;
};

/// Runs cfg.n_reps independent replications (replication r owns substream r)
/// and aggregates mean absolute errors, averaging |error| over coefficients
/// and then over replications. Failed replications are excluded per estimator
/// and counted. Results are identical for any n_threads.
CellResult run_replications(const DgpConfig& cfg, const std::vector<Estimator>& estimators,
                            int n_threads = 1, const SpectralConfig& spectral_cfg = {});

enum class TableFormat { csv, markdown };

/// Fixed column order, 3-decimal fixed formatting.
std::string emit_table(const std::vector<CellResult>& rows, TableFormat format);

/// Per-replication rows (machine output; no timing columns).
std::string emit_per_rep_csv(const std::vector<CellResult>& rows);

/// The 18-cell design grid of one results table: G in {2,7} x T in
/// {20,50,100} x N in {100,200,400}, with (sigma2, M) fixed by the table
/// number (1:(1,1), 2:(4,1), 3:(1,2), 4:(4,2)).
std::vector<DgpConfig> paper_table_grid(int table_number, int n_reps, std::uint64_t seed);

} // namespace gpanel
