#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "gpanel/errors.hpp"
#include "gpanel/rng.hpp"

namespace gpanel {

/// Balanced panel: N units observed at T periods with d covariates.
/// y(i,t) is the outcome, x[k](i,t) the k-th covariate. Immutable by
/// convention after construction; validate() enforces the invariants.
struct BalancedPanel {
    Eigen::Index n_units = 0;    // N
    Eigen::Index n_periods = 0;  // T
    Eigen::Index n_covariates = 0;  // d

    Eigen::MatrixXd y;                 // N x T
    std::vector<Eigen::MatrixXd> x;    // d matrices, each N x T
    std::vector<std::string> unit_ids;    // distinct, first-appearance order
    std::vector<std::string> period_ids;  // strictly increasing

    void validate() const;

    /// Covariate vector x_it.
    Eigen::VectorXd covariate_row(Eigen::Index i, Eigen::Index t) const {
        Eigen::VectorXd v(n_covariates);
        for (Eigen::Index k = 0; k < n_covariates; ++k) v(k) = x[k](i, t);
        return v;
    }

    /// Sub-panel restricted to the given unit indices (order preserved).
    BalancedPanel select_units(const std::vector<Eigen::Index>& idx) const;
};

/// Labels take values in {1..n_groups}.
struct GroupAssignment {
    std::vector<int> labels;
    int n_groups = 0;

    void validate(bool require_nonempty_groups = false) const;
};

/// Parameters of the simulation data-generating process. alpha(m) is the
/// G x T matrix of group-time effects for factor m; alpha(0) enters the
/// outcome equation directly.
struct DgpParams {
    Eigen::VectorXd beta;                     // d
    std::vector<Eigen::MatrixXd> alpha;       // M matrices, G x T
    std::vector<Eigen::MatrixXd> rho;         // M matrices, N x d
    std::optional<double> theta;              // AR coefficient, dynamic DGP only
    double sigma2 = 1.0;
    double trunc = 20.0;
};

/// Column mapping for long-format CSV. Empty covariate list means "every
/// column other than unit/time/y, in file order".
struct CsvSchema {
    std::string unit = "unit";
    std::string time = "time";
    std::string y = "y";
    std::vector<std::string> covariates;
};

/// Reads a long-format CSV (header row required) into a validated panel.
/// Rows may arrive in any order. Unit labels are mapped to indices in
/// first-appearance order; time labels are sorted (numerically when every
/// label parses as a finite number, else lexicographically).
BalancedPanel load_panel_csv(const std::string& path, const CsvSchema& schema = {});

/// Writes the canonical long format: unit,time,y,x1..xd.
void save_panel_csv(const BalancedPanel& panel, const std::string& path);

/// Residual matrix r(i,t) = y(i,t) - x_it'b.
Eigen::MatrixXd residuals(const BalancedPanel& panel, const Eigen::VectorXd& b);

/// Array of i.i.d. truncated-normal draws (see Rng::next_truncated_normal).
Eigen::MatrixXd sample_truncated_normal(Rng& rng, double sigma2, double trunc,
                                        Eigen::Index rows, Eigen::Index cols);

} // namespace gpanel
