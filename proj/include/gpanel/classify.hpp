#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "gpanel/panel.hpp"
#include "gpanel/spectral.hpp"

namespace gpanel {

/// Random half-split of units. i0 holds indices with h_i = 1, i1 those with
/// h_i = 0, mirroring the subsample names used throughout.
struct SplitPlan {
    std::vector<int> h;
    std::vector<Eigen::Index> i0;
    std::vector<Eigen::Index> i1;
    RngSpec rng;
};

/// i.i.d. fair Bernoulli labels; an empty half triggers a retry on a fresh
/// substream (at most 64, then DegenerateSplit).
SplitPlan make_split(Eigen::Index n_units, const RngSpec& rng);

struct ProjectedVectors {
    Eigen::MatrixXd a_hat;          // N x T, row i = projected vector of unit i
    Eigen::MatrixXd f_hat0, f_hat1; // T x G orthonormal factor bases per half
    Eigen::VectorXd beta_half0, beta_half1;
};

/// Per-half spectral estimates, T x T second-moment matrices of residuals,
/// top-G eigenbases, and cross-fitted projections: a unit's own half never
/// enters the objects used to project it. beta_override skips the per-half
/// spectral step and uses the given coefficients for both halves.
ProjectedVectors projected_vectors(const BalancedPanel& panel, const SplitPlan& split, int g,
                                   int m, const SpectralConfig& spectral_cfg = {},
                                   const std::optional<Eigen::VectorXd>& beta_override = {});

/// One greedy pass over units in index order: a unit joins the lowest-indexed
/// existing group whose running mean lies within lambda (Euclidean norm),
/// otherwise founds a new group. Returns 1-based labels in order of group
/// creation and the number of groups.
std::pair<std::vector<int>, int> run_classification_algorithm(const Eigen::MatrixXd& a_hat,
                                                              double lambda);

struct LambdaSearchResult {
    double lambda_hat = 0.0;
    std::vector<int> labels;
    int m = 0;
    std::vector<std::pair<double, int>> m_curve;  // sampled (lambda, m)
};

/// Smallest lambda with m(lambda) <= G: ascending scan over {0} and all
/// pairwise distances, then bisection between the accepted candidate and its
/// predecessor to 1e-9 of the largest distance.
LambdaSearchResult find_lambda_hat(const Eigen::MatrixXd& a_hat, int g);

struct Classification {
    GroupAssignment g_hat;
    double lambda_hat = 0.0;
    Eigen::MatrixXd a_hat;
    Eigen::MatrixXd f_hat0, f_hat1;
    Eigen::VectorXd beta_half0, beta_half1;
    std::vector<std::pair<double, int>> m_curve;
    SplitPlan split;
};

/// End-to-end classifier: split, project, search lambda, label.
Classification classify(const BalancedPanel& panel, int g, int m, const RngSpec& rng,
                        const SpectralConfig& spectral_cfg = {});

/// Writes unit_id, h, g_hat rows.
void save_classification_csv(const Classification& cls, const BalancedPanel& panel,
                             const std::string& path);

} // namespace gpanel
