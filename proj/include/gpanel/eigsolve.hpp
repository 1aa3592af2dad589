#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>

#include "gpanel/errors.hpp"
#include "gpanel/rng.hpp"

namespace gpanel {

/// Matrix-free view of a symmetric N x N matrix: apply(v) = A*v. A dense
/// materializer may be attached when one is cheap to provide.
struct SymmetricOperator {
    Eigen::Index dim = 0;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply;
    std::function<Eigen::MatrixXd()> materialize;  // optional

    bool has_dense() const { return static_cast<bool>(materialize); }
};

SymmetricOperator make_dense_operator(Eigen::MatrixXd a);

struct RandEigConfig {
    int k = 1;               // eigenvalues requested
    int p = 10;              // oversampling
    std::optional<int> q;    // power depth; default ceil(log N)
    RngSpec rng;
};

struct DenseEigResult {
    Eigen::VectorXd values;   // descending by |value|
    Eigen::MatrixXd vectors;  // orthonormal columns, matching order
};

/// Full symmetric eigendecomposition, eigenvalues ordered by descending
/// absolute value. Materializes the operator via dim applies when no dense
/// form is attached. Throws NonSymmetric when random probes u'Av != v'Au.
DenseEigResult dense_eigs(const SymmetricOperator& op);

/// Randomized estimates of the k largest-in-absolute-value eigenvalues:
/// Gaussian sketch, q+1 power applies with re-orthonormalization, projection
/// B = Q'A, Rayleigh quotients of BB', signed square roots. A sketch that
/// turns non-finite is retried once with fresh randomness, then rejected.
Eigen::VectorXd randomized_topk_abs_eigs(const SymmetricOperator& op, const RandEigConfig& cfg);

} // namespace gpanel
