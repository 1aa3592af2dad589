#include "gpanel/eigsolve.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

namespace gpanel {

namespace {

// Sort eigenpairs by descending |value|; ties broken by descending value.
std::vector<Eigen::Index> abs_order(const Eigen::VectorXd& values) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        const double aa = std::abs(values(a)), ab = std::abs(values(b));
        if (aa != ab) return aa > ab;
        return values(a) > values(b);
    });
    return order;
}

void check_symmetry_probes(const SymmetricOperator& op, Rng& rng) {
    const Eigen::Index n = op.dim;
    const int n_probes = 3;
    for (int s = 0; s < n_probes; ++s) {
        Eigen::VectorXd u(n), v(n);
        for (Eigen::Index i = 0; i < n; ++i) u(i) = rng.next_normal(1.0);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.next_normal(1.0);
        const Eigen::VectorXd au = op.apply(u);
        const Eigen::VectorXd av = op.apply(v);
        const double uav = u.dot(av), vau = v.dot(au);
        const double scale = std::max({std::abs(uav), std::abs(vau),
                                       au.norm() * v.norm(), 1e-300});
        if (std::abs(uav - vau) > 1e-10 * scale)
            throw NonSymmetricError("dense_eigs: symmetry probe failed");
    }
}

} // namespace

SymmetricOperator make_dense_operator(Eigen::MatrixXd a) {
    if (a.rows() != a.cols()) throw DimensionMismatchError("operator: matrix not square");
    auto shared = std::make_shared<Eigen::MatrixXd>(std::move(a));
    SymmetricOperator op;
    op.dim = shared->rows();
    op.apply = [shared](const Eigen::VectorXd& v) -> Eigen::VectorXd { return (*shared) * v; };
    op.materialize = [shared]() { return *shared; };
    return op;
}

DenseEigResult dense_eigs(const SymmetricOperator& op) {
    if (op.dim <= 0) throw ValidationError("dense_eigs: empty operator");

    Eigen::MatrixXd a;
    if (op.has_dense()) {
        a = op.materialize();
        const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
        if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
            throw NonSymmetricError("dense_eigs: materialized matrix not symmetric");
    } else {
        Rng probe_rng(RngSpec{0x5ca1ab1e, 0});
        check_symmetry_probes(op, probe_rng);
        a.resize(op.dim, op.dim);
        Eigen::VectorXd e = Eigen::VectorXd::Zero(op.dim);
        for (Eigen::Index j = 0; j < op.dim; ++j) {
            e(j) = 1.0;
            a.col(j) = op.apply(e);
            e(j) = 0.0;
        }
        a = 0.5 * (a + a.transpose()).eval();
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (es.info() != Eigen::Success) throw NumericError("dense_eigs: decomposition failed");

    const auto order = abs_order(es.eigenvalues());
    DenseEigResult res;
    res.values.resize(op.dim);
    res.vectors.resize(op.dim, op.dim);
    for (Eigen::Index j = 0; j < op.dim; ++j) {
        res.values(j) = es.eigenvalues()(order[static_cast<std::size_t>(j)]);
        res.vectors.col(j) = es.eigenvectors().col(order[static_cast<std::size_t>(j)]);
    }
    return res;
}

namespace {

Eigen::VectorXd randomized_pass(const SymmetricOperator& op, int k, int p, int q, Rng& rng) {
    const Eigen::Index n = op.dim;
    const Eigen::Index w = k + p;  // sketch width

    Eigen::MatrixXd omega(n, w);
    for (Eigen::Index j = 0; j < w; ++j)
        for (Eigen::Index i = 0; i < n; ++i) omega(i, j) = rng.next_normal(1.0);

    // Y = A^{q+1} Omega, re-orthonormalized after every apply so the powers
    // cannot overflow; the column space is unchanged.
    Eigen::MatrixXd q_mat = omega;
    for (int step = 0; step <= q; ++step) {
        Eigen::MatrixXd y(n, w);
        for (Eigen::Index j = 0; j < w; ++j) y.col(j) = op.apply(q_mat.col(j));
        if (!y.allFinite()) throw DegenerateSketchError("randomized eigs: non-finite sketch");
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(y);
        q_mat = qr.householderQ() * Eigen::MatrixXd::Identity(n, w);
    }

    // W = A*Q, so B = Q'A = W'. One extra block apply gives A*W for the
    // Rayleigh quotients s_j' A s_j without further operator calls.
    Eigen::MatrixXd w_mat(n, w);
    for (Eigen::Index j = 0; j < w; ++j) w_mat.col(j) = op.apply(q_mat.col(j));
    Eigen::MatrixXd aw_mat(n, w);
    for (Eigen::Index j = 0; j < w; ++j) aw_mat.col(j) = op.apply(w_mat.col(j));
    if (!w_mat.allFinite() || !aw_mat.allFinite())
        throw DegenerateSketchError("randomized eigs: non-finite projection");

    const Eigen::MatrixXd bbt = w_mat.transpose() * w_mat;       // BB' (w x w)
    const Eigen::MatrixXd waw = w_mat.transpose() * aw_mat;      // W'AW (w x w)
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(bbt);
    if (es.info() != Eigen::Success)
        throw DegenerateSketchError("randomized eigs: small eigenproblem failed");

    Eigen::VectorXd lambda(w);
    for (Eigen::Index j = 0; j < w; ++j) {
        const Eigen::VectorXd s_tilde = es.eigenvectors().col(j);
        const Eigen::VectorXd s = w_mat * s_tilde;  // s_j = B' s~_j
        const double s_norm = s.norm();
        if (s_norm < 1e-300) {
            lambda(j) = 0.0;
            continue;
        }
        // ||B'B s_j|| = ||W (W'W) s~...||; keep the literal form
        const Eigen::VectorXd bbs = w_mat * (w_mat.transpose() * s);
        const double rayleigh = s_tilde.dot(waw * s_tilde);  // s_j'A s_j
        const double sign = rayleigh < 0.0 ? -1.0 : 1.0;
        lambda(j) = sign * std::sqrt(bbs.norm() / s_norm);
    }

    const auto order = abs_order(lambda);
    Eigen::VectorXd top(k);
    for (int j = 0; j < k; ++j) top(j) = lambda(order[static_cast<std::size_t>(j)]);
    return top;
}

} // namespace

Eigen::VectorXd randomized_topk_abs_eigs(const SymmetricOperator& op, const RandEigConfig& cfg) {
    if (cfg.k < 1) throw ValidationError("randomized eigs: k must be >= 1");
    if (cfg.p < 1) throw ValidationError("randomized eigs: p must be >= 1");
    if (cfg.k + cfg.p > op.dim)
        throw ValidationError("randomized eigs: k + p exceeds operator dimension");
    const int q = cfg.q.value_or(static_cast<int>(
        std::ceil(std::log(static_cast<double>(std::max<Eigen::Index>(op.dim, 2))))));
    if (q < 0) throw ValidationError("randomized eigs: q must be >= 0");

    Rng rng(cfg.rng);
    try {
        return randomized_pass(op, cfg.k, cfg.p, q, rng);
    } catch (const DegenerateSketchError&) {
        Rng retry = rng.fork(0xdead);
        return randomized_pass(op, cfg.k, cfg.p, q, retry);
    }
}

} // namespace gpanel
