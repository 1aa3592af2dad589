#include "gpanel/classify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace gpanel {

SplitPlan make_split(Eigen::Index n_units, const RngSpec& rng) {
    const int max_retries = 64;
    for (int attempt = 0; attempt < max_retries; ++attempt) {
        Rng gen = attempt == 0 ? Rng(rng) : Rng(rng).fork(static_cast<std::uint64_t>(attempt));
        SplitPlan plan;
        plan.rng = rng;
        plan.h.resize(static_cast<std::size_t>(n_units));
        for (Eigen::Index i = 0; i < n_units; ++i) {
            const int hi = gen.next_uniform() < 0.5 ? 0 : 1;
            plan.h[static_cast<std::size_t>(i)] = hi;
            (hi == 1 ? plan.i0 : plan.i1).push_back(i);
        }
        if (!plan.i0.empty() && !plan.i1.empty()) return plan;
    }
    throw DegenerateSplitError("make_split: could not produce two nonempty halves");
}

namespace {

// Residual T-vectors for the units of one half, as rows.
Eigen::MatrixXd half_residuals(const BalancedPanel& panel, const std::vector<Eigen::Index>& idx,
                               const Eigen::VectorXd& beta) {
    Eigen::MatrixXd full = residuals(panel, beta);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), panel.n_periods);
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = full.row(idx[r]);
    return out;
}

// Top-g eigenvectors (descending eigenvalue) with signs fixed so the first
// nonzero component is positive.
Eigen::MatrixXd top_eigenbasis(const Eigen::MatrixXd& b_mat, int g) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b_mat);
    if (es.info() != Eigen::Success) throw NumericError("projected_vectors: eigensolve failed");
    const Eigen::Index t = b_mat.rows();
    Eigen::MatrixXd f(t, g);
    for (int c = 0; c < g; ++c) {
        Eigen::VectorXd v = es.eigenvectors().col(t - 1 - c);  // Eigen sorts ascending
        for (Eigen::Index j = 0; j < t; ++j) {
            if (v(j) != 0.0) {
                if (v(j) < 0.0) v = -v;
                break;
            }
        }
        f.col(c) = v;
    }
    return f;
}

} // namespace

ProjectedVectors projected_vectors(const BalancedPanel& panel, const SplitPlan& split, int g,
                                   int m, const SpectralConfig& spectral_cfg,
                                   const std::optional<Eigen::VectorXd>& beta_override) {
    if (split.i0.empty() || split.i1.empty())
        throw ValidationError("projected_vectors: both halves must be nonempty");
    if (panel.n_periods < g)
        throw TSmallerThanGError("projected_vectors: T must be at least G");

    ProjectedVectors pv;
    if (beta_override) {
        pv.beta_half0 = *beta_override;
        pv.beta_half1 = *beta_override;
    } else {
        const BalancedPanel sub0 = panel.select_units(split.i0);
        const BalancedPanel sub1 = panel.select_units(split.i1);
        SpectralConfig cfg0 = spectral_cfg;
        SpectralConfig cfg1 = spectral_cfg;
        cfg0.rng = Rng(spectral_cfg.rng).fork(0).spec();
        cfg1.rng = Rng(spectral_cfg.rng).fork(1).spec();
        pv.beta_half0 = spectral_estimate(sub0, g, m, cfg0).beta_tilde;
        pv.beta_half1 = spectral_estimate(sub1, g, m, cfg1).beta_tilde;
    }

    // B^h = (2/NT) sum_{i in I_h} resid_i resid_i', divisor N = full sample.
    const double scale =
        2.0 / (static_cast<double>(panel.n_units) * static_cast<double>(panel.n_periods));
    const Eigen::MatrixXd r0 = half_residuals(panel, split.i0, pv.beta_half0);
    const Eigen::MatrixXd r1 = half_residuals(panel, split.i1, pv.beta_half1);
    const Eigen::MatrixXd b0 = scale * (r0.transpose() * r0);
    const Eigen::MatrixXd b1 = scale * (r1.transpose() * r1);

    pv.f_hat0 = top_eigenbasis(b0, g);
    pv.f_hat1 = top_eigenbasis(b1, g);

    // A unit with h_i = 1 sits in I_0, so F_1 and beta_1 (from I_1, the other
    // half) project it, and vice versa.
    const Eigen::MatrixXd resid_with0 = residuals(panel, pv.beta_half0);
    const Eigen::MatrixXd resid_with1 = residuals(panel, pv.beta_half1);
    pv.a_hat.resize(panel.n_units, panel.n_periods);
    for (Eigen::Index i = 0; i < panel.n_units; ++i) {
        const bool in_i0 = split.h[static_cast<std::size_t>(i)] == 1;
        const Eigen::MatrixXd& f = in_i0 ? pv.f_hat1 : pv.f_hat0;
        const Eigen::VectorXd resid =
            (in_i0 ? resid_with1 : resid_with0).row(i).transpose();
        pv.a_hat.row(i) = (f * (f.transpose() * resid)).transpose();
    }
    return pv;
}

namespace {

struct RunningGroups {
    std::vector<Eigen::VectorXd> sums;
    std::vector<Eigen::Index> counts;

    // Lowest-indexed group whose running mean is within lambda, or -1.
    int find_home(const Eigen::VectorXd& a, double lambda) const {
        for (std::size_t gamma = 0; gamma < sums.size(); ++gamma) {
            const double dist =
                (a - sums[gamma] / static_cast<double>(counts[gamma])).norm();
            if (dist <= lambda) return static_cast<int>(gamma);
        }
        return -1;
    }

    void add(int gamma, const Eigen::VectorXd& a) {
        sums[static_cast<std::size_t>(gamma)] += a;
        ++counts[static_cast<std::size_t>(gamma)];
    }

    void found(const Eigen::VectorXd& a) {
        sums.push_back(a);
        counts.push_back(1);
    }
};

// Verdict-only pass: true as soon as the group count exceeds g_cap (the count
// never shrinks during a pass, so the tail cannot change the verdict).
bool m_exceeds(const Eigen::MatrixXd& a_hat, double lambda, int g_cap) {
    RunningGroups groups;
    for (Eigen::Index i = 0; i < a_hat.rows(); ++i) {
        const Eigen::VectorXd a = a_hat.row(i).transpose();
        const int home = i == 0 ? -1 : groups.find_home(a, lambda);
        if (home >= 0) {
            groups.add(home, a);
        } else {
            groups.found(a);
            if (static_cast<int>(groups.sums.size()) > g_cap) return true;
        }
    }
    return false;
}

} // namespace

std::pair<std::vector<int>, int> run_classification_algorithm(const Eigen::MatrixXd& a_hat,
                                                              double lambda) {
    if (lambda < 0.0) throw ValidationError("classification: lambda must be >= 0");
    const Eigen::Index n = a_hat.rows();
    std::vector<int> labels(static_cast<std::size_t>(n), 0);
    RunningGroups groups;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd a = a_hat.row(i).transpose();
        int home = i == 0 ? -1 : groups.find_home(a, lambda);
        if (home < 0) {
            groups.found(a);
            home = static_cast<int>(groups.sums.size()) - 1;
        } else {
            groups.add(home, a);
        }
        labels[static_cast<std::size_t>(i)] = home + 1;
    }
    return {labels, static_cast<int>(groups.sums.size())};
}

LambdaSearchResult find_lambda_hat(const Eigen::MatrixXd& a_hat, int g) {
    if (g < 1) throw ValidationError("find_lambda_hat: G must be >= 1");
    const Eigen::Index n = a_hat.rows();

    // Candidate grid: 0 plus the sorted pairwise distances.
    const Eigen::VectorXd sq = a_hat.rowwise().squaredNorm();
    std::vector<double> cand;
    cand.reserve(static_cast<std::size_t>(n * (n - 1) / 2 + 1));
    cand.push_back(0.0);
    const Eigen::MatrixXd gram = a_hat * a_hat.transpose();
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            cand.push_back(std::sqrt(std::max(sq(i) + sq(j) - 2.0 * gram(i, j), 0.0)));
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    const double max_dist = cand.back();

    std::size_t accepted = cand.size() - 1;
    for (std::size_t idx = 0; idx < cand.size(); ++idx) {
        if (!m_exceeds(a_hat, cand[idx], g)) {
            accepted = idx;
            break;
        }
    }

    LambdaSearchResult res;
    double lambda = cand[accepted];
    if (accepted > 0 && max_dist > 0.0) {
        // The greedy tests distances to running means, so the true flip point
        // may sit strictly between adjacent pairwise-distance candidates.
        double lo = cand[accepted - 1];
        double hi = lambda;
        const double tol = 1e-9 * max_dist;
        while (hi - lo > tol) {
            const double mid = 0.5 * (lo + hi);
            if (m_exceeds(a_hat, mid, g))
                lo = mid;
            else
                hi = mid;
        }
        lambda = hi;
    }

    auto [labels, m] = run_classification_algorithm(a_hat, lambda);
    res.lambda_hat = lambda;
    res.labels = std::move(labels);
    res.m = m;

    // Coarse diagnostic curve over the candidate range.
    const std::size_t curve_points = std::min<std::size_t>(cand.size(), 33);
    for (std::size_t s = 0; s < curve_points; ++s) {
        const std::size_t idx = s * (cand.size() - 1) / std::max<std::size_t>(curve_points - 1, 1);
        res.m_curve.emplace_back(cand[idx],
                                 run_classification_algorithm(a_hat, cand[idx]).second);
    }
    return res;
}

Classification classify(const BalancedPanel& panel, int g, int m, const RngSpec& rng,
                        const SpectralConfig& spectral_cfg) {
    Classification cls;
    cls.split = make_split(panel.n_units, rng);

    SpectralConfig cfg = spectral_cfg;
    cfg.rng = Rng(rng).fork(0x5bec).spec();
    ProjectedVectors pv = projected_vectors(panel, cls.split, g, m, cfg);

    LambdaSearchResult search = find_lambda_hat(pv.a_hat, g);
    cls.g_hat.labels = std::move(search.labels);
    cls.g_hat.n_groups = search.m;
    cls.g_hat.validate(true);
    cls.lambda_hat = search.lambda_hat;
    cls.a_hat = std::move(pv.a_hat);
    cls.f_hat0 = std::move(pv.f_hat0);
    cls.f_hat1 = std::move(pv.f_hat1);
    cls.beta_half0 = std::move(pv.beta_half0);
    cls.beta_half1 = std::move(pv.beta_half1);
    cls.m_curve = std::move(search.m_curve);
    return cls;
}

void save_classification_csv(const Classification& cls, const BalancedPanel& panel,
                             const std::string& path) {
    std::ofstream fout(path);
    if (!fout) throw ValidationError("save_classification_csv: cannot open " + path);
    fout << "unit,h,g_hat\n";
    for (Eigen::Index i = 0; i < panel.n_units; ++i)
        fout << panel.unit_ids[static_cast<std::size_t>(i)] << ','
             << cls.split.h[static_cast<std::size_t>(i)] << ','
             << cls.g_hat.labels[static_cast<std::size_t>(i)] << "\n";
}

} // namespace gpanel
