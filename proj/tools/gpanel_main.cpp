#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include "gpanel/classify.hpp"
#include "gpanel/dynamic.hpp"
#include "gpanel/panel.hpp"
#include "gpanel/penalized.hpp"
#include "gpanel/postspectral.hpp"
#include "gpanel/simulate.hpp"
#include "gpanel/spectral.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_validation = 2;
constexpr int exit_numeric = 3;

struct CommonOpts {
    std::string input;
    std::string output;
    std::string format = "csv";
    std::optional<std::uint64_t> seed;
    std::string backend = "auto";
    int threads = 1;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed) {
    if (seed) return *seed;
    const auto entropy = static_cast<std::uint64_t>(std::random_device{}()) << 32 |
                         static_cast<std::uint64_t>(
                             std::chrono::steady_clock::now().time_since_epoch().count() &
                             0xffffffffULL);
    std::cout << "seed not given; using seed=" << entropy << "\n";
    return entropy;
}

gpanel::SpectralConfig make_spectral_cfg(const CommonOpts& opts, std::uint64_t seed) {
    gpanel::SpectralConfig cfg;
    if (opts.backend == "dense")
        cfg.backend = gpanel::EigBackend::dense;
    else if (opts.backend == "randomized")
        cfg.backend = gpanel::EigBackend::randomized;
    else
        cfg.backend = gpanel::EigBackend::automatic;
    cfg.rng = gpanel::RngSpec{seed, 0xe16};
    return cfg;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream fout(path);
    if (!fout) throw gpanel::ValidationError("cannot open output file " + path);
    fout << text;
}

std::string coef_table(const std::vector<std::string>& names, const Eigen::VectorXd& estimates,
                       const Eigen::VectorXd* std_errors, const std::string& format) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(6);
    const bool markdown = format == "markdown";
    if (markdown) {
        os << "| coefficient | estimate | std_error | t_stat |\n";
        os << "|-------------|----------|-----------|--------|\n";
    } else {
        os << "coefficient,estimate,std_error,t_stat\n";
    }
    for (Eigen::Index k = 0; k < estimates.size(); ++k) {
        const std::string name = names[static_cast<std::size_t>(k)];
        std::string se = "na", tstat = "na";
        if (std_errors && (*std_errors)(k) > 0.0) {
            std::ostringstream tmp;
            tmp.setf(std::ios::fixed);
            tmp.precision(6);
            tmp << (*std_errors)(k);
            se = tmp.str();
            tmp.str("");
            tmp << estimates(k) / (*std_errors)(k);
            tstat = tmp.str();
        }
        if (markdown)
            os << "| " << name << " | " << estimates(k) << " | " << se << " | " << tstat
               << " |\n";
        else
            os << name << ',' << estimates(k) << ',' << se << ',' << tstat << "\n";
    }
    return os.str();
}

std::vector<std::string> covariate_names(const gpanel::BalancedPanel& panel, bool dynamic) {
    std::vector<std::string> names;
    if (dynamic) names.push_back("theta(lag)");
    for (Eigen::Index k = 0; k < panel.n_covariates; ++k)
        names.push_back("x" + std::to_string(k + 1));
    return names;
}

gpanel::GroupAssignment load_groups_csv(const std::string& path,
                                        const gpanel::BalancedPanel& panel) {
    std::ifstream fin(path);
    if (!fin) throw gpanel::ValidationError("cannot open groups file " + path);
    std::string line;
    if (!std::getline(fin, line)) throw gpanel::SchemaMismatchError("groups file is empty");
    std::unordered_map<std::string, int> by_unit;
    int max_label = 0;
    while (std::getline(fin, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw gpanel::SchemaMismatchError("groups file: expected unit,group rows");
        const std::string unit = line.substr(0, comma);
        const int label = std::stoi(line.substr(comma + 1));
        by_unit[unit] = label;
        max_label = std::max(max_label, label);
    }
    gpanel::GroupAssignment groups;
    groups.n_groups = max_label;
    groups.labels.reserve(static_cast<std::size_t>(panel.n_units));
    for (const auto& unit : panel.unit_ids) {
        const auto it = by_unit.find(unit);
        if (it == by_unit.end())
            throw gpanel::ValidationError("groups file: no group for unit " + unit);
        groups.labels.push_back(it->second);
    }
    groups.validate();
    return groups;
}

void write_alpha_csv(const std::string& path, const Eigen::MatrixXd& alpha) {
    std::ofstream fout(path);
    if (!fout) throw gpanel::ValidationError("cannot open alpha output file " + path);
    fout.precision(17);
    fout << "group";
    for (Eigen::Index t = 0; t < alpha.cols(); ++t) fout << ",t" << (t + 1);
    fout << "\n";
    for (Eigen::Index gamma = 0; gamma < alpha.rows(); ++gamma) {
        fout << (gamma + 1);
        for (Eigen::Index t = 0; t < alpha.cols(); ++t) fout << ',' << alpha(gamma, t);
        fout << "\n";
    }
}

int run_estimate(const CommonOpts& opts, const std::string& method, int g, int m, int j,
                 bool use_ife, bool dynamic, std::optional<double> lambda,
                 std::optional<double> lambda_c, const std::string& groups_path,
                 const std::string& alpha_path) {
    const std::uint64_t seed = resolve_seed(opts.seed);
    const gpanel::BalancedPanel panel = gpanel::load_panel_csv(opts.input);
    const gpanel::SpectralConfig cfg = make_spectral_cfg(opts, seed);
    const auto start = std::chrono::steady_clock::now();
    std::ostringstream report;

    if (method == "spectral") {
        Eigen::VectorXd estimate;
        if (dynamic) {
            const gpanel::DynamicFit fit = gpanel::dynamic_spectral(panel, g, m, cfg);
            if (fit.stationarity_warning)
                std::cerr << "warning: |theta_hat| >= 1 (nonstationary estimate)\n";
            estimate.resize(fit.beta_hat.size() + 1);
            estimate << fit.theta_hat, fit.beta_hat;
        } else if (use_ife) {
            estimate = gpanel::spectral_estimate_ife(panel, j, cfg).beta_tilde;
        } else {
            estimate = gpanel::spectral_estimate(panel, g, m, cfg).beta_tilde;
        }
        report << coef_table(covariate_names(panel, dynamic), estimate, nullptr, opts.format);
    } else if (method == "post-spectral") {
        const gpanel::RngSpec split_rng{seed, 0x511};
        if (dynamic) {
            const gpanel::DynamicFit fit = gpanel::dynamic_post_spectral(panel, g, m, split_rng, cfg);
            Eigen::VectorXd estimate(fit.beta_hat.size() + 1);
            estimate << fit.theta_hat, fit.beta_hat;
            report << coef_table(covariate_names(panel, true), estimate,
                                 &fit.post->std_errors, opts.format);
            report << "lambda_hat," << fit.classification->lambda_hat << "\n";
            report << "m_groups," << fit.classification->g_hat.n_groups << "\n";
        } else {
            auto [cls, fit] = gpanel::post_spectral(panel, g, m, split_rng, cfg);
            report << coef_table(covariate_names(panel, false), fit.beta_hat, &fit.std_errors,
                                 opts.format);
            report << "lambda_hat," << cls.lambda_hat << "\n";
            report << "m_groups," << cls.g_hat.n_groups << "\n";
            if (!alpha_path.empty()) write_alpha_csv(alpha_path, fit.alpha_hat);
        }
    } else if (method == "oracle") {
        if (groups_path.empty())
            throw gpanel::ValidationError("--method oracle requires --groups");
        const gpanel::GroupAssignment groups = load_groups_csv(groups_path, panel);
        const gpanel::PostSpectralFit fit = gpanel::oracle_ols(panel, groups);
        report << coef_table(covariate_names(panel, false), fit.beta_hat, &fit.std_errors,
                             opts.format);
        if (!alpha_path.empty()) write_alpha_csv(alpha_path, fit.alpha_hat);
    } else if (method == "lasso") {
        double lam;
        if (lambda)
            lam = *lambda;
        else
            lam = gpanel::lambda_rule(panel.n_units, panel.n_periods, panel.n_covariates,
                                      lambda_c.value_or(1.0));
        const gpanel::LassoSolution sol = gpanel::penalized_spectral(panel, g, m, lam, cfg);
        for (const auto& w : sol.warnings) std::cerr << "warning: " << w << "\n";
        report << coef_table(covariate_names(panel, false), sol.beta_lambda, nullptr,
                             opts.format);
        report << "lambda," << lam << "\n";
        report << "kkt_residual," << sol.kkt_residual << "\n";
    } else {
        throw gpanel::ValidationError("unknown method " + method);
    }

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report << "elapsed_seconds," << elapsed << "\n";
    write_text(opts.output, report.str());
    return exit_ok;
}

int run_classify(const CommonOpts& opts, int g, int m) {
    const std::uint64_t seed = resolve_seed(opts.seed);
    const gpanel::BalancedPanel panel = gpanel::load_panel_csv(opts.input);
    const gpanel::SpectralConfig cfg = make_spectral_cfg(opts, seed);
    const gpanel::Classification cls =
        gpanel::classify(panel, g, m, gpanel::RngSpec{seed, 0x511}, cfg);
    if (opts.output.empty()) throw gpanel::ValidationError("classify requires --output");
    gpanel::save_classification_csv(cls, panel, opts.output);
    std::cout << "lambda_hat=" << cls.lambda_hat << " m=" << cls.g_hat.n_groups << "\n";
    return exit_ok;
}

void apply_config_file(const std::string& path, gpanel::DgpConfig& cfg,
                       std::vector<std::string>& estimator_names) {
    std::ifstream fin(path);
    if (!fin) throw gpanel::ValidationError("cannot open config file " + path);
    std::string line;
    while (std::getline(fin, line)) {
        const auto eq = line.find('=');
        if (line.empty() || line[0] == '#' || eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "N") cfg.n_units = std::stol(value);
        else if (key == "T") cfg.n_periods = std::stol(value);
        else if (key == "G") cfg.n_groups = std::stoi(value);
        else if (key == "M") cfg.n_factors = std::stoi(value);
        else if (key == "sigma2") cfg.sigma2 = std::stod(value);
        else if (key == "varrho") cfg.varrho = std::stod(value);
        else if (key == "trunc") cfg.trunc = std::stod(value);
        else if (key == "beta1" || key == "beta2") {
            if (cfg.beta.size() == 0) cfg.beta = cfg.effective_beta();
            cfg.beta(key == "beta1" ? 0 : 1) = std::stod(value);
        } else if (key == "reps") cfg.n_reps = std::stoi(value);
        else if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "theta") cfg.theta = std::stod(value);
        else if (key == "dynamic") { if (value == "0" || value == "false") cfg.theta.reset(); }
        else if (key == "estimators") {
            estimator_names.clear();
            std::stringstream ss(value);
            std::string name;
            while (std::getline(ss, name, '+')) estimator_names.push_back(name);
        } else {
            throw gpanel::ValidationError("config file: unknown key " + key);
        }
    }
}

int run_simulate(const CommonOpts& opts, gpanel::DgpConfig cfg, int paper_table,
                 const std::vector<std::string>& estimator_names,
                 const std::string& per_rep_output) {
    std::vector<gpanel::Estimator> estimators;
    for (const auto& name : estimator_names) {
        if (name == "S" || name == "spectral") estimators.push_back(gpanel::Estimator::spectral);
        else if (name == "P-S" || name == "post-spectral")
            estimators.push_back(gpanel::Estimator::post_spectral);
        else if (name == "oracle") estimators.push_back(gpanel::Estimator::oracle);
        else throw gpanel::ValidationError("unknown estimator " + name);
    }

    std::vector<gpanel::DgpConfig> cells;
    if (paper_table > 0) {
        cells = gpanel::paper_table_grid(paper_table, cfg.n_reps, cfg.seed);
    } else {
        cells.push_back(cfg);
    }

    std::vector<gpanel::CellResult> results;
    results.reserve(cells.size());
    gpanel::SpectralConfig spectral_cfg = make_spectral_cfg(opts, cfg.seed);
    for (const auto& cell : cells) {
        results.push_back(
            gpanel::run_replications(cell, estimators, opts.threads, spectral_cfg));
        std::cout << "cell G=" << cell.n_groups << " M=" << cell.n_factors
                  << " sigma2=" << cell.sigma2 << " T=" << cell.n_periods
                  << " N=" << cell.n_units << " done\n";
    }

    const auto fmt = opts.format == "markdown" ? gpanel::TableFormat::markdown
                                               : gpanel::TableFormat::csv;
    write_text(opts.output, gpanel::emit_table(results, fmt));
    if (!per_rep_output.empty()) write_text(per_rep_output, gpanel::emit_per_rep_csv(results));
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral and post-spectral estimation for grouped panel data"};
    app.require_subcommand(1);

    CommonOpts opts;
    int g = 2, m = 1, j = 1;
    bool use_ife = false, dynamic = false;
    std::string method = "spectral";
    std::optional<double> lambda, lambda_c;
    std::string groups_path, alpha_path;

    auto add_common = [&](CLI::App* sub, bool needs_input) {
        if (needs_input) sub->add_option("--input", opts.input, "panel CSV path")->required();
        sub->add_option("--output", opts.output, "output path (default: stdout)");
        sub->add_option("--format", opts.format, "csv or markdown")
            ->check(CLI::IsMember({"csv", "markdown"}));
        sub->add_option("--seed", opts.seed, "RNG seed (logged when omitted)");
        sub->add_option("--backend", opts.backend, "eigensolver backend")
            ->check(CLI::IsMember({"auto", "dense", "randomized"}));
        sub->add_option("--threads", opts.threads, "worker threads")->check(CLI::PositiveNumber);
    };

    CLI::App* est = app.add_subcommand("estimate", "estimate coefficients from a panel CSV");
    add_common(est, true);
    est->add_option("--method", method, "spectral | post-spectral | oracle | lasso")
        ->check(CLI::IsMember({"spectral", "post-spectral", "oracle", "lasso"}));
    est->add_option("--G", g, "number of groups")->check(CLI::PositiveNumber);
    est->add_option("--M", m, "number of covariate factors")->check(CLI::PositiveNumber);
    est->add_option("--J", j, "number of factors (with --ife)")->check(CLI::PositiveNumber);
    est->add_flag("--ife", use_ife, "interactive fixed-effect variant (uses --J)");
    est->add_flag("--dynamic", dynamic, "augment with the lagged outcome");
    est->add_option("--lambda", lambda, "l1 penalty (method lasso)");
    est->add_option("--lambda-rule-C", lambda_c, "constant C of the penalty rule");
    est->add_option("--groups", groups_path, "true-groups CSV (method oracle)");
    est->add_option("--alpha-output", alpha_path, "write the group-time effects matrix");

    CLI::App* cls = app.add_subcommand("classify", "classify units into latent groups");
    add_common(cls, true);
    cls->add_option("--G", g, "number of groups")->check(CLI::PositiveNumber);
    cls->add_option("--M", m, "number of covariate factors")->check(CLI::PositiveNumber);

    gpanel::DgpConfig dgp;
    int paper_table = 0;
    std::string config_path, per_rep_output;
    std::vector<std::string> estimator_names = {"S", "P-S", "oracle"};
    std::optional<double> theta_opt;
    CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo replication harness");
    add_common(sim, false);
    sim->add_option("--config", config_path, "key=value config file (flags override)");
    sim->add_option("--paper-table", paper_table, "run a full 18-cell benchmark table design (1-4)")
        ->check(CLI::Range(1, 4));
    sim->add_option("--N", dgp.n_units, "units");
    sim->add_option("--T", dgp.n_periods, "periods");
    sim->add_option("--G", dgp.n_groups, "groups");
    sim->add_option("--M", dgp.n_factors, "covariate factors");
    sim->add_option("--sigma2", dgp.sigma2, "effect variance");
    sim->add_option("--varrho", dgp.varrho, "loading location");
    sim->add_option("--reps", dgp.n_reps, "replications per cell");
    sim->add_option("--theta", theta_opt, "AR coefficient (dynamic DGP)");
    sim->add_option("--estimators", estimator_names, "subset of {S, P-S, oracle}");
    sim->add_option("--per-rep-output", per_rep_output, "per-replication CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? exit_ok : exit_validation;
    }

    try {
        if (est->parsed()) {
            if ((method == "post-spectral" || method == "spectral") && !use_ife && g < 1)
                throw gpanel::ValidationError("--G must be positive");
            return run_estimate(opts, method, g, m, j, use_ife, dynamic, lambda, lambda_c,
                                groups_path, alpha_path);
        }
        if (cls->parsed()) return run_classify(opts, g, m);
        if (sim->parsed()) {
            if (!config_path.empty()) {
                // config file provides defaults; explicit flags override
                gpanel::DgpConfig from_file;
                std::vector<std::string> file_estimators = estimator_names;
                apply_config_file(config_path, from_file, file_estimators);
                if (sim->count("--N") == 0) dgp.n_units = from_file.n_units;
                if (sim->count("--T") == 0) dgp.n_periods = from_file.n_periods;
                if (sim->count("--G") == 0) dgp.n_groups = from_file.n_groups;
                if (sim->count("--M") == 0) dgp.n_factors = from_file.n_factors;
                if (sim->count("--sigma2") == 0) dgp.sigma2 = from_file.sigma2;
                if (sim->count("--varrho") == 0) dgp.varrho = from_file.varrho;
                if (sim->count("--reps") == 0) dgp.n_reps = from_file.n_reps;
                if (sim->count("--seed") == 0 && !opts.seed) opts.seed = from_file.seed;
                if (sim->count("--theta") == 0) dgp.theta = from_file.theta;
                if (from_file.beta.size() > 0) dgp.beta = from_file.beta;
                if (sim->count("--estimators") == 0) estimator_names = file_estimators;
            }
            if (theta_opt) dgp.theta = theta_opt;
            dgp.seed = resolve_seed(opts.seed);
            return run_simulate(opts, dgp, paper_table, estimator_names, per_rep_output);
        }
    } catch (const gpanel::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_validation;
    } catch (const gpanel::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_numeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_validation;
    }
    return exit_ok;
}
