#include "gpanel/panel.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace gpanel {

void BalancedPanel::validate() const {
    if (n_units <= 0 || n_periods <= 0)
        throw ValidationError("panel: n_units and n_periods must be positive");
    if (n_covariates < 0) throw ValidationError("panel: n_covariates must be nonnegative");
    if (y.rows() != n_units || y.cols() != n_periods)
        throw DimensionMismatchError("panel: y has wrong shape");
    if (static_cast<Eigen::Index>(x.size()) != n_covariates)
        throw DimensionMismatchError("panel: covariate count mismatch");
    for (const auto& xk : x)
        if (xk.rows() != n_units || xk.cols() != n_periods)
            throw DimensionMismatchError("panel: covariate matrix has wrong shape");
    if (!y.allFinite()) throw NonFiniteValueError("panel: non-finite outcome value");
    for (const auto& xk : x)
        if (!xk.allFinite()) throw NonFiniteValueError("panel: non-finite covariate value");
    if (static_cast<Eigen::Index>(unit_ids.size()) != n_units)
        throw DimensionMismatchError("panel: unit_ids size mismatch");
    if (static_cast<Eigen::Index>(period_ids.size()) != n_periods)
        throw DimensionMismatchError("panel: period_ids size mismatch");
    std::vector<std::string> units_sorted(unit_ids);
    std::sort(units_sorted.begin(), units_sorted.end());
    if (std::adjacent_find(units_sorted.begin(), units_sorted.end()) != units_sorted.end())
        throw ValidationError("panel: unit_ids must be distinct");

    // strictly increasing periods: numeric order when every label is a
    // number, byte order otherwise
    bool numeric = true;
    std::vector<double> values(period_ids.size());
    for (std::size_t t = 0; t < period_ids.size(); ++t) {
        const std::string& s = period_ids[t];
        const char* last = s.data() + s.size();
        auto [ptr, ec] = std::from_chars(s.data(), last, values[t]);
        if (ec != std::errc() || ptr != last || !std::isfinite(values[t])) {
            numeric = false;
            break;
        }
    }
    for (std::size_t t = 1; t < period_ids.size(); ++t) {
        const bool increasing =
            numeric ? values[t - 1] < values[t] : period_ids[t - 1] < period_ids[t];
        if (!increasing) throw ValidationError("panel: period_ids must be strictly increasing");
    }
}

BalancedPanel BalancedPanel::select_units(const std::vector<Eigen::Index>& idx) const {
    BalancedPanel sub;
    sub.n_units = static_cast<Eigen::Index>(idx.size());
    sub.n_periods = n_periods;
    sub.n_covariates = n_covariates;
    sub.y.resize(sub.n_units, n_periods);
    sub.x.assign(n_covariates, Eigen::MatrixXd(sub.n_units, n_periods));
    sub.unit_ids.reserve(idx.size());
    for (Eigen::Index r = 0; r < sub.n_units; ++r) {
        const Eigen::Index i = idx[static_cast<std::size_t>(r)];
        if (i < 0 || i >= n_units) throw ValidationError("select_units: index out of range");
        sub.y.row(r) = y.row(i);
        for (Eigen::Index k = 0; k < n_covariates; ++k) sub.x[k].row(r) = x[k].row(i);
        sub.unit_ids.push_back(unit_ids[static_cast<std::size_t>(i)]);
    }
    sub.period_ids = period_ids;
    return sub;
}

void GroupAssignment::validate(bool require_nonempty_groups) const {
    if (n_groups <= 0) throw ValidationError("groups: n_groups must be positive");
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(n_groups), 0);
    for (int g : labels) {
        if (g < 1 || g > n_groups) throw ValidationError("groups: label out of {1..G}");
        ++counts[static_cast<std::size_t>(g - 1)];
    }
    if (require_nonempty_groups)
        for (Eigen::Index c : counts)
            if (c == 0) throw EmptyGroupError("groups: empty group");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        // trim surrounding whitespace
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

bool parse_double(const std::string& s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

} // namespace

BalancedPanel load_panel_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream fin(path);
    if (!fin) throw ValidationError("load_panel_csv: cannot open " + path);

    std::string line;
    if (!std::getline(fin, line)) throw SchemaMismatchError("load_panel_csv: empty file");
    const auto header = split_csv_line(line);

    auto find_col = [&](const std::string& name) {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (header[c] == name) return static_cast<int>(c);
        return -1;
    };
    const int unit_col = find_col(schema.unit);
    const int time_col = find_col(schema.time);
    const int y_col = find_col(schema.y);
    if (unit_col < 0 || time_col < 0 || y_col < 0)
        throw SchemaMismatchError("load_panel_csv: missing unit/time/y column");

    std::vector<int> x_cols;
    std::vector<std::string> x_names;
    if (schema.covariates.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            const int ci = static_cast<int>(c);
            if (ci != unit_col && ci != time_col && ci != y_col) {
                x_cols.push_back(ci);
                x_names.push_back(header[c]);
            }
        }
    } else {
        for (const auto& name : schema.covariates) {
            const int ci = find_col(name);
            if (ci < 0) throw SchemaMismatchError("load_panel_csv: missing covariate column " + name);
            x_cols.push_back(ci);
            x_names.push_back(name);
        }
    }
    const std::size_t d = x_cols.size();

    struct Row {
        double y;
        std::vector<double> x;
        std::string raw;  // byte-identity gate for duplicates
    };
    std::vector<std::string> unit_order;
    std::unordered_map<std::string, int> unit_index;
    std::vector<std::string> time_labels;
    std::unordered_map<std::string, int> time_index;
    std::map<std::pair<int, int>, Row> rows;

    std::size_t line_no = 1;
    while (std::getline(fin, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw SchemaMismatchError("load_panel_csv: wrong cell count at line " +
                                      std::to_string(line_no));
        const std::string& u = cells[static_cast<std::size_t>(unit_col)];
        const std::string& t = cells[static_cast<std::size_t>(time_col)];

        Row row;
        if (!parse_double(cells[static_cast<std::size_t>(y_col)], row.y))
            throw NonFiniteValueError("load_panel_csv: unparseable y at line " +
                                      std::to_string(line_no));
        if (!std::isfinite(row.y))
            throw NonFiniteValueError("load_panel_csv: non-finite y at line " +
                                      std::to_string(line_no));
        row.x.resize(d);
        row.raw = cells[static_cast<std::size_t>(y_col)];
        for (std::size_t k = 0; k < d; ++k) {
            const std::string& cell = cells[static_cast<std::size_t>(x_cols[k])];
            if (!parse_double(cell, row.x[k]))
                throw NonFiniteValueError("load_panel_csv: unparseable covariate at line " +
                                          std::to_string(line_no));
            if (!std::isfinite(row.x[k]))
                throw NonFiniteValueError("load_panel_csv: non-finite covariate at line " +
                                          std::to_string(line_no));
            row.raw += ',';
            row.raw += cell;
        }

        if (!unit_index.contains(u)) {
            unit_index.emplace(u, static_cast<int>(unit_order.size()));
            unit_order.push_back(u);
        }
        if (!time_index.contains(t)) {
            time_index.emplace(t, static_cast<int>(time_labels.size()));
            time_labels.push_back(t);
        }
        const std::pair<int, int> key{unit_index[u], time_index[t]};
        auto [it, inserted] = rows.emplace(key, row);
        if (!inserted && it->second.raw != row.raw)
            throw DuplicateConflictError("load_panel_csv: conflicting duplicate (unit=" + u +
                                         ", time=" + t + ")");
    }
    if (unit_order.empty()) throw SchemaMismatchError("load_panel_csv: no data rows");

    // Sort periods: numeric when every label parses as a finite number.
    std::vector<std::string> periods_sorted(time_labels);
    bool all_numeric = true;
    std::vector<double> numeric(time_labels.size());
    for (std::size_t c = 0; c < time_labels.size(); ++c) {
        if (!parse_double(time_labels[c], numeric[c]) || !std::isfinite(numeric[c])) {
            all_numeric = false;
            break;
        }
    }
    if (all_numeric) {
        std::vector<std::size_t> order(time_labels.size());
        for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return numeric[a] < numeric[b]; });
        for (std::size_t c = 0; c < order.size(); ++c) periods_sorted[c] = time_labels[order[c]];
    } else {
        std::sort(periods_sorted.begin(), periods_sorted.end());
    }
    std::unordered_map<std::string, int> period_pos;
    for (std::size_t c = 0; c < periods_sorted.size(); ++c)
        period_pos.emplace(periods_sorted[c], static_cast<int>(c));

    BalancedPanel panel;
    panel.n_units = static_cast<Eigen::Index>(unit_order.size());
    panel.n_periods = static_cast<Eigen::Index>(periods_sorted.size());
    panel.n_covariates = static_cast<Eigen::Index>(d);
    panel.y.setConstant(panel.n_units, panel.n_periods,
                        std::numeric_limits<double>::quiet_NaN());
    panel.x.assign(d, Eigen::MatrixXd::Zero(panel.n_units, panel.n_periods));
    panel.unit_ids = unit_order;
    panel.period_ids = periods_sorted;

    for (const auto& [key, row] : rows) {
        const Eigen::Index i = key.first;
        const Eigen::Index t = period_pos[time_labels[static_cast<std::size_t>(key.second)]];
        panel.y(i, t) = row.y;
        for (std::size_t k = 0; k < d; ++k) panel.x[k](i, t) = row.x[k];
    }
    for (Eigen::Index i = 0; i < panel.n_units; ++i)
        for (Eigen::Index t = 0; t < panel.n_periods; ++t)
            if (std::isnan(panel.y(i, t)))
                throw MissingCellError("load_panel_csv: unit " +
                                       panel.unit_ids[static_cast<std::size_t>(i)] +
                                       " lacks period " +
                                       panel.period_ids[static_cast<std::size_t>(t)]);

    panel.validate();
    return panel;
}

void save_panel_csv(const BalancedPanel& panel, const std::string& path) {
    std::ofstream fout(path);
    if (!fout) throw ValidationError("save_panel_csv: cannot open " + path);
    fout.precision(17);
    fout << "unit,time,y";
    for (Eigen::Index k = 0; k < panel.n_covariates; ++k) fout << ",x" << (k + 1);
    fout << "\n";
    for (Eigen::Index i = 0; i < panel.n_units; ++i) {
        for (Eigen::Index t = 0; t < panel.n_periods; ++t) {
            fout << panel.unit_ids[static_cast<std::size_t>(i)] << ','
                 << panel.period_ids[static_cast<std::size_t>(t)] << ',' << panel.y(i, t);
            for (Eigen::Index k = 0; k < panel.n_covariates; ++k) fout << ',' << panel.x[k](i, t);
            fout << "\n";
        }
    }
}

Eigen::MatrixXd residuals(const BalancedPanel& panel, const Eigen::VectorXd& b) {
    if (b.size() != panel.n_covariates)
        throw DimensionMismatchError("residuals: coefficient length != n_covariates");
    Eigen::MatrixXd r = panel.y;
    for (Eigen::Index k = 0; k < panel.n_covariates; ++k) r.noalias() -= b(k) * panel.x[k];
    return r;
}

Eigen::MatrixXd sample_truncated_normal(Rng& rng, double sigma2, double trunc,
                                        Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            out(i, j) = rng.next_truncated_normal(sigma2, trunc);
    return out;
}

} // namespace gpanel
