#pragma once

#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "nkf/errors.hpp"
#include "nkf/estimation.hpp"
#include "nkf/metrics.hpp"

namespace nkf {

namespace detail {

/// Shortest round-trip decimal for a double ("%.17g" re-reads bit-exactly).
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path) {
        if (!out_) throw config_error("cannot open for writing: " + path);
    }

    void header(const std::vector<std::string>& columns) { row_of_strings(columns); }

    void row_of_strings(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    void numeric_row(const std::vector<double>& cells, const std::string& prefix = "") {
        if (!prefix.empty()) out_ << prefix << ',';
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << detail::format_double(cells[i]);
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

/// Trajectory CSV: t, x[0..n), u[0..m), y[0..p). States are x_1..x_T (the
/// initial state is carried by the model file's initial belief).
inline void write_trajectory_csv(const std::string& path, const Eigen::MatrixXd& states_tail,
                                 const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& outputs) {
    const Eigen::Index horizon = outputs.cols();
    if (states_tail.cols() != horizon || inputs.cols() != horizon) {
        throw dimension_error("write_trajectory_csv: column counts differ");
    }
    CsvWriter csv(path);
    std::vector<std::string> columns{"t"};
    for (Eigen::Index i = 0; i < states_tail.rows(); ++i)
        columns.push_back("x" + std::to_string(i));
    for (Eigen::Index i = 0; i < inputs.rows(); ++i) columns.push_back("u" + std::to_string(i));
    for (Eigen::Index i = 0; i < outputs.rows(); ++i) columns.push_back("y" + std::to_string(i));
    csv.header(columns);
    for (Eigen::Index t = 0; t < horizon; ++t) {
        std::vector<double> cells;
        cells.push_back(static_cast<double>(t + 1));
        for (Eigen::Index i = 0; i < states_tail.rows(); ++i) cells.push_back(states_tail(i, t));
        for (Eigen::Index i = 0; i < inputs.rows(); ++i) cells.push_back(inputs(i, t));
        for (Eigen::Index i = 0; i < outputs.rows(); ++i) cells.push_back(outputs(i, t));
        csv.numeric_row(cells);
    }
}

struct TrajectoryData {
    Eigen::MatrixXd states;  // n_x x T (may be empty when the file has no x columns)
    Eigen::MatrixXd inputs;  // n_u x T
    Eigen::MatrixXd outputs; // n_y x T
};

inline TrajectoryData read_trajectory_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line)) throw config_error("empty trajectory file: " + path);

    Eigen::Index n_x = 0, n_u = 0, n_y = 0;
    {
        std::stringstream header(line);
        std::string cell;
        bool first = true;
        while (std::getline(header, cell, ',')) {
            if (first) {
                if (cell != "t") throw config_error(path + ": first column must be t");
                first = false;
                continue;
            }
            if (cell.starts_with("x")) ++n_x;
            else if (cell.starts_with("u")) ++n_u;
            else if (cell.starts_with("y")) ++n_y;
            else throw config_error(path + ": unknown column '" + cell + "'");
        }
    }
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (static_cast<Eigen::Index>(row.size()) != 1 + n_x + n_u + n_y) {
            throw config_error(path + ": row width does not match the header");
        }
        rows.push_back(std::move(row));
    }
    const Eigen::Index horizon = static_cast<Eigen::Index>(rows.size());
    TrajectoryData data;
    data.states.resize(n_x, horizon);
    data.inputs.resize(n_u, horizon);
    data.outputs.resize(n_y, horizon);
    for (Eigen::Index t = 0; t < horizon; ++t) {
        const auto& row = rows[static_cast<std::size_t>(t)];
        Eigen::Index at = 1;
        for (Eigen::Index i = 0; i < n_x; ++i) data.states(i, t) = row[static_cast<std::size_t>(at++)];
        for (Eigen::Index i = 0; i < n_u; ++i) data.inputs(i, t) = row[static_cast<std::size_t>(at++)];
        for (Eigen::Index i = 0; i < n_y; ++i) data.outputs(i, t) = row[static_cast<std::size_t>(at++)];
    }
    return data;
}

/// Run-record CSV: per step the truth, then mean and upper-triangular
/// covariance for the predicted / filtered / smoothed beliefs. Smoothed
/// columns are NaN when only the filter ran.
inline void write_run_record_csv(const std::string& path, const RunRecord& record) {
    const Eigen::Index n = record.truth.rows();
    CsvWriter csv(path);
    std::vector<std::string> columns{"t"};
    auto belief_columns = [&](const std::string& tag) {
        for (Eigen::Index i = 0; i < n; ++i)
            columns.push_back(tag + "_mean" + std::to_string(i));
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i; j < n; ++j)
                columns.push_back(tag + "_cov" + std::to_string(i) + "_" + std::to_string(j));
    };
    for (Eigen::Index i = 0; i < n; ++i) columns.push_back("truth" + std::to_string(i));
    belief_columns("pred");
    belief_columns("filt");
    belief_columns("smooth");
    csv.header(columns);

    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (Eigen::Index t = 0; t < record.horizon(); ++t) {
        std::vector<double> cells{static_cast<double>(t + 1)};
        for (Eigen::Index i = 0; i < n; ++i) cells.push_back(record.truth(i, t));
        auto push_belief = [&](const Gaussian* g) {
            for (Eigen::Index i = 0; i < n; ++i) cells.push_back(g ? g->mean()(i) : nan);
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = i; j < n; ++j) cells.push_back(g ? g->cov()(i, j) : nan);
        };
        const auto& step = record.filter[static_cast<std::size_t>(t)];
        push_belief(&step.predicted_state);
        push_belief(&step.filtered_state);
        push_belief(record.smoother.empty()
                        ? nullptr
                        : &record.smoother[static_cast<std::size_t>(t)].smoothed_state);
        csv.numeric_row(cells);
    }
}

/// Rebuild a RunRecord from its CSV (inverse of write_run_record_csv).
/// Smoothed columns that are NaN mean the smoother never ran.
inline RunRecord read_run_record_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line)) throw config_error("empty run record: " + path);

    // Infer the state dimension from the header: columns are
    // t, truth0..truth{n-1}, then three belief blocks.
    Eigen::Index n = 0;
    {
        std::stringstream header(line);
        std::string cell;
        while (std::getline(header, cell, ',')) {
            if (cell.starts_with("truth")) ++n;
        }
        if (n == 0) throw config_error(path + ": no truth columns");
    }
    const Eigen::Index tri = n * (n + 1) / 2;
    const Eigen::Index belief_width = n + tri;
    const Eigen::Index expected = 1 + n + 3 * belief_width;

    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (static_cast<Eigen::Index>(row.size()) != expected) {
            throw config_error(path + ": row width does not match the header");
        }
        rows.push_back(std::move(row));
    }

    const Eigen::Index horizon = static_cast<Eigen::Index>(rows.size());
    RunRecord record;
    record.truth.resize(n, horizon);
    auto read_belief = [&](const std::vector<double>& row, Eigen::Index offset) {
        Eigen::VectorXd mean(n);
        for (Eigen::Index i = 0; i < n; ++i) mean(i) = row[static_cast<std::size_t>(offset + i)];
        Eigen::MatrixXd cov(n, n);
        Eigen::Index at = offset + n;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i; j < n; ++j) {
                cov(i, j) = cov(j, i) = row[static_cast<std::size_t>(at++)];
            }
        }
        return std::pair{mean, cov};
    };
    bool have_smoother = true;
    for (Eigen::Index t = 0; t < horizon; ++t) {
        const auto& row = rows[static_cast<std::size_t>(t)];
        for (Eigen::Index i = 0; i < n; ++i) record.truth(i, t) = row[static_cast<std::size_t>(1 + i)];
        auto [pred_mean, pred_cov] = read_belief(row, 1 + n);
        auto [filt_mean, filt_cov] = read_belief(row, 1 + n + belief_width);
        auto [smooth_mean, smooth_cov] = read_belief(row, 1 + n + 2 * belief_width);
        FilterStep step;
        step.predicted_state = Gaussian(pred_mean, pred_cov);
        step.filtered_state = Gaussian(filt_mean, filt_cov);
        step.predicted_output = Gaussian();
        step.cross_cov = Eigen::MatrixXd();
        record.filter.push_back(std::move(step));
        if (smooth_mean.hasNaN()) {
            have_smoother = false;
        } else if (have_smoother) {
            record.smoother.push_back(SmootherStep{Gaussian(smooth_mean, smooth_cov)});
        }
    }
    if (!have_smoother) record.smoother.clear();
    return record;
}

inline void write_summary_csv(const std::string& path,
                              const std::vector<std::pair<std::string, MetricSummary>>& rows) {
    CsvWriter csv(path);
    csv.header({"method", "task", "metric", "value", "stderr", "n_reps"});
    for (const auto& [method, summary] : rows) {
        csv.row_of_strings({method, summary.task, summary.metric,
                            detail::format_double(summary.value),
                            detail::format_double(summary.stderr_value),
                            std::to_string(summary.n_reps)});
    }
}

inline void write_coverage_curve_csv(
    const std::string& path,
    const std::vector<std::tuple<std::string, std::string, double, double>>& rows) {
    CsvWriter csv(path);
    csv.header({"method", "task", "level", "empirical"});
    for (const auto& [method, task, level, empirical] : rows) {
        csv.row_of_strings(
            {method, task, detail::format_double(level), detail::format_double(empirical)});
    }
}

}  // namespace nkf
