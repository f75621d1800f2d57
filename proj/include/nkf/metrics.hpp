#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "nkf/errors.hpp"
#include "nkf/estimation.hpp"
#include "nkf/gaussian.hpp"
#include "nkf/special_functions.hpp"

namespace nkf {

/// One (truth, belief) pair, the pointwise argument of every criterion.
struct CriterionSample {
    Eigen::VectorXd truth;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

enum class Task { prediction, filtering, smoothing };

inline const char* to_string(Task t) {
    switch (t) {
        case Task::prediction: return "prediction";
        case Task::filtering: return "filtering";
        case Task::smoothing: return "smoothing";
    }
    return "?";
}

struct MetricSummary {
    std::string metric;
    std::string task;
    double value = 0.0;
    double stderr_value = 0.0;
    int n_reps = 1;
    std::string flag;
};

namespace detail {

/// Squared Mahalanobis distance with the jitter escalation policy; throws
/// when the covariance is unusable even after escalation.
inline double mahalanobis_sq(const CriterionSample& s) {
    Eigen::VectorXd r = s.truth - s.mean;
    Eigen::MatrixXd solved = solve_spd_with_jitter(s.cov, r, "mahalanobis");
    return r.dot(solved.col(0));
}

/// Log-determinant via plain Cholesky; empty optional when singular.
/// Deliberately without jitter: a singular covariance means an infinite
/// cross entropy, which the caller records rather than masks.
inline std::optional<double> log_det_spd(const Eigen::MatrixXd& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) return std::nullopt;
    return 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
}

inline double sample_sd(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / (static_cast<double>(v.size()) - 1.0));
}

}  // namespace detail

/// Root-mean-square Euclidean error; stderr by the delta method on the mean
/// of squared errors.
inline MetricSummary rmse(std::span<const CriterionSample> samples) {
    if (samples.empty()) throw dimension_error("rmse: empty sample set");
    std::vector<double> sq;
    sq.reserve(samples.size());
    for (const auto& s : samples) sq.push_back((s.truth - s.mean).squaredNorm());
    double mean_sq = 0.0;
    for (double v : sq) mean_sq += v;
    mean_sq /= static_cast<double>(sq.size());

    MetricSummary out;
    out.metric = "rmse";
    out.value = std::sqrt(mean_sq);
    out.n_reps = static_cast<int>(samples.size());
    if (mean_sq > 0.0) {
        double se_mean_sq = detail::sample_sd(sq, mean_sq) / std::sqrt(static_cast<double>(sq.size()));
        out.stderr_value = se_mean_sq / (2.0 * std::sqrt(mean_sq));
    }
    return out;
}

/// Mean of 1/2 log det S + 1/2 (x-mu)^T S^-1 (x-mu). Singular covariances
/// contribute +infinity, mirroring the infinite cross entropy of a point
/// mass that misses the truth; the count is recorded in `flag`.
inline MetricSummary cross_entropy(std::span<const CriterionSample> samples) {
    if (samples.empty()) throw dimension_error("cross_entropy: empty sample set");
    std::vector<double> values;
    values.reserve(samples.size());
    long infinite = 0;
    for (const auto& s : samples) {
        auto log_det = detail::log_det_spd(s.cov);
        if (!log_det) {
            ++infinite;
            values.push_back(std::numeric_limits<double>::infinity());
            continue;
        }
        values.push_back(0.5 * *log_det + 0.5 * detail::mahalanobis_sq(s));
    }
    MetricSummary out;
    out.metric = "cross_entropy";
    out.n_reps = static_cast<int>(samples.size());
    if (infinite > 0) {
        out.value = std::numeric_limits<double>::infinity();
        out.flag = "infinite_contributions=" + std::to_string(infinite);
        return out;
    }
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    out.value = mean;
    out.stderr_value =
        detail::sample_sd(values, mean) / std::sqrt(static_cast<double>(values.size()));
    return out;
}

namespace detail {

inline bool coverage_hit(const CriterionSample& s, double quantile) {
    try {
        return mahalanobis_sq(s) <= quantile;
    } catch (const numerical_error&) {
        // Unusable covariance: a miss unless the estimate is exactly right.
        return (s.truth.array() == s.mean.array()).all();
    }
}

}  // namespace detail

/// Fraction of samples whose truth lies inside the (1-alpha) chi-squared
/// ellipsoid of the belief; binomial stderr.
inline MetricSummary coverage(std::span<const CriterionSample> samples, double alpha) {
    if (samples.empty()) throw dimension_error("coverage: empty sample set");
    if (!(alpha > 0.0 && alpha < 1.0)) throw dimension_error("coverage: alpha must be in (0,1)");
    const int dof = static_cast<int>(samples.front().truth.size());
    const double quantile = chi2_quantile(dof, 1.0 - alpha);
    long hits = 0;
    for (const auto& s : samples) hits += detail::coverage_hit(s, quantile) ? 1 : 0;
    const double n = static_cast<double>(samples.size());
    MetricSummary out;
    out.metric = "coverage";
    out.value = static_cast<double>(hits) / n;
    out.stderr_value = std::sqrt(std::max(0.0, out.value * (1.0 - out.value) / n));
    out.n_reps = static_cast<int>(samples.size());
    return out;
}

/// Mean volume of the (1-alpha) confidence ellipsoid:
/// quantile^(n/2) * V_n * sqrt(det S). Depends on the covariances only.
inline MetricSummary coverage_volume(std::span<const CriterionSample> samples, double alpha) {
    if (samples.empty()) throw dimension_error("coverage_volume: empty sample set");
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw dimension_error("coverage_volume: alpha must be in (0,1)");
    }
    const int dof = static_cast<int>(samples.front().cov.rows());
    const double scale = std::pow(chi2_quantile(dof, 1.0 - alpha), 0.5 * dof) * ball_volume(dof);
    std::vector<double> values;
    values.reserve(samples.size());
    for (const auto& s : samples) {
        // Determinant from LDLT pivots floored at zero: singular -> volume 0.
        Eigen::LDLT<Eigen::MatrixXd> ldlt(s.cov);
        double det = ldlt.vectorD().cwiseMax(0.0).prod();
        values.push_back(scale * std::sqrt(std::max(0.0, det)));
    }
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    MetricSummary out;
    out.metric = "coverage_volume";
    out.value = mean;
    out.stderr_value =
        detail::sample_sd(values, mean) / std::sqrt(static_cast<double>(values.size()));
    out.n_reps = static_cast<int>(samples.size());
    return out;
}

/// Empirical coverage at each nominal level; the Figure-family plot data.
inline std::vector<std::pair<double, double>> coverage_curve(
    std::span<const CriterionSample> samples, std::span<const double> levels) {
    if (samples.empty()) throw dimension_error("coverage_curve: empty sample set");
    const int dof = static_cast<int>(samples.front().truth.size());
    std::vector<double> maha;
    maha.reserve(samples.size());
    std::vector<bool> usable(samples.size(), true);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        try {
            maha.push_back(detail::mahalanobis_sq(samples[i]));
        } catch (const numerical_error&) {
            usable[i] = false;
            maha.push_back(std::numeric_limits<double>::infinity());
        }
    }
    std::vector<std::pair<double, double>> curve;
    curve.reserve(levels.size());
    for (double level : levels) {
        if (!(level > 0.0 && level < 1.0)) {
            throw dimension_error("coverage_curve: levels must lie in (0,1)");
        }
        const double quantile = chi2_quantile(dof, level);
        long hits = 0;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            bool hit = usable[i] ? maha[i] <= quantile
                                 : (samples[i].truth.array() == samples[i].mean.array()).all();
            hits += hit ? 1 : 0;
        }
        curve.emplace_back(level, static_cast<double>(hits) / static_cast<double>(samples.size()));
    }
    return curve;
}

// ---------------------------------------------------------------------------
// RunRecord aggregation
// ---------------------------------------------------------------------------

/// Extract the belief sequence of one task from a run record.
inline std::vector<CriterionSample> criterion_samples(const RunRecord& record, Task task) {
    std::vector<CriterionSample> samples;
    samples.reserve(static_cast<std::size_t>(record.horizon()));
    for (Eigen::Index t = 0; t < record.horizon(); ++t) {
        const auto& step = record.filter[static_cast<std::size_t>(t)];
        const Gaussian* belief = nullptr;
        switch (task) {
            case Task::prediction: belief = &step.predicted_state; break;
            case Task::filtering: belief = &step.filtered_state; break;
            case Task::smoothing:
                belief = &record.smoother[static_cast<std::size_t>(t)].smoothed_state;
                break;
        }
        samples.push_back(CriterionSample{record.truth.col(t), belief->mean(), belief->cov()});
    }
    return samples;
}

/// All four criteria for all three tasks, with Monte Carlo standard errors
/// taken across replications (successive steps are autocorrelated, so
/// step-level errors would be optimistic). RMSE aggregates through the mean
/// of per-replication squared errors.
inline std::vector<MetricSummary> evaluate_run(std::span<const RunRecord> records, double alpha) {
    if (records.empty()) throw dimension_error("evaluate_run: needs at least one replication");
    const Eigen::Index n_x = records.front().truth.rows();
    for (const auto& r : records) {
        if (r.truth.rows() != n_x) throw dimension_error("evaluate_run: mixed state dimensions");
    }
    const int n_reps = static_cast<int>(records.size());
    const bool have_smoother = !records.front().smoother.empty();

    std::vector<MetricSummary> summaries;
    for (Task task : {Task::prediction, Task::filtering, Task::smoothing}) {
        if (task == Task::smoothing && !have_smoother) continue;
        std::vector<std::vector<CriterionSample>> reps;
        reps.reserve(records.size());
        for (const auto& record : records) reps.push_back(criterion_samples(record, task));

        auto aggregate = [&](const std::string& metric,
                             auto&& per_rep_value) -> MetricSummary {
            std::vector<double> values;
            values.reserve(reps.size());
            std::string flag;
            for (const auto& rep : reps) values.push_back(per_rep_value(rep));
            double mean = 0.0;
            bool infinite = false;
            for (double v : values) {
                if (std::isinf(v)) infinite = true;
                mean += v;
            }
            mean /= static_cast<double>(values.size());
            MetricSummary out;
            out.metric = metric;
            out.task = to_string(task);
            out.n_reps = n_reps;
            if (infinite) {
                out.value = std::numeric_limits<double>::infinity();
                out.flag = "infinite_contributions";
                return out;
            }
            out.value = mean;
            out.stderr_value = n_reps > 1 ? detail::sample_sd(values, mean) /
                                                std::sqrt(static_cast<double>(n_reps))
                                          : 0.0;
            if (n_reps == 1) out.flag = "single_replication";
            return out;
        };

        // RMSE: delta method on the replication-level mean squared errors.
        {
            std::vector<double> mse;
            mse.reserve(reps.size());
            for (const auto& rep : reps) {
                double acc = 0.0;
                for (const auto& s : rep) acc += (s.truth - s.mean).squaredNorm();
                mse.push_back(acc / static_cast<double>(rep.size()));
            }
            double mean_mse = 0.0;
            for (double v : mse) mean_mse += v;
            mean_mse /= static_cast<double>(mse.size());
            MetricSummary out;
            out.metric = "rmse";
            out.task = to_string(task);
            out.value = std::sqrt(mean_mse);
            out.n_reps = n_reps;
            if (n_reps > 1 && mean_mse > 0.0) {
                double se = detail::sample_sd(mse, mean_mse) / std::sqrt(static_cast<double>(n_reps));
                out.stderr_value = se / (2.0 * std::sqrt(mean_mse));
            } else if (n_reps == 1) {
                out.flag = "single_replication";
            }
            summaries.push_back(out);
        }
        summaries.push_back(aggregate("cross_entropy", [](const std::vector<CriterionSample>& rep) {
            return cross_entropy(rep).value;
        }));
        summaries.push_back(aggregate("coverage", [&](const std::vector<CriterionSample>& rep) {
            return coverage(rep, alpha).value;
        }));
        summaries.push_back(
            aggregate("coverage_volume", [&](const std::vector<CriterionSample>& rep) {
                return coverage_volume(rep, alpha).value;
            }));
    }
    return summaries;
}

}  // namespace nkf
