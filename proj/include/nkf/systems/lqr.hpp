#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "nkf/errors.hpp"
#include "nkf/estimation.hpp"
#include "nkf/random.hpp"
#include "nkf/systems/simulate.hpp"

namespace nkf {

struct DareSolution {
    Eigen::MatrixXd P;
    Eigen::MatrixXd K;
};

/// Fixed-point iteration of the discrete algebraic Riccati equation with
/// unit state and control weights; K = (I + B'PB)^-1 B'PA.
inline DareSolution dare_gain(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                              double tolerance = 1e-12, int max_iterations = 100000) {
    if (a.rows() != a.cols() || b.rows() != a.rows()) {
        throw dimension_error("dare_gain: A must be square and B conformable");
    }
    const Eigen::Index n = a.rows();
    const Eigen::Index m = b.cols();
    const Eigen::MatrixXd eye_n = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd eye_m = Eigen::MatrixXd::Identity(m, m);

    Eigen::MatrixXd p = eye_n;
    for (int it = 0; it < max_iterations; ++it) {
        Eigen::MatrixXd btp = b.transpose() * p;
        Eigen::MatrixXd gain = (eye_m + btp * b).ldlt().solve(btp * a);
        Eigen::MatrixXd next =
            eye_n + a.transpose() * p * a - a.transpose() * p * b * gain;
        next = 0.5 * (next + next.transpose());
        double step = (next - p).cwiseAbs().maxCoeff();
        p = next;
        if (step < tolerance) {
            DareSolution out{p, (eye_m + b.transpose() * p * b).ldlt().solve(
                                    b.transpose() * p * a)};
            double radius = (a - b * out.K).eigenvalues().cwiseAbs().maxCoeff();
            if (radius >= 1.0) {
                throw numerical_error("unstable_gain",
                                      "dare_gain: closed loop not contracting");
            }
            return out;
        }
    }
    throw numerical_error("dare_divergence", "dare_gain: no convergence");
}

/// Regulation setup on the linear plant (A, B) with unit quadratic weights.
struct LqrSetup {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    Eigen::MatrixXd K;
    Eigen::MatrixXd P;
    Eigen::Index horizon = 0;

    static LqrSetup solve(Eigen::MatrixXd a, Eigen::MatrixXd b, Eigen::Index horizon) {
        DareSolution sol = dare_gain(a, b);
        return LqrSetup{std::move(a), std::move(b), std::move(sol.K), std::move(sol.P), horizon};
    }
};

struct ClosedLoopResult {
    double state_cost = 0.0;
    double control_cost = 0.0;
    double total_cost = 0.0;
    double baseline_state_cost = 0.0;
    double baseline_control_cost = 0.0;
    double baseline_total_cost = 0.0;
    bool diverged = false;
    std::string failure;  // "failed: <kind>" when the filter broke down
    RunRecord record;     // filtering beliefs over the completed steps

    double total_cost_ratio() const { return total_cost / baseline_total_cost; }
    double state_cost_ratio() const { return state_cost / baseline_state_cost; }
    double control_cost_ratio() const { return control_cost / baseline_control_cost; }
};

/// Closed loop u_t = -K xhat_{t-1|t-1} with the Kalman filter in the loop,
/// against the true-state-feedback baseline u_t = -K x_{t-1} on the same
/// noise realization (shared for variance reduction). Divergence is
/// recorded in the result, not raised.
inline ClosedLoopResult closed_loop_run(const DynamicModel& model, const Eigen::MatrixXd& gain,
                                        const PropagatorSpec& spec, Eigen::Index horizon,
                                        std::uint64_t seed, std::uint64_t replication = 0) {
    if (gain.rows() != model.n_u || gain.cols() != model.n_x) {
        throw dimension_error("closed_loop_run: gain must be n_u x n_x");
    }
    RngStream process(seed, replication, StreamRole::process_noise);
    RngStream measure(seed, replication, StreamRole::measurement_noise);
    const Eigen::MatrixXd sqrt_q = psd_sqrt(model.Q);
    const Eigen::MatrixXd sqrt_r = psd_sqrt(model.R);
    const Eigen::MatrixXd process_noise = sqrt_q * process.normal_matrix(model.n_x, horizon);
    const Eigen::MatrixXd measure_noise = sqrt_r * measure.normal_matrix(model.n_y, horizon);

    constexpr double kOverflow = 1e100;
    const double inf = std::numeric_limits<double>::infinity();

    ClosedLoopResult result;
    result.record.truth.resize(model.n_x, horizon);

    // Candidate: certainty-equivalent control from the filtered mean.
    {
        Eigen::VectorXd x = model.init.mean();
        Gaussian belief = model.init;
        Eigen::VectorXd xu(model.n_x + model.n_u);
        for (Eigen::Index t = 0; t < horizon; ++t) {
            Eigen::VectorXd u = -gain * belief.mean();
            xu << x, u;
            x = network_eval(xu, model.F) + process_noise.col(t);
            if (!x.allFinite() || x.cwiseAbs().maxCoeff() > kOverflow) {
                result.diverged = true;
                result.failure = "failed: state_overflow";
                result.state_cost = result.control_cost = result.total_cost = inf;
                result.record.truth.conservativeResize(model.n_x, t);
                break;
            }
            xu << x, u;
            Eigen::VectorXd y = network_eval(xu, model.H) + measure_noise.col(t);
            try {
                BlockGaussian joint = kf_predict(belief, u, model, spec);
                belief = kf_update(joint, y);
                result.record.truth.col(t) = x;
                result.record.filter.push_back(
                    FilterStep{joint.first(), joint.second(), joint.cross_cov(), belief});
            } catch (const numerical_error& e) {
                result.diverged = true;
                result.failure = "failed: " + std::string(e.kind());
                result.state_cost = result.control_cost = result.total_cost = inf;
                result.record.truth.conservativeResize(model.n_x, t);
                break;
            }
            result.state_cost += x.squaredNorm();
            result.control_cost += u.squaredNorm();
        }
        if (!result.diverged) result.total_cost = result.state_cost + result.control_cost;
    }

    // Baseline: full-state feedback on the identical noise streams.
    {
        Eigen::VectorXd x = model.init.mean();
        Eigen::VectorXd xu(model.n_x + model.n_u);
        for (Eigen::Index t = 0; t < horizon; ++t) {
            Eigen::VectorXd u = -gain * x;
            xu << x, u;
            x = network_eval(xu, model.F) + process_noise.col(t);
            if (!x.allFinite() || x.cwiseAbs().maxCoeff() > kOverflow) {
                result.baseline_state_cost = result.baseline_control_cost =
                    result.baseline_total_cost = inf;
                break;
            }
            result.baseline_state_cost += x.squaredNorm();
            result.baseline_control_cost += u.squaredNorm();
        }
        if (std::isfinite(result.baseline_state_cost)) {
            result.baseline_total_cost =
                result.baseline_state_cost + result.baseline_control_cost;
        }
    }
    return result;
}

}  // namespace nkf
