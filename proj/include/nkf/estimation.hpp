#pragma once

#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "nkf/errors.hpp"
#include "nkf/gaussian.hpp"
#include "nkf/network.hpp"
#include "nkf/propagation.hpp"

namespace nkf {

/// Discrete-time model x_t = F(x_{t-1}, u_t) + N(0, Q),
/// y_t = H(x_t, u_t) + N(0, R), with initial belief `init`.
/// F and H take the concatenated (x, u) as input.
struct DynamicModel {
    Network F;
    Network H;
    Eigen::MatrixXd Q;
    Eigen::MatrixXd R;
    Gaussian init;
    Eigen::Index n_x = 0;
    Eigen::Index n_u = 0;
    Eigen::Index n_y = 0;

    void validate() const {
        if (F.input_dim() != n_x + n_u || F.output_dim() != n_x) {
            throw dimension_error("DynamicModel: F must map (x, u) -> x");
        }
        if (H.input_dim() != n_x + n_u || H.output_dim() != n_y) {
            throw dimension_error("DynamicModel: H must map (x, u) -> y");
        }
        if (Q.rows() != n_x || Q.cols() != n_x || R.rows() != n_y || R.cols() != n_y) {
            throw dimension_error("DynamicModel: Q/R shapes do not match n_x/n_y");
        }
        if (init.dim() != n_x) throw dimension_error("DynamicModel: init dimension != n_x");
        symmetrize_psd(Q);
        symmetrize_psd(R);
    }
};

/// One forward step: the joint predictive distribution and the posterior.
struct FilterStep {
    Gaussian predicted_state;   // X_{t|t-1}
    Gaussian predicted_output;  // Y_{t|t-1}
    Eigen::MatrixXd cross_cov;  // Cov(X_{t|t-1}, Y_{t|t-1})
    Gaussian filtered_state;    // X_{t|t}
};

struct SmootherStep {
    Gaussian smoothed_state;  // X_{t|T}
};

/// Hook replacing the conditioning step, e.g. for update-free baselines or
/// recalibrated update variants. Receives the joint (X', Y') and the
/// measurement; returns the posterior state belief.
using UpdateHook = std::function<Gaussian(const BlockGaussian&, const Eigen::VectorXd&)>;

/// Predict phase of the Kalman recursion: propagate through F, add Q, then
/// couple the identity with H in a single network so the joint (X', Y')
/// falls out of one propagation. Returns the joint with split at n_x.
inline BlockGaussian kf_predict(const Gaussian& state, const Eigen::VectorXd& u,
                                const DynamicModel& model, const PropagatorSpec& spec) {
    if (u.size() != model.n_u) throw dimension_error("kf_predict: input dimension mismatch");

    Gaussian propagated = propagate(partially_apply(model.F, u), state, spec);
    Gaussian next_state(propagated.mean(), propagated.cov() + model.Q);

    Network coupled = augment_identity(partially_apply(model.H, u));
    Gaussian joint = propagate(coupled, next_state, spec);
    Eigen::MatrixXd cov = joint.cov();
    cov.bottomRightCorner(model.n_y, model.n_y) += model.R;
    return BlockGaussian(Gaussian(joint.mean(), cov), model.n_x);
}

/// Update phase: Bayes rule via Gaussian conditioning.
inline Gaussian kf_update(const BlockGaussian& joint, const Eigen::VectorXd& y) {
    return condition(joint, y);
}

/// Forward recursion of the Kalman filter. A failure at step t aborts the
/// run with the step index attached.
inline std::vector<FilterStep> filter_run(const DynamicModel& model, const Eigen::MatrixXd& inputs,
                                          const Eigen::MatrixXd& outputs,
                                          const PropagatorSpec& spec,
                                          const UpdateHook& update_hook = {}) {
    if (inputs.cols() != outputs.cols()) {
        throw dimension_error("filter_run: input/output horizons differ");
    }
    if (inputs.rows() != model.n_u || outputs.rows() != model.n_y) {
        throw dimension_error("filter_run: input/output dimensions do not match the model");
    }
    const Eigen::Index horizon = inputs.cols();
    std::vector<FilterStep> steps;
    steps.reserve(static_cast<std::size_t>(horizon));

    Gaussian state = model.init;
    for (Eigen::Index t = 0; t < horizon; ++t) {
        try {
            BlockGaussian joint = kf_predict(state, inputs.col(t), model, spec);
            Gaussian filtered = update_hook ? update_hook(joint, outputs.col(t))
                                            : kf_update(joint, outputs.col(t));
            steps.push_back(FilterStep{joint.first(), joint.second(), joint.cross_cov(), filtered});
            state = steps.back().filtered_state;
        } catch (const numerical_error& e) {
            throw estimation_error(e, static_cast<int>(t + 1));
        }
    }
    return steps;
}

/// Smoother predict phase: the joint (X, X') of the current and next state,
/// obtained by propagating (id, F(., u)) and adding 0 (+) Q.
inline BlockGaussian rts_predict(const Gaussian& state, const Eigen::VectorXd& u,
                                 const DynamicModel& model, const PropagatorSpec& spec) {
    if (u.size() != model.n_u) throw dimension_error("rts_predict: input dimension mismatch");
    Network coupled = augment_identity(partially_apply(model.F, u));
    Gaussian joint = propagate(coupled, state, spec);
    Eigen::MatrixXd cov = joint.cov();
    cov.bottomRightCorner(model.n_x, model.n_x) += model.Q;
    return BlockGaussian(Gaussian(joint.mean(), cov), model.n_x);
}

/// Smoother update in gain form: the conditioning variable is itself
/// Gaussian, which reduces to point conditioning when its covariance is 0.
inline Gaussian rts_update(const BlockGaussian& joint, const Gaussian& next_smoothed) {
    if (next_smoothed.dim() != joint.second_dim()) {
        throw dimension_error("rts_update: smoothed-state dimension mismatch");
    }
    const Eigen::MatrixXd cross = joint.cross_cov();
    if (cross.isZero(0.0)) {
        return joint.first();  // no backward information flows through a zero cross block
    }
    // Gain G = S_xx' S_x'x'^-1, computed as a transposed SPD solve.
    Eigen::MatrixXd gain =
        solve_spd_with_jitter(joint.second_cov(), cross.transpose(), "rts_update").transpose();
    Eigen::VectorXd mean =
        joint.first_mean() + gain * (next_smoothed.mean() - joint.second_mean());
    Eigen::MatrixXd cov = joint.first_cov() +
                          gain * (next_smoothed.cov() - joint.second_cov()) * gain.transpose();
    return Gaussian(std::move(mean), cov);
}

/// Backward recursion of the RTS smoother, seeded by a filter pass. The
/// returned list aligns with the filter steps (t = 1..T); the smoothed
/// initial belief X_{0|T} is written to `smoothed_init` when requested.
inline std::vector<SmootherStep> smoother_run(const DynamicModel& model,
                                              const Eigen::MatrixXd& inputs,
                                              const PropagatorSpec& spec,
                                              const std::vector<FilterStep>& filter_steps,
                                              Gaussian* smoothed_init = nullptr) {
    const Eigen::Index horizon = inputs.cols();
    if (static_cast<Eigen::Index>(filter_steps.size()) != horizon) {
        throw dimension_error("smoother_run: filter pass does not match the horizon");
    }
    std::vector<SmootherStep> steps(static_cast<std::size_t>(horizon));
    if (horizon == 0) return steps;

    steps.back().smoothed_state = filter_steps.back().filtered_state;
    for (Eigen::Index t = horizon - 2; t >= -1; --t) {
        const Gaussian& current =
            t >= 0 ? filter_steps[static_cast<std::size_t>(t)].filtered_state : model.init;
        const Gaussian& next_smoothed = steps[static_cast<std::size_t>(t + 1)].smoothed_state;
        try {
            BlockGaussian joint = rts_predict(current, inputs.col(t + 1), model, spec);
            Gaussian smoothed = rts_update(joint, next_smoothed);
            if (t >= 0) {
                steps[static_cast<std::size_t>(t)].smoothed_state = std::move(smoothed);
            } else if (smoothed_init) {
                *smoothed_init = std::move(smoothed);
            }
        } catch (const numerical_error& e) {
            throw estimation_error(e, static_cast<int>(t + 1));
        }
        if (t == -1) break;
    }
    return steps;
}

inline std::vector<SmootherStep> smoother_run(const DynamicModel& model,
                                              const Eigen::MatrixXd& inputs,
                                              const Eigen::MatrixXd& outputs,
                                              const PropagatorSpec& spec,
                                              Gaussian* smoothed_init = nullptr) {
    return smoother_run(model, inputs, spec, filter_run(model, inputs, outputs, spec),
                        smoothed_init);
}

/// Per-time-step record of the three estimation problems plus ground truth;
/// the unit of metric evaluation. truth holds x_1..x_T as columns.
struct RunRecord {
    Eigen::MatrixXd truth;
    std::vector<FilterStep> filter;
    std::vector<SmootherStep> smoother;

    Eigen::Index horizon() const { return static_cast<Eigen::Index>(filter.size()); }
};

}  // namespace nkf
