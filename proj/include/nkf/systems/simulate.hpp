#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "nkf/errors.hpp"
#include "nkf/estimation.hpp"
#include "nkf/gaussian.hpp"
#include "nkf/random.hpp"

namespace nkf {

struct SimulatedTrajectory {
    Eigen::MatrixXd states;   // n_x x (T+1), including x0
    Eigen::MatrixXd outputs;  // n_y x T
};

/// Generative rollout of a dynamic model under the given input sequence.
/// x0 is drawn from the initial belief; process, measurement and initial
/// draws use separate streams of (seed, replication).
inline SimulatedTrajectory simulate_model(const DynamicModel& model,
                                          const Eigen::MatrixXd& inputs, std::uint64_t seed,
                                          std::uint64_t replication = 0) {
    if (inputs.rows() != model.n_u) {
        throw dimension_error("simulate_model: input dimension mismatch");
    }
    const Eigen::Index horizon = inputs.cols();
    RngStream process(seed, replication, StreamRole::process_noise);
    RngStream measure(seed, replication, StreamRole::measurement_noise);
    RngStream init(seed, replication, StreamRole::initial_state);

    const Eigen::MatrixXd sqrt_q = psd_sqrt(model.Q);
    const Eigen::MatrixXd sqrt_r = psd_sqrt(model.R);
    const Eigen::MatrixXd sqrt_s0 = psd_sqrt(model.init.cov());

    SimulatedTrajectory out;
    out.states.resize(model.n_x, horizon + 1);
    out.outputs.resize(model.n_y, horizon);
    Eigen::VectorXd x = model.init.mean() + sqrt_s0 * init.normal_vector(model.n_x);
    out.states.col(0) = x;
    Eigen::VectorXd xu(model.n_x + model.n_u);
    for (Eigen::Index t = 0; t < horizon; ++t) {
        xu << x, inputs.col(t);
        x = network_eval(xu, model.F) + sqrt_q * process.normal_vector(model.n_x);
        if (!x.allFinite()) {
            throw estimation_error(
                numerical_error("divergent_simulation", "simulate_model: state overflow"),
                static_cast<int>(t + 1));
        }
        xu << x, inputs.col(t);
        out.outputs.col(t) =
            network_eval(xu, model.H) + sqrt_r * measure.normal_vector(model.n_y);
        out.states.col(t + 1) = x;
    }
    return out;
}

}  // namespace nkf
