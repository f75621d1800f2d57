#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

#include <Eigen/Core>

#include "nkf/errors.hpp"
#include "nkf/estimation.hpp"
#include "nkf/random.hpp"

namespace nkf {

/// Sampled stochastic Lorenz system: the SDE is integrated over each
/// sampling interval by Euler-Maruyama with `substeps` sub-intervals, and
/// the first state coordinate is measured with additive noise.
struct LorenzConfig {
    double sigma = 10.0;
    double rho = 28.0;
    double beta = 8.0 / 3.0;
    double process_noise = 0.001;      // Brownian scale (isotropic)
    double measurement_noise = 0.1;    // std dev on the x1 measurement
    double dt = 1.0;                   // sampling time
    int substeps = 1000;
    Eigen::Vector3d x0{-8.0, 4.0, 27.0};

    void validate() const {
        if (dt <= 0.0 || substeps < 1) throw config_error("LorenzConfig: dt > 0, substeps >= 1");
        if (process_noise < 0.0 || measurement_noise < 0.0) {
            throw config_error("LorenzConfig: noise scales must be nonnegative");
        }
    }
};

inline Eigen::Vector3d lorenz_drift(const Eigen::Vector3d& x, const LorenzConfig& config = {}) {
    return {config.sigma * (x(1) - x(0)), x(0) * (config.rho - x(2)) - x(1),
            x(0) * x(1) - config.beta * x(2)};
}

struct LorenzTrajectory {
    Eigen::MatrixXd states;        // 3 x (T+1), including x0
    Eigen::MatrixXd measurements;  // 1 x T, y_t = x1_t + noise
};

inline LorenzTrajectory simulate_lorenz(const LorenzConfig& config, Eigen::Index steps,
                                        std::uint64_t seed, std::uint64_t replication = 0) {
    config.validate();
    RngStream process(seed, replication, StreamRole::process_noise);
    RngStream measure(seed, replication, StreamRole::measurement_noise);

    const double h = config.dt / config.substeps;
    const double noise_scale = config.process_noise * std::sqrt(h);

    LorenzTrajectory out;
    out.states.resize(3, steps + 1);
    out.measurements.resize(1, steps);
    Eigen::Vector3d x = config.x0;
    out.states.col(0) = x;
    for (Eigen::Index t = 0; t < steps; ++t) {
        for (int s = 0; s < config.substeps; ++s) {
            x += h * lorenz_drift(x, config);
            if (config.process_noise > 0.0) x += noise_scale * process.normal_vector(3);
        }
        if (!x.allFinite()) {
            throw estimation_error(
                numerical_error("divergent_integration", "simulate_lorenz: state overflow"),
                static_cast<int>(t + 1));
        }
        out.states.col(t + 1) = x;
        out.measurements(0, t) = x(0) + config.measurement_noise * measure.normal();
    }
    return out;
}

/// Filtering model around a transition surrogate: the observation network is
/// the exact linear selector of x1, R the squared measurement noise, and the
/// initial belief the deterministic x0 (estimation difficulty lives in F).
inline DynamicModel make_lorenz_filter_model(Network transition, const Eigen::MatrixXd& q,
                                             const LorenzConfig& config) {
    if (transition.input_dim() != 3 || transition.output_dim() != 3) {
        throw dimension_error("make_lorenz_filter_model: transition must map R^3 -> R^3");
    }
    Layer selector;
    selector.A = Eigen::MatrixXd::Zero(1, 3);
    selector.b = Eigen::VectorXd::Zero(1);
    selector.C = Eigen::MatrixXd::Zero(1, 3);
    selector.C(0, 0) = 1.0;
    selector.d = Eigen::VectorXd::Zero(1);

    DynamicModel model;
    model.F = std::move(transition);
    model.H = Network({selector}, model.F.activation(), 3);
    model.Q = q;
    model.R = Eigen::MatrixXd::Constant(
        1, 1, config.measurement_noise * config.measurement_noise);
    model.init = Gaussian::deterministic(config.x0);
    model.n_x = 3;
    model.n_u = 0;
    model.n_y = 1;
    model.validate();
    return model;
}

}  // namespace nkf
