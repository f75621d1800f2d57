#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "nkf/errors.hpp"
#include "nkf/estimation.hpp"
#include "nkf/random.hpp"

namespace nkf {

/// Calibration testbed: a random network is simultaneously the generator
/// and the filtering model, so miscalibration can only come from the
/// propagation approximation itself.
struct NetworkTruthConfig {
    Eigen::Index n_x = 3;
    Eigen::Index n_u = 0;
    Eigen::Index n_y = 3;
    int depth = 2;
    Eigen::Index width = 16;
    Activation activation = Activation::sine;
    double transition_gain = 0.8;      // spectral radius of the recurrence at the origin
    double first_layer_norm = 0.4;     // spectral norm bound on the first-layer A
    double obs_first_layer_norm = 0.3;
    double q_scale = 2.5e-3;
    double r_scale = 2.5e-3;

    void validate() const {
        if (n_x < 1 || n_y < 1 || n_u < 0 || depth < 1 || width < 1) {
            throw config_error("NetworkTruthConfig: bad dimensions");
        }
        if (!(transition_gain > 0.0 && transition_gain < 1.0)) {
            throw config_error("NetworkTruthConfig: transition gain must lie in (0,1)");
        }
    }
};

namespace detail {

inline void rescale_spectral_norm(Eigen::MatrixXd& m, double target) {
    double norm = m.jacobiSvd().singularValues()(0);
    if (norm > 0.0) m *= target / norm;
}

}  // namespace detail

inline DynamicModel make_network_truth_system(const NetworkTruthConfig& config,
                                              std::uint64_t seed) {
    config.validate();
    RngStream rng(seed, 0, StreamRole::weights);
    const Eigen::Index n_in = config.n_x + config.n_u;

    // Transition: sine-in, optional residual middle layers, affine readout.
    // Depth 1 degenerates to one layer whose A = 0 limit is linear-Gaussian.
    std::vector<Layer> layers;
    if (config.depth == 1) {
        Layer only;
        only.A = rng.normal_matrix(config.n_x, n_in);
        detail::rescale_spectral_norm(only.A, config.first_layer_norm);
        only.b = 0.3 * rng.normal_vector(config.n_x);
        only.C = rng.normal_matrix(config.n_x, n_in) / std::sqrt(static_cast<double>(n_in));
        only.d = Eigen::VectorXd::Zero(config.n_x);
        layers.push_back(only);
    } else {
        Layer first;
        first.A = rng.normal_matrix(config.width, n_in);
        detail::rescale_spectral_norm(first.A, config.first_layer_norm);
        first.b = 0.3 * rng.normal_vector(config.width);
        first.C = Eigen::MatrixXd::Zero(config.width, n_in);
        first.d = Eigen::VectorXd::Zero(config.width);
        layers.push_back(first);
        for (int k = 2; k < config.depth; ++k) {
            Layer middle;
            middle.A = rng.normal_matrix(config.width, config.width);
            detail::rescale_spectral_norm(middle.A, 0.5 * config.first_layer_norm);
            middle.b = 0.3 * rng.normal_vector(config.width);
            middle.C = Eigen::MatrixXd::Identity(config.width, config.width);
            middle.d = Eigen::VectorXd::Zero(config.width);
            layers.push_back(middle);
        }
        Layer readout;
        readout.A = Eigen::MatrixXd::Zero(config.n_x, config.width);
        readout.b = Eigen::VectorXd::Zero(config.n_x);
        readout.C = rng.normal_matrix(config.n_x, config.width) /
                    std::sqrt(static_cast<double>(config.width));
        readout.d = Eigen::VectorXd::Zero(config.n_x);
        layers.push_back(readout);
    }
    Network transition(layers, config.activation, n_in);

    // Rescale the readout so the recurrence has the requested gain at 0.
    Eigen::MatrixXd jac =
        network_jacobian(Eigen::VectorXd::Zero(n_in), transition).leftCols(config.n_x);
    double radius = jac.eigenvalues().cwiseAbs().maxCoeff();
    layers.back().C *= config.transition_gain / std::max(radius, 1e-9);
    transition = Network(layers, config.activation, n_in);

    // Observation: one mildly nonlinear layer with a well-conditioned
    // linear bypass of the state (keeps the system strongly observable).
    Layer obs;
    obs.A = rng.normal_matrix(config.n_y, n_in);
    detail::rescale_spectral_norm(obs.A, config.obs_first_layer_norm);
    obs.b = 0.3 * rng.normal_vector(config.n_y);
    Eigen::MatrixXd mix = rng.normal_matrix(config.n_y, config.n_x);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(mix, Eigen::ComputeThinU | Eigen::ComputeThinV);
    obs.C = Eigen::MatrixXd::Zero(config.n_y, n_in);
    obs.C.leftCols(config.n_x) = svd.matrixU() * svd.matrixV().transpose();
    obs.d = Eigen::VectorXd::Zero(config.n_y);
    Network observation({obs}, config.activation, n_in);

    DynamicModel model;
    model.F = std::move(transition);
    model.H = std::move(observation);
    model.Q = config.q_scale * Eigen::MatrixXd::Identity(config.n_x, config.n_x);
    model.R = config.r_scale * Eigen::MatrixXd::Identity(config.n_y, config.n_y);
    const double stationary =
        config.q_scale / (1.0 - config.transition_gain * config.transition_gain);
    model.init = Gaussian(Eigen::VectorXd::Zero(config.n_x),
                          stationary * Eigen::MatrixXd::Identity(config.n_x, config.n_x));
    model.n_x = config.n_x;
    model.n_u = config.n_u;
    model.n_y = config.n_y;
    model.validate();
    return model;
}

}  // namespace nkf
