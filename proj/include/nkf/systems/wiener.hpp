#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "nkf/errors.hpp"
#include "nkf/estimation.hpp"
#include "nkf/random.hpp"

namespace nkf {

/// Controllable canonical (companion) realization whose characteristic
/// polynomial has the given real roots; B is the unit last column.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> controllable_canonical(
    const std::vector<double>& eigenvalues) {
    const Eigen::Index n = static_cast<Eigen::Index>(eigenvalues.size());
    if (n < 1) throw dimension_error("controllable_canonical: need at least one eigenvalue");

    // Expand prod (lambda - r_i) into monomial coefficients.
    std::vector<double> coeffs{1.0};
    for (double root : eigenvalues) {
        std::vector<double> next(coeffs.size() + 1, 0.0);
        for (std::size_t k = 0; k < coeffs.size(); ++k) {
            next[k] += coeffs[k] * (-root);
            next[k + 1] += coeffs[k];
        }
        coeffs = std::move(next);
    }
    // coeffs[k] multiplies lambda^k; coeffs[n] = 1.
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i + 1 < n; ++i) a(i, i + 1) = 1.0;
    for (Eigen::Index j = 0; j < n; ++j) a(n - 1, j) = -coeffs[static_cast<std::size_t>(j)];
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, 1);
    b(n - 1, 0) = 1.0;
    return {a, b};
}

/// Wiener benchmark: linear dynamics in controllable canonical form with a
/// two-layer probit observation network initialized to excite saturation.
struct WienerSystemSpec {
    Eigen::Index n_x = 5;
    Eigen::Index n_y = 3;
    Eigen::Index n_u = 1;
    std::vector<double> eigenvalues{0.9, 0.7, 0.5, 0.3, 0.1};
    Eigen::Index hidden_width = 50;
    double first_weight_scale = 10.0;  // times 1/sqrt(fan-in)
    double first_bias_scale = 10.0;    // times 1/sqrt(fan-in)
    double q_scale = 1e-3;
    double r_scale = 1e-3;
    double input_frequency = 0.2;  // u(t) = sin(freq * t)

    /// Stable estimation benchmark.
    static WienerSystemSpec estimation_benchmark() { return {}; }

    /// Marginally stable regulation benchmark (spectral radius 1).
    static WienerSystemSpec regulation_benchmark() {
        WienerSystemSpec spec;
        spec.n_x = 4;
        spec.n_y = 8;
        spec.eigenvalues = {1.0, -1.0, 0.1, -0.1};
        spec.first_bias_scale = 1.0;
        spec.q_scale = 1e-2;
        spec.r_scale = 1e-4;
        return spec;
    }

    void validate() const {
        if (static_cast<Eigen::Index>(eigenvalues.size()) != n_x) {
            throw config_error("WienerSystemSpec: eigenvalue count must equal n_x");
        }
        if (n_u != 1) throw config_error("WienerSystemSpec: single-input form only");
        if (hidden_width < 1 || n_y < 1) throw config_error("WienerSystemSpec: bad dimensions");
    }
};

/// Build the observation network: hidden probit layer of `width` units over
/// (x, u), then an affine layer into a final probit (C = 0 in both layers).
inline Network make_wiener_observation(const WienerSystemSpec& spec, RngStream& rng) {
    const Eigen::Index fan_in1 = spec.n_x + spec.n_u;
    const double scale_w1 = spec.first_weight_scale / std::sqrt(static_cast<double>(fan_in1));
    const double scale_b1 = spec.first_bias_scale / std::sqrt(static_cast<double>(fan_in1));
    Layer hidden;
    hidden.A = scale_w1 * rng.normal_matrix(spec.hidden_width, fan_in1);
    hidden.b = scale_b1 * rng.normal_vector(spec.hidden_width);
    hidden.C = Eigen::MatrixXd::Zero(spec.hidden_width, fan_in1);
    hidden.d = Eigen::VectorXd::Zero(spec.hidden_width);

    const double scale_w2 = 1.0 / std::sqrt(static_cast<double>(spec.hidden_width));
    Layer readout;
    readout.A = scale_w2 * rng.normal_matrix(spec.n_y, spec.hidden_width);
    readout.b = Eigen::VectorXd::Zero(spec.n_y);
    readout.C = Eigen::MatrixXd::Zero(spec.n_y, spec.hidden_width);
    readout.d = Eigen::VectorXd::Zero(spec.n_y);

    return Network({std::move(hidden), std::move(readout)}, Activation::probit, fan_in1);
}

/// The transition x' = A x + B u as a single affine probit layer
/// (sigma(0) = 1/2 cancelled through d so the map is exactly affine).
inline Network make_affine_transition(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                      Activation act) {
    const Eigen::Index n_x = a.rows();
    const Eigen::Index n_u = b.cols();
    Layer layer;
    layer.A = Eigen::MatrixXd::Zero(n_x, n_x + n_u);
    layer.b = Eigen::VectorXd::Zero(n_x);
    layer.C.resize(n_x, n_x + n_u);
    layer.C << a, b;
    layer.d = Eigen::VectorXd::Constant(n_x, -activation_value(act, 0.0));
    return Network({std::move(layer)}, act, n_x + n_u);
}

inline DynamicModel make_wiener_system(const WienerSystemSpec& spec, std::uint64_t seed) {
    spec.validate();
    auto [a, b] = controllable_canonical(spec.eigenvalues);
    RngStream rng(seed, 0, StreamRole::weights);

    DynamicModel model;
    model.F = make_affine_transition(a, b, Activation::probit);
    model.H = make_wiener_observation(spec, rng);
    model.Q = spec.q_scale * Eigen::MatrixXd::Identity(spec.n_x, spec.n_x);
    model.R = spec.r_scale * Eigen::MatrixXd::Identity(spec.n_y, spec.n_y);
    model.init = Gaussian::deterministic(Eigen::VectorXd::Zero(spec.n_x));
    model.n_x = spec.n_x;
    model.n_u = spec.n_u;
    model.n_y = spec.n_y;
    model.validate();
    return model;
}

/// u(t) = sin(freq * t) for t = 1..T, as a 1 x T input matrix.
inline Eigen::MatrixXd sinusoid_input(Eigen::Index horizon, double frequency = 0.2) {
    Eigen::MatrixXd u(1, horizon);
    for (Eigen::Index t = 0; t < horizon; ++t) {
        u(0, t) = std::sin(frequency * static_cast<double>(t + 1));
    }
    return u;
}

}  // namespace nkf
