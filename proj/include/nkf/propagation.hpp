#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include <Eigen/Core>

#include "nkf/errors.hpp"
#include "nkf/gaussian.hpp"
#include "nkf/network.hpp"
#include "nkf/special_functions.hpp"

namespace nkf {

// ---------------------------------------------------------------------------
// Single-layer moment maps.
//
// For y = sigma(z) + w with (z, w) jointly Gaussian, the output moments
// reduce to three scalar maps per activation:
//   M(mu; nu)                 = E sigma(z_i)
//   K(mu1, mu2; n11, n22, n12) = Cov(sigma(z_i), sigma(z_j))
//   L(mu1; n11, c12)           = Cov(sigma(z_i), w_j), c12 = Cov(z_i, w_j)
// ---------------------------------------------------------------------------

inline double moment_map_m_sin(double mu, double nu) {
    return std::exp(-0.5 * nu) * std::sin(mu);
}

inline double moment_map_k_sin(double mu1, double mu2, double nu11, double nu22, double nu12) {
    // expm1 keeps the bracketed differences accurate for small nu12.
    const double damp = std::exp(-0.5 * (nu11 + nu22));
    return 0.5 * damp *
           (std::expm1(nu12) * std::cos(mu1 - mu2) - std::expm1(-nu12) * std::cos(mu1 + mu2));
}

inline double moment_map_l_sin(double mu1, double nu11, double c12) {
    return c12 * std::exp(-0.5 * nu11) * std::cos(mu1);
}

inline double moment_map_m_probit(double mu, double nu) {
    return norm_cdf(mu / std::sqrt(1.0 + nu));
}

inline double moment_map_l_probit(double mu1, double nu11, double c12) {
    const double s = std::sqrt(1.0 + nu11);
    return c12 * norm_pdf(mu1 / s) / s;
}

/// Counts corrections where rounding pushed the implied correlation outside
/// [-1, 1]; the CLI surfaces a warning when nonzero.
inline std::atomic<long>& probit_rho_clamp_count() {
    static std::atomic<long> count{0};
    return count;
}

inline double moment_map_k_probit(double mu1, double mu2, double nu11, double nu22, double nu12) {
    const double s1 = std::sqrt(1.0 + nu11);
    const double s2 = std::sqrt(1.0 + nu22);
    const double h1 = mu1 / s1;
    const double h2 = mu2 / s2;
    double rho = nu12 / (s1 * s2);
    if (rho > 1.0 || rho < -1.0) {
        probit_rho_clamp_count().fetch_add(1, std::memory_order_relaxed);
        rho = std::clamp(rho, -1.0, 1.0);
    }
    return bvn_cdf(h1, h2, rho) - norm_cdf(h1) * norm_cdf(h2);
}

/// Gauss-Hermite cross-check route for the probit K map (64x64 nodes),
/// exposed behind the same signature as moment_map_k_probit.
inline double moment_map_k_probit_quadrature(double mu1, double mu2, double nu11, double nu22,
                                             double nu12) {
    static const auto gh = gauss_hermite(64);
    const Eigen::VectorXd& nodes = gh.first;
    const Eigen::VectorXd& weights = gh.second;
    // Cholesky of [[n11, n12], [n12, n22]] with a PSD-tolerant second pivot.
    const double l11 = std::sqrt(std::max(nu11, 0.0));
    const double l21 = l11 > 0.0 ? nu12 / l11 : 0.0;
    const double l22 = std::sqrt(std::max(nu22 - l21 * l21, 0.0));
    double mean1 = 0.0, mean2 = 0.0, cross = 0.0;
    for (int i = 0; i < nodes.size(); ++i) {
        const double z1 = std::numbers::sqrt2 * nodes(i);
        const double x1 = mu1 + l11 * z1;
        const double p1 = norm_cdf(x1);
        double inner = 0.0;
        for (int j = 0; j < nodes.size(); ++j) {
            const double z2 = std::numbers::sqrt2 * nodes(j);
            inner += weights(j) * norm_cdf(mu2 + l21 * z1 + l22 * z2);
        }
        inner /= std::sqrt(std::numbers::pi);
        mean1 += weights(i) * p1;
        mean2 += weights(i) * inner;
        cross += weights(i) * p1 * inner;
    }
    const double sqrt_pi = std::sqrt(std::numbers::pi);
    mean1 /= sqrt_pi;
    mean2 /= sqrt_pi;
    cross /= sqrt_pi;
    return cross - mean1 * mean2;
}

inline double moment_map_m(Activation act, double mu, double nu) {
    return act == Activation::sine ? moment_map_m_sin(mu, nu) : moment_map_m_probit(mu, nu);
}

inline double moment_map_k(Activation act, double mu1, double mu2, double nu11, double nu22,
                           double nu12) {
    if (nu12 == 0.0) return 0.0;  // independent preactivations, both activations
    return act == Activation::sine ? moment_map_k_sin(mu1, mu2, nu11, nu22, nu12)
                                   : moment_map_k_probit(mu1, mu2, nu11, nu22, nu12);
}

inline double moment_map_l(Activation act, double mu1, double nu11, double c12) {
    if (c12 == 0.0) return 0.0;
    return act == Activation::sine ? moment_map_l_sin(mu1, nu11, c12)
                                   : moment_map_l_probit(mu1, nu11, c12);
}

// ---------------------------------------------------------------------------
// Propagator configuration
// ---------------------------------------------------------------------------

enum class PropagationMethod {
    analytic,
    mean_field,
    linearized,
    unscented95,
    unscented02,
    monte_carlo,
};

inline const char* to_string(PropagationMethod m) {
    switch (m) {
        case PropagationMethod::analytic: return "analytic";
        case PropagationMethod::mean_field: return "mean-field";
        case PropagationMethod::linearized: return "linearized";
        case PropagationMethod::unscented95: return "unscented95";
        case PropagationMethod::unscented02: return "unscented02";
        case PropagationMethod::monte_carlo: return "mc";
    }
    return "?";
}

struct UnscentedConfig {
    double kappa = 0.0;
    double alpha = 1e-3;  // only used by the '02 scaled variant
    double beta = 2.0;    // only used by the '02 scaled variant
};

struct PropagatorSpec {
    PropagationMethod method = PropagationMethod::analytic;
    UnscentedConfig unscented{};
    Eigen::Index mc_samples = 100000;
    std::uint64_t seed = 0;

    static PropagatorSpec analytic() { return {PropagationMethod::analytic}; }
    static PropagatorSpec mean_field() { return {PropagationMethod::mean_field}; }
    static PropagatorSpec linearized() { return {PropagationMethod::linearized}; }
    static PropagatorSpec unscented95(double kappa = 0.0) {
        PropagatorSpec s{PropagationMethod::unscented95};
        s.unscented.kappa = kappa;
        return s;
    }
    static PropagatorSpec unscented02(double alpha = 1e-3, double beta = 2.0, double kappa = 0.0) {
        PropagatorSpec s{PropagationMethod::unscented02};
        s.unscented = {kappa, alpha, beta};
        return s;
    }
    static PropagatorSpec monte_carlo(Eigen::Index samples, std::uint64_t seed) {
        PropagatorSpec s{PropagationMethod::monte_carlo};
        s.mc_samples = samples;
        s.seed = seed;
        return s;
    }
};

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

/// Exact first two moments of a single layer under Gaussian input
/// (symmetrized and PSD-clipped afterwards).
inline Gaussian propagate_layer_analytic(const Gaussian& g, const Layer& layer, Activation act) {
    if (g.dim() != layer.in_dim()) {
        throw dimension_error("propagate_layer_analytic: dimension mismatch");
    }
    const Eigen::Index m = layer.out_dim();
    const Eigen::VectorXd mu_tilde = layer.A * g.mean() + layer.b;
    const Eigen::MatrixXd a_sigma = layer.A * g.cov();
    const Eigen::MatrixXd nu = a_sigma * layer.A.transpose();    // Cov(z)
    const Eigen::MatrixXd kappa = a_sigma * layer.C.transpose(); // Cov(z, Cx)
    const Eigen::MatrixXd tau = layer.C * g.cov() * layer.C.transpose();

    Eigen::VectorXd mean = layer.C * g.mean() + layer.d;
    for (Eigen::Index i = 0; i < m; ++i) mean(i) += moment_map_m(act, mu_tilde(i), nu(i, i));

    Eigen::MatrixXd cov(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            double v = moment_map_k(act, mu_tilde(i), mu_tilde(j), nu(i, i), nu(j, j), nu(i, j)) +
                       moment_map_l(act, mu_tilde(i), nu(i, i), kappa(i, j)) +
                       moment_map_l(act, mu_tilde(j), nu(j, j), kappa(j, i)) + tau(i, j);
            cov(i, j) = v;
            cov(j, i) = v;
        }
    }
    return Gaussian(std::move(mean), cov);
}

namespace detail {

inline Gaussian propagate_layerwise(const Network& net, const Gaussian& g, bool mean_field) {
    Gaussian belief = g;
    for (const Layer& layer : net.layers()) {
        belief = propagate_layer_analytic(belief, layer, net.activation());
        if (mean_field) {
            Eigen::MatrixXd diag = belief.cov().diagonal().asDiagonal();
            belief = Gaussian(belief.mean(), diag);
        }
    }
    return belief;
}

inline Gaussian propagate_linearized(const Network& net, const Gaussian& g) {
    Eigen::MatrixXd jac = network_jacobian(g.mean(), net);
    return Gaussian(network_eval(g.mean(), net), jac * g.cov() * jac.transpose());
}

inline Gaussian propagate_unscented(const Network& net, const Gaussian& g,
                                    const PropagatorSpec& spec) {
    const Eigen::Index n = g.dim();
    const bool scaled = spec.method == PropagationMethod::unscented02;
    const double kappa = spec.unscented.kappa;
    double lambda, w0_mean, w0_cov, wi;
    if (scaled) {
        const double alpha = spec.unscented.alpha;
        if (!(alpha > 0.0 && alpha <= 1.0)) {
            throw dimension_error("unscented02: alpha must be in (0, 1]");
        }
        lambda = alpha * alpha * (static_cast<double>(n) + kappa) - static_cast<double>(n);
        w0_mean = lambda / (static_cast<double>(n) + lambda);
        w0_cov = w0_mean + (1.0 - alpha * alpha + spec.unscented.beta);
        wi = 0.5 / (static_cast<double>(n) + lambda);
    } else {
        lambda = kappa;
        if (!(static_cast<double>(n) + lambda > 0.0)) {
            throw numerical_error("unscented_scaling", "unscented95: n + kappa must be positive");
        }
        w0_mean = lambda / (static_cast<double>(n) + lambda);
        w0_cov = w0_mean;
        wi = 0.5 / (static_cast<double>(n) + lambda);
    }
    if (!(static_cast<double>(n) + lambda > 0.0)) {
        throw numerical_error("unscented_scaling", "unscented: n + lambda must be positive");
    }

    const double spread = std::sqrt(static_cast<double>(n) + lambda);
    Eigen::MatrixXd factor = psd_sqrt(g.cov());

    const Eigen::Index count = 2 * n + 1;
    Eigen::MatrixXd points(n, count);
    points.col(0) = g.mean();
    for (Eigen::Index i = 0; i < n; ++i) {
        points.col(1 + i) = g.mean() + spread * factor.col(i);
        points.col(1 + n + i) = g.mean() - spread * factor.col(i);
    }

    Eigen::MatrixXd outputs = network_eval_batch(points, net);
    Eigen::VectorXd weights_cov = Eigen::VectorXd::Constant(count, wi);
    weights_cov(0) = w0_cov;

    // Deviation form of the weighted mean: with weights summing to one,
    // mean = y0 + sum_i w_i (y_i - y0). The scaled '02 variant has |w0|
    // up to 1/alpha^2, so cancelling the common term first avoids losing
    // eight digits to the w0 * y0 product.
    Eigen::MatrixXd deviations = outputs.colwise() - outputs.col(0);
    Eigen::VectorXd mean = outputs.col(0) + wi * deviations.rightCols(count - 1).rowwise().sum();
    Eigen::MatrixXd centered = outputs.colwise() - mean;
    Eigen::MatrixXd cov = centered * weights_cov.asDiagonal() * centered.transpose();
    return Gaussian(std::move(mean), cov);
}

inline Gaussian propagate_monte_carlo(const Network& net, const Gaussian& g,
                                      const PropagatorSpec& spec) {
    if (spec.mc_samples < 2) throw dimension_error("monte_carlo: needs at least 2 samples");
    Eigen::MatrixXd draws = sample(g, spec.seed, spec.mc_samples);
    Eigen::MatrixXd outputs = network_eval_batch(draws, net);
    Eigen::VectorXd mean = outputs.rowwise().mean();
    Eigen::MatrixXd centered = outputs.colwise() - mean;
    Eigen::MatrixXd cov =
        centered * centered.transpose() / static_cast<double>(spec.mc_samples - 1);
    return Gaussian(std::move(mean), cov);
}

}  // namespace detail

/// The "N(.)" operator: Gaussian approximation of f(X) for X ~ g, under the
/// backend selected by `spec`.
inline Gaussian propagate(const Network& net, const Gaussian& g, const PropagatorSpec& spec) {
    if (g.dim() != net.input_dim()) throw dimension_error("propagate: dimension mismatch");
    switch (spec.method) {
        case PropagationMethod::analytic:
            return detail::propagate_layerwise(net, g, /*mean_field=*/false);
        case PropagationMethod::mean_field:
            return detail::propagate_layerwise(net, g, /*mean_field=*/true);
        case PropagationMethod::linearized:
            return detail::propagate_linearized(net, g);
        case PropagationMethod::unscented95:
        case PropagationMethod::unscented02:
            return detail::propagate_unscented(net, g, spec);
        case PropagationMethod::monte_carlo:
            return detail::propagate_monte_carlo(net, g, spec);
    }
    throw config_error("propagate: unknown method");
}

}  // namespace nkf
