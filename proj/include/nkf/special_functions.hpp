#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "nkf/errors.hpp"

namespace nkf {

/// Standard normal density.
inline double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

/// Standard normal CDF via erfc; accurate into the far tails.
inline double norm_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

namespace detail {

/// Regularized lower incomplete gamma P(a, x), series branch (x < a+1).
inline double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double term = sum;
    for (int n = 0; n < 500; ++n) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

/// Regularized upper incomplete gamma Q(a, x), continued fraction branch
/// (x >= a+1), modified Lentz.
inline double gamma_q_cont_fraction(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace detail

/// Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a).
inline double gamma_p(double a, double x) {
    if (a <= 0.0) throw dimension_error("gamma_p: a must be positive");
    if (x < 0.0) throw dimension_error("gamma_p: x must be nonnegative");
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return detail::gamma_p_series(a, x);
    return 1.0 - detail::gamma_q_cont_fraction(a, x);
}

/// Chi-squared CDF with `dof` degrees of freedom.
inline double chi2_cdf(int dof, double x) {
    if (dof < 1) throw dimension_error("chi2_cdf: dof must be >= 1");
    if (x <= 0.0) return 0.0;
    return gamma_p(0.5 * dof, 0.5 * x);
}

/// Chi-squared quantile: x such that P(dof/2, x/2) = p, to 1e-9 absolute.
/// Bisection on the monotone CDF; the bracket grows until it traps p.
inline double chi2_quantile(int dof, double p) {
    if (dof < 1) throw dimension_error("chi2_quantile: dof must be >= 1");
    if (!(p > 0.0 && p < 1.0)) throw dimension_error("chi2_quantile: p must be in (0,1)");

    double lo = 0.0;
    double hi = static_cast<double>(dof) + 10.0;
    while (chi2_cdf(dof, hi) < p) {
        hi *= 2.0;
        if (hi > 1e12) throw numerical_error("chi2_quantile", "bracket expansion failed");
    }
    for (int i = 0; i < 200 && (hi - lo) > 1e-12 * std::max(1.0, hi); ++i) {
        double mid = 0.5 * (lo + hi);
        (chi2_cdf(dof, mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

/// Volume of the n-dimensional unit ball, pi^(n/2) / Gamma(n/2 + 1).
inline double ball_volume(int n) {
    if (n < 1) throw dimension_error("ball_volume: n must be >= 1");
    return std::exp(0.5 * n * std::log(std::numbers::pi) - std::lgamma(0.5 * n + 1.0));
}

namespace detail {

/// P(X > dh, Y > dk) for standard bivariate normal with correlation r.
/// Gauss-Legendre quadrature after Drezner & Wesolowsky, with the
/// Genz refinement for |r| close to 1. Absolute accuracy ~1e-15.
inline double bvn_upper(double dh, double dk, double r) {
    static const double x6[] = {-0.9324695142031522, -0.6612093864662647, -0.2386191860831970};
    static const double w6[] = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
    static const double x12[] = {-0.9815606342467191, -0.9041172563704750, -0.7699026741943050,
                                 -0.5873179542866171, -0.3678314989981802, -0.1252334085114692};
    static const double w12[] = {0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                 0.2031674267230659,  0.2334925365383547, 0.2491470458134029};
    static const double x20[] = {-0.9931285991850949, -0.9639719272779138, -0.9122344282513259,
                                 -0.8391169718222188, -0.7463319064601508, -0.6360536807265150,
                                 -0.5108670019508271, -0.3737060887154196, -0.2277858511416451,
                                 -0.07652652113349733};
    static const double w20[] = {0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                                 0.08327674157670475, 0.1019301198172404,  0.1181945319615184,
                                 0.1316886384491766,  0.1420961093183821,  0.1491729864726037,
                                 0.1527533871307259};

    const double twopi = 2.0 * std::numbers::pi;
    const double* xg;
    const double* wg;
    int ng;
    if (std::abs(r) < 0.3) {
        xg = x6; wg = w6; ng = 3;
    } else if (std::abs(r) < 0.75) {
        xg = x12; wg = w12; ng = 6;
    } else {
        xg = x20; wg = w20; ng = 10;
    }

    double h = dh;
    double k = dk;
    double hk = h * k;
    double bvn = 0.0;

    if (std::abs(r) < 0.925) {
        double hs = 0.5 * (h * h + k * k);
        double asr = std::asin(r);
        for (int i = 0; i < ng; ++i) {
            for (int sign = -1; sign <= 1; sign += 2) {
                double sn = std::sin(0.5 * asr * (sign * xg[i] + 1.0));
                bvn += wg[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
            }
        }
        bvn = bvn * asr / (2.0 * twopi) + norm_cdf(-h) * norm_cdf(-k);
    } else {
        if (r < 0.0) {
            k = -k;
            hk = -hk;
        }
        if (std::abs(r) < 1.0) {
            double as = (1.0 - r) * (1.0 + r);
            double a = std::sqrt(as);
            double bs = (h - k) * (h - k);
            double c = (4.0 - hk) / 8.0;
            double d = (12.0 - hk) / 16.0;
            double asr2 = -0.5 * (bs / as + hk);
            if (asr2 > -100.0) {
                bvn = a * std::exp(asr2) *
                      (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
            }
            if (-hk < 100.0) {
                double b = std::sqrt(bs);
                bvn -= std::exp(-0.5 * hk) * std::sqrt(twopi) * norm_cdf(-b / a) * b *
                       (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a *= 0.5;
            for (int i = 0; i < ng; ++i) {
                for (int sign = -1; sign <= 1; sign += 2) {
                    double xs = a * (sign * xg[i] + 1.0);
                    xs = xs * xs;
                    double rs = std::sqrt(1.0 - xs);
                    double asr3 = -0.5 * (bs / xs + hk);
                    if (asr3 > -100.0) {
                        bvn += a * wg[i] * std::exp(asr3) *
                               (std::exp(-hk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs -
                                (1.0 + c * xs * (1.0 + d * xs)));
                    }
                }
            }
            bvn = -bvn / twopi;
        }
        if (r > 0.0) {
            bvn += norm_cdf(-std::max(h, k));
        } else {
            bvn = -bvn;
            if (k > h) bvn += norm_cdf(k) - norm_cdf(h);
        }
    }
    return bvn;
}

}  // namespace detail

/// Bivariate standard normal CDF P(X <= h, Y <= k) with correlation rho.
inline double bvn_cdf(double h, double k, double rho) {
    if (!(rho >= -1.0 && rho <= 1.0)) throw dimension_error("bvn_cdf: |rho| must be <= 1");
    if (rho == 1.0) return norm_cdf(std::min(h, k));
    if (rho == -1.0) return std::max(0.0, norm_cdf(h) + norm_cdf(k) - 1.0);
    return detail::bvn_upper(-h, -k, rho);
}

/// Gauss-Hermite nodes/weights for integrals against exp(-x^2),
/// via the Golub-Welsch tridiagonal eigenproblem.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_hermite(int n) {
    if (n < 1) throw dimension_error("gauss_hermite: n must be >= 1");
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) {
        double beta = std::sqrt(0.5 * i);
        jacobi(i, i - 1) = beta;
        jacobi(i - 1, i) = beta;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    Eigen::VectorXd nodes = eig.eigenvalues();
    Eigen::VectorXd weights(n);
    const double sqrt_pi = std::sqrt(std::numbers::pi);
    for (int i = 0; i < n; ++i) {
        double v0 = eig.eigenvectors()(0, i);
        weights(i) = sqrt_pi * v0 * v0;
    }
    return {nodes, weights};
}

}  // namespace nkf
