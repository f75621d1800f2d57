#pragma once

#include <cmath>
#include <optional>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "nkf/errors.hpp"
#include "nkf/random.hpp"

namespace nkf {

/// Covariance repair tolerance. Eigenvalues in [-clip_tol * scale, 0) are
/// clipped to zero, where scale = max(1, largest eigenvalue); anything more
/// negative is a hard error rather than a silent repair.
struct PsdPolicy {
    double clip_tol = 1e-8;
};

/// Symmetrize and, if needed, eigenvalue-clip a covariance candidate.
/// Throws numerical_error("indefinite") when the matrix is not repairable.
inline Eigen::MatrixXd symmetrize_psd(const Eigen::MatrixXd& m, const PsdPolicy& policy = {}) {
    if (m.rows() != m.cols()) throw dimension_error("symmetrize_psd: matrix must be square");
    if (!m.allFinite()) {
        // Cholesky happily "succeeds" on inf/NaN diagonals, so divergence has
        // to be caught here to keep the no-NaN output contract.
        throw numerical_error("nonfinite", "symmetrize_psd: matrix has non-finite entries");
    }
    Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    if (sym.size() == 0) return sym;

    // Cheap path: a successful Cholesky proves positive (semi)definiteness.
    Eigen::LLT<Eigen::MatrixXd> llt(sym);
    if (llt.info() == Eigen::Success) return sym;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    if (eig.info() != Eigen::Success) {
        throw numerical_error("eigensolver", "symmetrize_psd: eigendecomposition failed");
    }
    Eigen::VectorXd evals = eig.eigenvalues();
    double scale = std::max(1.0, evals.maxCoeff());
    if (evals.minCoeff() < -policy.clip_tol * scale) {
        throw numerical_error("indefinite",
                              "symmetrize_psd: eigenvalue " + std::to_string(evals.minCoeff()) +
                                  " below repair tolerance");
    }
    Eigen::VectorXd clipped = evals.cwiseMax(0.0);
    Eigen::MatrixXd out =
        eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

/// Solve S * X = B for symmetric positive (semi)definite S via Cholesky,
/// escalating a diagonal jitter 0 -> 1e-12 -> 1e-9 -> 1e-6 (times a
/// trace-derived scale) before giving up.
inline Eigen::MatrixXd solve_spd_with_jitter(const Eigen::MatrixXd& s, const Eigen::MatrixXd& b,
                                             const char* context = "solve_spd") {
    if (s.rows() != s.cols() || s.rows() != b.rows()) {
        throw dimension_error(std::string(context) + ": dimension mismatch");
    }
    const double trace_scale =
        std::max(1.0, s.trace() / std::max<Eigen::Index>(1, s.rows()));
    static constexpr double kJitterFactors[] = {0.0, 1e-12, 1e-9, 1e-6};
    for (double factor : kJitterFactors) {
        Eigen::MatrixXd shifted = s;
        if (factor > 0.0) shifted.diagonal().array() += factor * trace_scale;
        Eigen::LLT<Eigen::MatrixXd> llt(shifted);
        if (llt.info() == Eigen::Success) return llt.solve(b);
    }
    throw numerical_error("singular_block",
                          std::string(context) + ": block not positive definite after jitter escalation");
}

/// Dense multivariate normal. Covariance is symmetrized and PSD-checked on
/// construction, so downstream code may assume both properties. A zero
/// covariance (deterministic belief) is legal.
class Gaussian {
public:
    Gaussian() = default;

    Gaussian(Eigen::VectorXd mean, const Eigen::MatrixXd& cov, const PsdPolicy& policy = {})
        : mean_(std::move(mean)), cov_(symmetrize_psd(cov, policy)) {
        if (mean_.size() != cov_.rows()) {
            throw dimension_error("Gaussian: mean/cov dimension mismatch");
        }
        if (!mean_.allFinite()) {
            throw numerical_error("nonfinite", "Gaussian: mean has non-finite entries");
        }
    }

    /// Point mass at `mean` (zero covariance).
    static Gaussian deterministic(Eigen::VectorXd mean) {
        Eigen::Index n = mean.size();
        return Gaussian(std::move(mean), Eigen::MatrixXd::Zero(n, n));
    }

    static Gaussian standard(Eigen::Index n) {
        return Gaussian(Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Identity(n, n));
    }

    Eigen::Index dim() const { return mean_.size(); }
    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& cov() const { return cov_; }

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd cov_;
};

/// Gaussian over a concatenated vector (first k coordinates, rest), giving
/// named access to the marginal and cross blocks.
class BlockGaussian {
public:
    BlockGaussian(Gaussian joint, Eigen::Index split)
        : joint_(std::move(joint)), split_(split) {
        if (split_ <= 0 || split_ >= joint_.dim()) {
            throw dimension_error("BlockGaussian: split must satisfy 0 < k < n");
        }
    }

    const Gaussian& joint() const { return joint_; }
    Eigen::Index split() const { return split_; }
    Eigen::Index first_dim() const { return split_; }
    Eigen::Index second_dim() const { return joint_.dim() - split_; }

    Eigen::VectorXd first_mean() const { return joint_.mean().head(split_); }
    Eigen::VectorXd second_mean() const { return joint_.mean().tail(second_dim()); }
    Eigen::MatrixXd first_cov() const { return joint_.cov().topLeftCorner(split_, split_); }
    Eigen::MatrixXd second_cov() const {
        return joint_.cov().bottomRightCorner(second_dim(), second_dim());
    }
    /// Cov(first, second), an (k x n-k) block.
    Eigen::MatrixXd cross_cov() const {
        return joint_.cov().topRightCorner(split_, second_dim());
    }

    Gaussian first() const { return Gaussian(first_mean(), first_cov()); }
    Gaussian second() const { return Gaussian(second_mean(), second_cov()); }

private:
    Gaussian joint_;
    Eigen::Index split_;
};

/// Condition the first block on an observed value of the second:
/// mean_a + S_ab S_bb^-1 (y - mean_b), cov_aa - S_ab S_bb^-1 S_ba.
/// With S_ab = 0 the marginal is returned unchanged (exactly).
inline Gaussian condition(const BlockGaussian& joint, const Eigen::VectorXd& observed) {
    if (observed.size() != joint.second_dim()) {
        throw dimension_error("condition: observed length must match second block");
    }
    const Eigen::MatrixXd cross = joint.cross_cov();
    if (cross.isZero(0.0)) {
        return joint.first();  // independent blocks: no information transfer
    }
    // Solve S_bb * X = [ (y - mu_b) | S_ba ] in one factorization.
    Eigen::MatrixXd rhs(joint.second_dim(), 1 + joint.first_dim());
    rhs.col(0) = observed - joint.second_mean();
    rhs.rightCols(joint.first_dim()) = cross.transpose();
    Eigen::MatrixXd solved = solve_spd_with_jitter(joint.second_cov(), rhs, "condition");

    Eigen::VectorXd mean = joint.first_mean() + cross * solved.col(0);
    Eigen::MatrixXd cov = joint.first_cov() - cross * solved.rightCols(joint.first_dim());
    return Gaussian(std::move(mean), cov);
}

/// Push a Gaussian through x -> M x + c.
inline Gaussian affine_map(const Gaussian& g, const Eigen::MatrixXd& m, const Eigen::VectorXd& c) {
    if (m.cols() != g.dim() || c.size() != m.rows()) {
        throw dimension_error("affine_map: dimension mismatch");
    }
    return Gaussian(m * g.mean() + c, m * g.cov() * m.transpose());
}

/// Symmetric PSD factor L with L L^T = cov; tolerates singular covariance.
/// Uses Cholesky when positive definite, otherwise the eigenvalue-clipped
/// factor V sqrt(D) (fixed convention for reproducible sigma points).
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& cov, const PsdPolicy& policy = {}) {
    Eigen::MatrixXd sym = 0.5 * (cov + cov.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(sym);
    if (llt.info() == Eigen::Success) return llt.matrixL();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    if (eig.info() != Eigen::Success) {
        throw numerical_error("eigensolver", "psd_sqrt: eigendecomposition failed");
    }
    Eigen::VectorXd evals = eig.eigenvalues();
    double scale = std::max(1.0, evals.maxCoeff());
    if (evals.minCoeff() < -policy.clip_tol * scale) {
        throw numerical_error("indefinite", "psd_sqrt: covariance not PSD within tolerance");
    }
    return eig.eigenvectors() * evals.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

/// Draw `count` samples as columns of an (n x count) matrix. Deterministic
/// for a fixed seed; works for singular covariance (including zero).
inline Eigen::MatrixXd sample(const Gaussian& g, std::uint64_t seed, Eigen::Index count) {
    if (count < 1) throw dimension_error("sample: count must be >= 1");
    Eigen::MatrixXd factor = psd_sqrt(g.cov());
    RngStream rng(seed);
    Eigen::MatrixXd draws = factor * rng.normal_matrix(factor.cols(), count);
    draws.colwise() += g.mean();
    return draws;
}

}  // namespace nkf
