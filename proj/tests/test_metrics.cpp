#include "nkf/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "nkf/random.hpp"
#include "support/oracles.hpp"

using namespace nkf;

namespace {

CriterionSample make_sample(double err, double var) {
    CriterionSample s;
    s.truth = Eigen::VectorXd::Constant(1, err);
    s.mean = Eigen::VectorXd::Zero(1);
    s.cov = Eigen::MatrixXd::Constant(1, 1, var);
    return s;
}

std::vector<CriterionSample> calibrated_samples(Eigen::Index dim, int count, std::uint64_t seed,
                                                double cov_scale = 1.0) {
    // x ~ N(mu, Sigma) with Sigma = cov_scale * I: the hierarchical model.
    RngStream rng(seed);
    std::vector<CriterionSample> samples;
    samples.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        CriterionSample s;
        s.mean = rng.normal_vector(dim);
        s.truth = s.mean + rng.normal_vector(dim);
        s.cov = cov_scale * Eigen::MatrixXd::Identity(dim, dim);
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace

TEST(Rmse, ExactAndPythagorean) {
    std::vector<CriterionSample> perfect(5);
    for (auto& s : perfect) {
        s.truth = Eigen::VectorXd::Constant(2, 1.5);
        s.mean = s.truth;
        s.cov = Eigen::MatrixXd::Identity(2, 2);
    }
    EXPECT_DOUBLE_EQ(rmse(perfect).value, 0.0);

    CriterionSample s345;
    s345.truth = (Eigen::VectorXd(2) << 3.0, 4.0).finished();
    s345.mean = Eigen::VectorXd::Zero(2);
    s345.cov = Eigen::MatrixXd::Identity(2, 2);
    std::vector<CriterionSample> one{s345};
    EXPECT_DOUBLE_EQ(rmse(one).value, 5.0);

    EXPECT_THROW(rmse(std::vector<CriterionSample>{}), dimension_error);
}

TEST(Rmse, UnitNormalErrorsGiveUnitRmse) {
    auto samples = calibrated_samples(1, 100000, 42);
    MetricSummary out = rmse(samples);
    EXPECT_NEAR(out.value, 1.0, 3.0 * out.stderr_value);
    EXPECT_GT(out.stderr_value, 0.0);
}

TEST(CrossEntropy, ClosedFormValues) {
    CriterionSample exact;
    exact.truth = Eigen::VectorXd::Zero(2);
    exact.mean = Eigen::VectorXd::Zero(2);
    exact.cov = Eigen::MatrixXd::Identity(2, 2);
    EXPECT_DOUBLE_EQ(cross_entropy(std::vector<CriterionSample>{exact}).value, 0.0);

    std::vector<CriterionSample> unit{make_sample(1.0, 1.0)};
    EXPECT_DOUBLE_EQ(cross_entropy(unit).value, 0.5);
}

TEST(CrossEntropy, CalibratedExpectationIsHalfDimension) {
    auto samples = calibrated_samples(3, 100000, 43);
    MetricSummary out = cross_entropy(samples);
    EXPECT_NEAR(out.value, 1.5, 4.0 * out.stderr_value);
}

TEST(CrossEntropy, SingularCovarianceIsInfiniteAndFlagged) {
    std::vector<CriterionSample> samples{make_sample(0.3, 1.0), make_sample(0.1, 0.0)};
    MetricSummary out = cross_entropy(samples);
    EXPECT_TRUE(std::isinf(out.value));
    EXPECT_EQ(out.flag, "infinite_contributions=1");
}

TEST(CrossEntropy, MinimizedOnAverageAtTheTrueMean) {
    // Holding Sigma = I, scan a grid of mean offsets.
    auto samples = calibrated_samples(1, 20000, 44);
    double best_offset = -1.0, best_value = std::numeric_limits<double>::infinity();
    for (double offset : {-0.5, -0.2, 0.0, 0.2, 0.5}) {
        auto shifted = samples;
        for (auto& s : shifted) s.mean.array() += offset;
        double value = cross_entropy(shifted).value;
        if (value < best_value) {
            best_value = value;
            best_offset = offset;
        }
    }
    EXPECT_DOUBLE_EQ(best_offset, 0.0);
}

TEST(Coverage, ExactHitAndCalibratedLevel) {
    CriterionSample hit;
    hit.truth = Eigen::VectorXd::Constant(2, 0.7);
    hit.mean = hit.truth;
    hit.cov = Eigen::MatrixXd::Zero(2, 2);
    EXPECT_DOUBLE_EQ(coverage(std::vector<CriterionSample>{hit}, 0.05).value, 1.0);

    auto samples = calibrated_samples(2, 100000, 45);
    MetricSummary out = coverage(samples, 0.05);
    EXPECT_NEAR(out.value, 0.95, 4.0 * out.stderr_value);
}

TEST(Coverage, UnderconfidentHalfIdentityExample) {
    // Sigma = I/2 against unit-normal errors: expected coverage
    // P(chi2_1 <= q95 / 2) ~= 0.834, strictly below the nominal 0.95.
    auto samples = calibrated_samples(1, 100000, 46, 0.5);
    MetricSummary out = coverage(samples, 0.05);
    double expected = oracle::chi2_cdf_quadrature(1, chi2_quantile(1, 0.95) / 2.0);
    EXPECT_NEAR(expected, 0.8342, 5e-4);
    EXPECT_NEAR(out.value, expected, 5.0 * out.stderr_value);
    EXPECT_LT(out.value, 0.95 - 5.0 * out.stderr_value);
}

TEST(Coverage, SingularCovarianceMissUnlessExact) {
    CriterionSample miss = make_sample(0.2, 0.0);
    CriterionSample hit = make_sample(0.0, 0.0);
    hit.truth = hit.mean;
    EXPECT_DOUBLE_EQ(coverage(std::vector<CriterionSample>{miss}, 0.05).value, 0.0);
    EXPECT_DOUBLE_EQ(coverage(std::vector<CriterionSample>{hit}, 0.05).value, 1.0);
}

TEST(Coverage, InvariantUnderJointAffineReparameterization) {
    std::mt19937_64 mt(47);
    auto samples = calibrated_samples(3, 1000, 48);
    Eigen::MatrixXd m = Eigen::MatrixXd::Random(3, 3);
    m += 3.0 * Eigen::MatrixXd::Identity(3, 3);  // invertible
    auto mapped = samples;
    for (auto& s : mapped) {
        s.truth = m * s.truth;
        s.mean = m * s.mean;
        s.cov = m * s.cov * m.transpose();
    }
    for (double alpha : {0.5, 0.2, 0.05}) {
        EXPECT_DOUBLE_EQ(coverage(samples, alpha).value, coverage(mapped, alpha).value);
    }
}

TEST(CoverageVolume, ClosedFormsAndScaling) {
    // n = 1, alpha = .05, Sigma = 1: 2 sqrt(q95) ~= 3.9199.
    std::vector<CriterionSample> unit{make_sample(0.4, 1.0)};
    EXPECT_NEAR(coverage_volume(unit, 0.05).value, 2.0 * std::sqrt(chi2_quantile(1, 0.95)),
                1e-12);
    EXPECT_NEAR(coverage_volume(unit, 0.05).value, 3.9199, 1e-3);

    // Scaling Sigma by c scales the volume by c^(n/2).
    std::mt19937_64 mt(49);
    CriterionSample s;
    s.truth = oracle::random_vector(mt, 3);
    s.mean = oracle::random_vector(mt, 3);
    s.cov = oracle::random_spd(mt, 3);
    CriterionSample scaled = s;
    scaled.cov *= 4.0;
    double base = coverage_volume(std::vector<CriterionSample>{s}, 0.05).value;
    double big = coverage_volume(std::vector<CriterionSample>{scaled}, 0.05).value;
    EXPECT_NEAR(big / base, 8.0, 1e-9);

    // Singular covariance: zero volume.
    std::vector<CriterionSample> flat{make_sample(0.2, 0.0)};
    EXPECT_DOUBLE_EQ(coverage_volume(flat, 0.05).value, 0.0);
}

TEST(CoverageVolume, IndependentOfTruthAndMean) {
    std::mt19937_64 mt(50);
    CriterionSample a;
    a.truth = oracle::random_vector(mt, 2);
    a.mean = oracle::random_vector(mt, 2);
    a.cov = oracle::random_spd(mt, 2);
    CriterionSample b = a;
    b.truth = oracle::random_vector(mt, 2);
    b.mean = oracle::random_vector(mt, 2);
    EXPECT_DOUBLE_EQ(coverage_volume(std::vector<CriterionSample>{a}, 0.05).value,
                     coverage_volume(std::vector<CriterionSample>{b}, 0.05).value);
}

TEST(CoverageCurve, CalibratedTracksIdentityMiscalibratedDoesNot) {
    const std::vector<double> levels{0.5, 0.8, 0.9, 0.95, 0.99};
    const int n = 100000;

    auto calibrated = calibrated_samples(1, n, 51);
    for (auto [level, empirical] : coverage_curve(calibrated, levels)) {
        double band = 4.0 * std::sqrt(level * (1.0 - level) / n);
        EXPECT_NEAR(empirical, level, band) << "level " << level;
    }

    auto inflated = calibrated_samples(1, n, 52, 2.0);
    for (auto [level, empirical] : coverage_curve(inflated, levels)) {
        EXPECT_GT(empirical, level) << "level " << level;  // strictly above identity
    }

    auto deflated = calibrated_samples(1, n, 53, 0.5);
    for (auto [level, empirical] : coverage_curve(deflated, levels)) {
        EXPECT_LT(empirical, level) << "level " << level;  // strictly below identity
    }
}

TEST(MixtureExample, CoverageAgreesButCrossEntropySeparates) {
    // Mixture: p=0.05 heads with eps ~ N(0, 1000), Sigma1 = 0.001,
    // Sigma2 = 1000; tails eps ~ N(0, 1), Sigma1 = 1000, Sigma2 = 1.
    // Both reach ~95% coverage; the matched Sigma2 wins on cross entropy.
    RngStream rng(54);
    const int n = 100000;
    std::vector<CriterionSample> with_sigma1, with_sigma2;
    with_sigma1.reserve(n);
    with_sigma2.reserve(n);
    for (int i = 0; i < n; ++i) {
        bool heads = rng.uniform() < 0.05;
        double eps = rng.normal() * (heads ? std::sqrt(1000.0) : 1.0);
        with_sigma1.push_back(make_sample(eps, heads ? 0.001 : 1000.0));
        with_sigma2.push_back(make_sample(eps, heads ? 1000.0 : 1.0));
    }
    MetricSummary cov1 = coverage(with_sigma1, 0.05);
    MetricSummary cov2 = coverage(with_sigma2, 0.05);
    EXPECT_NEAR(cov1.value, 0.95, 0.01);
    EXPECT_NEAR(cov2.value, 0.95, 0.01);
    double ce1 = cross_entropy(with_sigma1).value;
    double ce2 = cross_entropy(with_sigma2).value;
    EXPECT_LT(ce2, ce1);
    EXPECT_LT(ce2, 10.0);
    EXPECT_GT(ce1, 100.0);
}

TEST(EvaluateRun, SingleReplicationIsFlaggedAndIdenticalRepsHaveZeroError) {
    std::mt19937_64 mt(55);
    auto pair = oracle::random_linear_model_pair(mt, 2, 1, 1, Activation::sine, false);
    Eigen::MatrixXd inputs = Eigen::MatrixXd::Zero(1, 10);
    Eigen::MatrixXd outputs = Eigen::MatrixXd::Random(1, 10);

    RunRecord record;
    record.truth = Eigen::MatrixXd::Random(2, 10);
    record.filter = filter_run(pair.model, inputs, outputs, PropagatorSpec::analytic());
    record.smoother = smoother_run(pair.model, inputs, PropagatorSpec::analytic(), record.filter);

    auto single = evaluate_run(std::vector<RunRecord>{record}, 0.05);
    ASSERT_EQ(single.size(), 12u);  // 4 metrics x 3 tasks
    for (const auto& summary : single) {
        EXPECT_EQ(summary.n_reps, 1);
        EXPECT_DOUBLE_EQ(summary.stderr_value, 0.0);
        EXPECT_EQ(summary.flag, "single_replication");
    }

    auto twice = evaluate_run(std::vector<RunRecord>{record, record}, 0.05);
    for (const auto& summary : twice) {
        EXPECT_EQ(summary.n_reps, 2);
        EXPECT_DOUBLE_EQ(summary.stderr_value, 0.0);  // identical replications
    }
}

TEST(EvaluateRun, ExactLinearFilterIsCalibrated) {
    // Simulate the true linear-Gaussian system and filter with the exact
    // model: coverage should sit at the nominal level.
    std::mt19937_64 mt(56);
    auto pair = oracle::random_linear_model_pair(mt, 2, 1, 1, Activation::sine, false);
    const Eigen::Index horizon = 2000;
    const int reps = 5;
    std::vector<RunRecord> records;
    for (int rep = 0; rep < reps; ++rep) {
        RngStream process(100, rep, StreamRole::process_noise);
        RngStream measure(100, rep, StreamRole::measurement_noise);
        RngStream init(100, rep, StreamRole::initial_state);
        Eigen::MatrixXd sqrt_q = psd_sqrt(pair.linear.Q);
        Eigen::MatrixXd sqrt_r = psd_sqrt(pair.linear.R);
        Eigen::VectorXd x = pair.linear.mu0 + psd_sqrt(pair.linear.S0) * init.normal_vector(2);
        Eigen::MatrixXd inputs(1, horizon), outputs(1, horizon);
        RunRecord record;
        record.truth.resize(2, horizon);
        for (Eigen::Index t = 0; t < horizon; ++t) {
            inputs(0, t) = std::sin(0.1 * static_cast<double>(t));
            x = pair.linear.M * x + pair.linear.B * inputs.col(t) + pair.linear.c +
                sqrt_q * process.normal_vector(2);
            outputs.col(t) = pair.linear.Hx * x + pair.linear.Hu * inputs.col(t) + pair.linear.h +
                             sqrt_r * measure.normal_vector(1);
            record.truth.col(t) = x;
        }
        record.filter = filter_run(pair.model, inputs, outputs, PropagatorSpec::analytic());
        record.smoother =
            smoother_run(pair.model, inputs, PropagatorSpec::analytic(), record.filter);
        records.push_back(std::move(record));
    }
    auto summaries = evaluate_run(records, 0.05);
    for (const auto& summary : summaries) {
        if (summary.metric == "coverage") {
            EXPECT_NEAR(summary.value, 0.95, 0.015) << summary.task;
        }
    }
}

TEST(EvaluateRun, RejectsMixedDimensions) {
    RunRecord a, b;
    a.truth = Eigen::MatrixXd::Zero(2, 1);
    b.truth = Eigen::MatrixXd::Zero(3, 1);
    EXPECT_THROW(evaluate_run(std::vector<RunRecord>{a, b}, 0.05), dimension_error);
}
