#include "nkf/network.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support/oracles.hpp"

using namespace nkf;

namespace {

Eigen::VectorXd vec1(double a) { return Eigen::VectorXd::Constant(1, a); }

Layer make_layer(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Eigen::MatrixXd& c,
                 const Eigen::VectorXd& d) {
    return Layer{a, b, c, d};
}

}  // namespace

TEST(LayerEval, IdentityConstruction) {
    // A = 0, C = I is the identity for sine (sin 0 = 0).
    Layer layer = make_layer(Eigen::MatrixXd::Zero(3, 3), Eigen::VectorXd::Zero(3),
                             Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3));
    Eigen::VectorXd x(3);
    x << 1.0, -2.0, 0.5;
    EXPECT_TRUE(layer_eval(x, layer, Activation::sine) == x);
}

TEST(LayerEval, UnitSineAndProbitHalf) {
    Layer sine_layer = make_layer(Eigen::MatrixXd::Constant(1, 1, std::numbers::pi / 2.0),
                                  Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Zero(1, 1),
                                  Eigen::VectorXd::Zero(1));
    EXPECT_NEAR(layer_eval(vec1(1.0), sine_layer, Activation::sine)(0), 1.0, 1e-15);

    Layer probit_layer = make_layer(Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2),
                                    Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2));
    Eigen::VectorXd out = layer_eval(Eigen::VectorXd::Random(2), probit_layer, Activation::probit);
    EXPECT_DOUBLE_EQ(out(0), 0.5);
    EXPECT_DOUBLE_EQ(out(1), 0.5);
}

TEST(IdentityNetwork, ExactForBothActivations) {
    for (Activation act : {Activation::sine, Activation::probit}) {
        Network id = identity_network(3, 5, act);
        EXPECT_EQ(id.depth(), 5);
        Eigen::VectorXd x(3);
        x << 1.0, 2.0, 3.0;
        EXPECT_TRUE(network_eval(x, id) == x) << to_string(act);
    }
    // Corollary construction: A = 0, C = I in every layer.
    Network id = identity_network(3, 5, Activation::sine);
    for (const Layer& layer : id.layers()) {
        EXPECT_TRUE(layer.A.isZero(0.0));
        EXPECT_TRUE(layer.C.isApprox(Eigen::MatrixXd::Identity(3, 3)));
    }
}

TEST(NetworkEval, OneLayerReducesToLayerEval) {
    std::mt19937_64 rng(3);
    Network net = oracle::random_network(rng, 4, {2}, Activation::sine);
    Eigen::VectorXd x = oracle::random_vector(rng, 4);
    EXPECT_TRUE(network_eval(x, net) == layer_eval(x, net.layers()[0], Activation::sine));
}

TEST(NetworkEval, BatchMatchesScalarPath) {
    std::mt19937_64 rng(5);
    for (Activation act : {Activation::sine, Activation::probit}) {
        Network net = oracle::random_network(rng, 3, {6, 2}, act);
        Eigen::MatrixXd xs = Eigen::MatrixXd::Random(3, 17);
        Eigen::MatrixXd batch = network_eval_batch(xs, net);
        for (Eigen::Index i = 0; i < xs.cols(); ++i) {
            EXPECT_TRUE(batch.col(i).isApprox(network_eval(xs.col(i), net), 1e-14));
        }
    }
}

TEST(Couple, DuplicatedIdentityAndExactEvaluation) {
    Network id = identity_network(2, 3, Activation::sine);
    Network dup = couple(id, id);
    Eigen::VectorXd x(2);
    x << 0.3, -0.7;
    Eigen::VectorXd out = network_eval(x, dup);
    ASSERT_EQ(out.size(), 4);
    EXPECT_TRUE(out.head(2) == x);
    EXPECT_TRUE(out.tail(2) == x);

    std::mt19937_64 rng(11);
    for (Activation act : {Activation::sine, Activation::probit}) {
        Network f1 = oracle::random_network(rng, 3, {4, 2}, act);
        Network f2 = oracle::random_network(rng, 3, {5, 3}, act);
        Network both = couple(f1, f2);
        EXPECT_EQ(both.output_dim(), f1.output_dim() + f2.output_dim());
        for (int trial = 0; trial < 100; ++trial) {
            Eigen::VectorXd x = oracle::random_vector(rng, 3);
            Eigen::VectorXd expected(both.output_dim());
            expected << network_eval(x, f1), network_eval(x, f2);
            // The block construction reproduces the direct evaluation exactly.
            EXPECT_EQ((network_eval(x, both) - expected).lpNorm<Eigen::Infinity>(), 0.0);
        }
    }
}

TEST(Couple, RejectsMismatchedNetworks) {
    std::mt19937_64 rng(13);
    Network f1 = oracle::random_network(rng, 3, {4, 2}, Activation::sine);
    Network depth_mismatch = oracle::random_network(rng, 3, {4}, Activation::sine);
    Network input_mismatch = oracle::random_network(rng, 2, {4, 2}, Activation::sine);
    Network act_mismatch = oracle::random_network(rng, 3, {4, 2}, Activation::probit);
    EXPECT_THROW(couple(f1, depth_mismatch), dimension_error);
    EXPECT_THROW(couple(f1, input_mismatch), dimension_error);
    EXPECT_THROW(couple(f1, act_mismatch), dimension_error);
}

TEST(AugmentIdentity, ProducesInputOutputPair) {
    std::mt19937_64 rng(17);
    Network f = oracle::random_network(rng, 3, {4, 2}, Activation::probit);
    Network aug = augment_identity(f);
    EXPECT_EQ(aug.output_dim(), 3 + 2);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd x = oracle::random_vector(rng, 3);
        Eigen::VectorXd out = network_eval(x, aug);
        // The probit identity cancels sigma(0) through d, so its head is x up
        // to one rounding of the +1/2 -1/2 pair per layer; the f block is the
        // same sequence of operations as the direct evaluation.
        EXPECT_LT((out.head(3) - x).lpNorm<Eigen::Infinity>(), 1e-12);
        EXPECT_EQ((out.tail(2) - network_eval(x, f)).lpNorm<Eigen::Infinity>(), 0.0);
    }

    Network id = identity_network(2, 2, Activation::sine);
    Network aug_id = augment_identity(id);
    Eigen::VectorXd x(2);
    x << 1.5, -0.3;
    Eigen::VectorXd out = network_eval(x, aug_id);
    EXPECT_TRUE(out.head(2) == x);
    EXPECT_TRUE(out.tail(2) == x);
}

TEST(PartiallyApply, EmptyTailReturnsSameNetwork) {
    std::mt19937_64 rng(19);
    Network f = oracle::random_network(rng, 3, {4, 2}, Activation::sine);
    Network same = partially_apply(f, Eigen::VectorXd());
    Eigen::VectorXd x = oracle::random_vector(rng, 3);
    EXPECT_TRUE(network_eval(x, same) == network_eval(x, f));
}

TEST(PartiallyApply, IdentityKeepsFixedCoordinateInOutput) {
    Network id = identity_network(3, 2, Activation::sine);
    Network fixed = partially_apply(id, vec1(7.0));
    EXPECT_EQ(fixed.input_dim(), 2);
    EXPECT_EQ(fixed.output_dim(), 3);
    Eigen::VectorXd x(2);
    x << 1.0, 2.0;
    Eigen::VectorXd out = network_eval(x, fixed);
    EXPECT_DOUBLE_EQ(out(0), 1.0);
    EXPECT_DOUBLE_EQ(out(1), 2.0);
    EXPECT_DOUBLE_EQ(out(2), 7.0);
}

TEST(PartiallyApply, MatchesConcatenatedEvaluation) {
    std::mt19937_64 rng(23);
    for (Activation act : {Activation::sine, Activation::probit}) {
        Network f = oracle::random_network(rng, 5, {6, 3}, act);
        for (int trial = 0; trial < 100; ++trial) {
            Eigen::VectorXd tail = oracle::random_vector(rng, 2);
            Eigen::VectorXd head = oracle::random_vector(rng, 3);
            Network fixed = partially_apply(f, tail);
            Eigen::VectorXd full(5);
            full << head, tail;
            // Absorbing the tail reassociates the bias sums, so the match is
            // to rounding rather than bitwise.
            Eigen::VectorXd direct = network_eval(full, f);
            double scale = std::max(1.0, direct.lpNorm<Eigen::Infinity>());
            EXPECT_LT((network_eval(head, fixed) - direct).lpNorm<Eigen::Infinity>() / scale,
                      1e-12);
        }
    }
}

TEST(PartiallyApply, RejectsOverlongTail) {
    std::mt19937_64 rng(29);
    Network f = oracle::random_network(rng, 3, {2}, Activation::sine);
    EXPECT_THROW(partially_apply(f, Eigen::VectorXd::Zero(3)), dimension_error);
}

TEST(Jacobian, IdentityAndSingleLayerSpecialCases) {
    Network id = identity_network(4, 3, Activation::probit);
    Eigen::VectorXd x = Eigen::VectorXd::Random(4);
    EXPECT_TRUE(network_jacobian(x, id).isApprox(Eigen::MatrixXd::Identity(4, 4), 1e-14));

    // Single sine layer with C = 0 at a point where A x + b = 0: J = A.
    Eigen::MatrixXd a(2, 2);
    a << 1.0, 2.0, -0.5, 1.5;
    Layer layer{a, Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 2),
                Eigen::VectorXd::Zero(2)};
    Network net({layer}, Activation::sine, 2);
    EXPECT_TRUE(network_jacobian(Eigen::VectorXd::Zero(2), net).isApprox(a, 1e-14));
}

TEST(Jacobian, MatchesCentralDifferences) {
    std::mt19937_64 rng(31);
    for (Activation act : {Activation::sine, Activation::probit}) {
        for (int trial = 0; trial < 5; ++trial) {
            Network net = oracle::random_network(rng, 3, {5, 4}, act);
            Eigen::VectorXd x = oracle::random_vector(rng, 3);
            Eigen::MatrixXd jac = network_jacobian(x, net);
            Eigen::MatrixXd fd = oracle::jacobian_central_difference(net, x, 1e-6);
            double scale = std::max(1.0, jac.cwiseAbs().maxCoeff());
            EXPECT_LT((jac - fd).cwiseAbs().maxCoeff() / scale, 1e-6);
        }
    }
}

TEST(Jacobian, CoupleStacksJacobians) {
    std::mt19937_64 rng(37);
    Network f1 = oracle::random_network(rng, 3, {4, 2}, Activation::sine);
    Network f2 = oracle::random_network(rng, 3, {5, 3}, Activation::sine);
    Network both = couple(f1, f2);
    Eigen::VectorXd x = oracle::random_vector(rng, 3);
    Eigen::MatrixXd jac = network_jacobian(x, both);
    EXPECT_TRUE(jac.topRows(2).isApprox(network_jacobian(x, f1), 1e-12));
    EXPECT_TRUE(jac.bottomRows(3).isApprox(network_jacobian(x, f2), 1e-12));
}

TEST(Vjp, LastLayerBiasGradientIsCotangent) {
    std::mt19937_64 rng(41);
    Network net = oracle::random_network(rng, 3, {4, 2}, Activation::sine);
    Eigen::VectorXd x = oracle::random_vector(rng, 3);
    Eigen::VectorXd cot = oracle::random_vector(rng, 2);
    VjpResult result = network_vjp(x, net, cot);
    EXPECT_TRUE(result.layers.back().d == cot);
}

TEST(Vjp, InputGradientMatchesJacobianTranspose) {
    std::mt19937_64 rng(43);
    for (Activation act : {Activation::sine, Activation::probit}) {
        Network net = oracle::random_network(rng, 4, {6, 3}, act);
        Eigen::VectorXd x = oracle::random_vector(rng, 4);
        Eigen::VectorXd cot = oracle::random_vector(rng, 3);
        VjpResult result = network_vjp(x, net, cot);
        Eigen::VectorXd expected = network_jacobian(x, net).transpose() * cot;
        EXPECT_LT((result.input - expected).lpNorm<Eigen::Infinity>(), 1e-10);
    }
}

TEST(Vjp, ParameterGradientsMatchCentralDifferences) {
    std::mt19937_64 rng(47);
    Network net = oracle::random_network(rng, 3, {4, 2}, Activation::sine);
    Eigen::VectorXd x = oracle::random_vector(rng, 3);
    Eigen::VectorXd cot = oracle::random_vector(rng, 2);
    VjpResult result = network_vjp(x, net, cot);

    const double step = 1e-6;
    auto loss = [&](const Network& candidate) { return cot.dot(network_eval(x, candidate)); };
    for (int k = 0; k < net.depth(); ++k) {
        auto perturb = [&](auto&& setter) {
            std::vector<Layer> layers = net.layers();
            setter(layers[static_cast<std::size_t>(k)]);
            return Network(layers, net.activation(), net.input_dim());
        };
        const Layer& layer = net.layers()[static_cast<std::size_t>(k)];
        const LayerGrads& grads = result.layers[static_cast<std::size_t>(k)];
        for (Eigen::Index i = 0; i < layer.A.rows(); ++i) {
            for (Eigen::Index j = 0; j < layer.A.cols(); ++j) {
                double up = loss(perturb([&](Layer& l) { l.A(i, j) += step; }));
                double down = loss(perturb([&](Layer& l) { l.A(i, j) -= step; }));
                EXPECT_NEAR(grads.A(i, j), (up - down) / (2.0 * step), 1e-5 * std::max(1.0, std::abs(grads.A(i, j))));
                up = loss(perturb([&](Layer& l) { l.C(i, j) += step; }));
                down = loss(perturb([&](Layer& l) { l.C(i, j) -= step; }));
                EXPECT_NEAR(grads.C(i, j), (up - down) / (2.0 * step), 1e-5 * std::max(1.0, std::abs(grads.C(i, j))));
            }
            double up = loss(perturb([&](Layer& l) { l.b(i) += step; }));
            double down = loss(perturb([&](Layer& l) { l.b(i) -= step; }));
            EXPECT_NEAR(grads.b(i), (up - down) / (2.0 * step), 1e-5);
            up = loss(perturb([&](Layer& l) { l.d(i) += step; }));
            down = loss(perturb([&](Layer& l) { l.d(i) -= step; }));
            EXPECT_NEAR(grads.d(i), (up - down) / (2.0 * step), 1e-5);
        }
    }
}

TEST(Network, RejectsBrokenLayerChain) {
    std::mt19937_64 rng(53);
    Network f = oracle::random_network(rng, 3, {4, 2}, Activation::sine);
    std::vector<Layer> layers = f.layers();
    std::swap(layers[0], layers[1]);
    EXPECT_THROW(Network(layers, Activation::sine, 3), dimension_error);
}
