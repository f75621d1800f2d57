// Push one Gaussian through a random deep sine network with every backend
// and print the resulting moments next to a large Monte Carlo reference.

#include <cstdio>

#include <nkf/propagation.hpp>
#include <nkf/random.hpp>

using namespace nkf;

namespace {

Network random_sine_network(std::uint64_t seed) {
    RngStream rng(seed);
    std::vector<Layer> layers;
    Eigen::Index prev = 3;
    for (Eigen::Index width : {12, 12, 12, 3}) {
        Layer layer;
        layer.A = 0.5 / std::sqrt(static_cast<double>(prev)) * rng.normal_matrix(width, prev);
        layer.b = 0.3 * rng.normal_vector(width);
        layer.C = 0.3 / std::sqrt(static_cast<double>(prev)) * rng.normal_matrix(width, prev);
        layer.d = Eigen::VectorXd::Zero(width);
        layers.push_back(std::move(layer));
        prev = width;
    }
    return Network(std::move(layers), Activation::sine, 3);
}

}  // namespace

int main() {
    Network net = random_sine_network(42);
    RngStream rng(7);
    Eigen::MatrixXd root = rng.normal_matrix(3, 3) / 3.0;
    Gaussian input(rng.normal_vector(3), root * root.transpose() +
                                             0.05 * Eigen::MatrixXd::Identity(3, 3));

    const std::pair<const char*, PropagatorSpec> backends[] = {
        {"analytic", PropagatorSpec::analytic()},
        {"mean-field", PropagatorSpec::mean_field()},
        {"linearized", PropagatorSpec::linearized()},
        {"unscented95", PropagatorSpec::unscented95()},
        {"unscented02", PropagatorSpec::unscented02()},
        {"mc (1e6)", PropagatorSpec::monte_carlo(1000000, 99)},
    };

    Gaussian reference = propagate(net, input, PropagatorSpec::monte_carlo(4000000, 1));
    std::printf("%-12s %-28s %-14s %s\n", "backend", "mean", "tr(cov)",
                "cov error vs MC (Frobenius, relative)");
    for (const auto& [name, spec] : backends) {
        Gaussian out = propagate(net, input, spec);
        std::printf("%-12s [%+.4f %+.4f %+.4f]   %.6f       %.4f\n", name, out.mean()(0),
                    out.mean()(1), out.mean()(2), out.cov().trace(),
                    (out.cov() - reference.cov()).norm() / reference.cov().norm());
    }
    return 0;
}
