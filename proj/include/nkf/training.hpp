#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "nkf/errors.hpp"
#include "nkf/network.hpp"
#include "nkf/random.hpp"

namespace nkf {

/// Transition pairs for surrogate fitting: column t of `inputs` is the
/// regression input (x_{t-1}, u_t), column t of `targets` is x_t.
struct TransitionDataset {
    Eigen::MatrixXd inputs;
    Eigen::MatrixXd targets;

    Eigen::Index size() const { return inputs.cols(); }

    void validate() const {
        if (inputs.cols() != targets.cols()) {
            throw dimension_error("TransitionDataset: input/target counts differ");
        }
    }
};

/// Build the dataset from a simulated trajectory (states n_x x (T+1),
/// inputs n_u x T — possibly zero-row for autonomous systems).
inline TransitionDataset make_transition_dataset(const Eigen::MatrixXd& states,
                                                 const Eigen::MatrixXd& inputs) {
    const Eigen::Index horizon = states.cols() - 1;
    if (inputs.cols() != horizon) {
        throw dimension_error("make_transition_dataset: input horizon mismatch");
    }
    TransitionDataset data;
    data.inputs.resize(states.rows() + inputs.rows(), horizon);
    data.targets.resize(states.rows(), horizon);
    for (Eigen::Index t = 0; t < horizon; ++t) {
        data.inputs.col(t).head(states.rows()) = states.col(t);
        if (inputs.rows() > 0) data.inputs.col(t).tail(inputs.rows()) = inputs.col(t);
        data.targets.col(t) = states.col(t + 1);
    }
    return data;
}

struct LearningRateSchedule {
    double start = 1e-3;
    double end = 1e-4;
    std::string shape = "exponential";  // or "linear"

    double at(int epoch, int total_epochs) const {
        if (total_epochs <= 1 || start == end) return start;
        double frac = static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
        if (shape == "linear") return start + frac * (end - start);
        if (shape == "exponential") return start * std::pow(end / start, frac);
        throw config_error("LearningRateSchedule: unknown shape '" + shape + "'");
    }

    void validate() const {
        if (!(start >= 0.0) || !(end >= 0.0) || end > start) {
            throw config_error("LearningRateSchedule: need 0 <= end <= start");
        }
        if (shape != "exponential" && shape != "linear") {
            throw config_error("LearningRateSchedule: unknown shape '" + shape + "'");
        }
    }
};

struct TrainingConfig {
    int epochs = 2000;
    Eigen::Index minibatch = 512;
    LearningRateSchedule learning_rate{};
    double weight_decay = 0.0;  // decoupled (AdamW-style); 0 gives plain Adam
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;
    int depth = 2;
    Eigen::Index width = 32;
    Activation activation = Activation::sine;
    double init_weight_scale = 1.0;
    double q_jitter = 1e-9;
    bool affine_readout = true;  // keep the last layer's activation path at zero

    void validate() const {
        if (epochs < 1 || minibatch < 1 || depth < 1 || width < 1) {
            throw config_error("TrainingConfig: positive counts required");
        }
        learning_rate.validate();
        if (weight_decay < 0.0) throw config_error("TrainingConfig: negative weight decay");
    }
};

/// Residual covariance of the dataset under F, and the profile objective
/// log det(Q + jitter I). The determinant is minimized exactly where the
/// log determinant is, with far better conditioning.
inline std::pair<double, Eigen::MatrixXd> profile_loss(const Network& f,
                                                       const TransitionDataset& data,
                                                       double q_jitter = 1e-9) {
    data.validate();
    const Eigen::Index n = data.targets.rows();
    if (data.size() < n + 1) {
        throw dimension_error("profile_loss: need at least n_x + 1 transition pairs");
    }
    Eigen::MatrixXd residuals = data.targets - network_eval_batch(data.inputs, f);
    Eigen::MatrixXd q_hat =
        residuals * residuals.transpose() / static_cast<double>(data.size());
    Eigen::MatrixXd shifted = q_hat;
    shifted.diagonal().array() += q_jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() != Eigen::Success) {
        throw numerical_error("indefinite", "profile_loss: residual covariance not PSD");
    }
    double log_det = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    return {log_det, q_hat};
}

namespace detail {

struct AdamState {
    std::vector<LayerGrads> first_moment;
    std::vector<LayerGrads> second_moment;
    long step = 0;

    static AdamState zeros_like(const Network& net) {
        AdamState state;
        for (const Layer& layer : net.layers()) {
            LayerGrads z;
            z.A = Eigen::MatrixXd::Zero(layer.A.rows(), layer.A.cols());
            z.b = Eigen::VectorXd::Zero(layer.b.size());
            z.C = Eigen::MatrixXd::Zero(layer.C.rows(), layer.C.cols());
            z.d = Eigen::VectorXd::Zero(layer.d.size());
            state.first_moment.push_back(z);
            state.second_moment.push_back(std::move(z));
        }
        return state;
    }
};

/// Batched reverse mode for the profile objective: parameter gradients of
/// <Cot, F(X)> summed over the batch columns.
inline std::vector<LayerGrads> batched_parameter_grads(const Network& net,
                                                       const Eigen::MatrixXd& batch_inputs,
                                                       const Eigen::MatrixXd& cotangents) {
    const int depth = net.depth();
    const Activation act = net.activation();
    std::vector<Eigen::MatrixXd> layer_inputs(static_cast<std::size_t>(depth));
    std::vector<Eigen::MatrixXd> preacts(static_cast<std::size_t>(depth));
    Eigen::MatrixXd h = batch_inputs;
    for (int k = 0; k < depth; ++k) {
        const Layer& layer = net.layers()[static_cast<std::size_t>(k)];
        layer_inputs[static_cast<std::size_t>(k)] = h;
        Eigen::MatrixXd z = layer.A * h;
        z.colwise() += layer.b;
        preacts[static_cast<std::size_t>(k)] = z;
        if (act == Activation::sine) {
            z = z.array().sin().matrix();
        } else {
            z = z.unaryExpr([](double v) { return norm_cdf(v); });
        }
        z.noalias() += layer.C * h;
        z.colwise() += layer.d;
        h = std::move(z);
    }

    std::vector<LayerGrads> grads(static_cast<std::size_t>(depth));
    Eigen::MatrixXd cot = cotangents;
    for (int k = depth - 1; k >= 0; --k) {
        const Layer& layer = net.layers()[static_cast<std::size_t>(k)];
        const Eigen::MatrixXd& z = preacts[static_cast<std::size_t>(k)];
        const Eigen::MatrixXd& hin = layer_inputs[static_cast<std::size_t>(k)];
        Eigen::MatrixXd gate;
        if (act == Activation::sine) {
            gate = z.array().cos().matrix();
        } else {
            gate = z.unaryExpr([](double v) { return norm_pdf(v); });
        }
        Eigen::MatrixXd gated = cot.cwiseProduct(gate);
        LayerGrads& g = grads[static_cast<std::size_t>(k)];
        g.A = gated * hin.transpose();
        g.b = gated.rowwise().sum();
        g.C = cot * hin.transpose();
        g.d = cot.rowwise().sum();
        cot = layer.A.transpose() * gated + layer.C.transpose() * cot;
    }
    return grads;
}

inline void adam_update(Network& net, const std::vector<LayerGrads>& grads, AdamState& state,
                        const TrainingConfig& config, double learning_rate) {
    state.step += 1;
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

    std::vector<Layer> layers = net.layers();
    auto update = [&](Eigen::MatrixXd& param, const Eigen::MatrixXd& grad, Eigen::MatrixXd& m,
                      Eigen::MatrixXd& v) {
        m = b1 * m + (1.0 - b1) * grad;
        v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
        Eigen::MatrixXd step = (m / bias1).array() /
                               ((v / bias2).array().sqrt() + config.adam_epsilon);
        if (config.weight_decay > 0.0) step += config.weight_decay * param;
        param -= learning_rate * step;
    };
    auto update_vec = [&](Eigen::VectorXd& param, const Eigen::VectorXd& grad, Eigen::VectorXd& m,
                          Eigen::VectorXd& v) {
        m = b1 * m + (1.0 - b1) * grad;
        v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
        Eigen::VectorXd step = (m / bias1).array() /
                               ((v / bias2).array().sqrt() + config.adam_epsilon);
        if (config.weight_decay > 0.0) step += config.weight_decay * param;
        param -= learning_rate * step;
    };
    for (std::size_t k = 0; k < layers.size(); ++k) {
        update(layers[k].A, grads[k].A, state.first_moment[k].A, state.second_moment[k].A);
        update_vec(layers[k].b, grads[k].b, state.first_moment[k].b, state.second_moment[k].b);
        update(layers[k].C, grads[k].C, state.first_moment[k].C, state.second_moment[k].C);
        update_vec(layers[k].d, grads[k].d, state.first_moment[k].d, state.second_moment[k].d);
    }
    net = Network(std::move(layers), net.activation(), net.input_dim());
}

}  // namespace detail

/// Gradient of the profile objective log det Q(F) over the given pairs,
/// via the batched VJP with cotangents -(2/B) Q^-1 E.
inline std::vector<LayerGrads> profile_loss_gradient(const Network& f,
                                                     const Eigen::MatrixXd& inputs,
                                                     const Eigen::MatrixXd& targets,
                                                     double q_jitter = 1e-9) {
    const double batch = static_cast<double>(inputs.cols());
    Eigen::MatrixXd residuals = targets - network_eval_batch(inputs, f);
    Eigen::MatrixXd q_hat = residuals * residuals.transpose() / batch;
    q_hat.diagonal().array() += q_jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(q_hat);
    if (llt.info() != Eigen::Success) {
        throw numerical_error("indefinite", "profile_loss_gradient: covariance not PSD");
    }
    Eigen::MatrixXd cot = -(2.0 / batch) * llt.solve(residuals);
    return detail::batched_parameter_grads(f, inputs, cot);
}

struct TrainingReport {
    Network network;
    Eigen::MatrixXd q_hat;               // residual covariance of the final network
    std::vector<double> loss_curve;      // full-data log det per epoch
    detail::AdamState optimizer_state;   // for checkpointing
};

/// Random network of the configured shape. Hidden layers carry the network
/// input alongside the activation features (a residual-style skip realized
/// through the C path), so near-affine transition maps are easy to fit; the
/// readout layer is affine over (features, input).
inline Network make_training_network(const TrainingConfig& config, Eigen::Index input_dim,
                                     Eigen::Index output_dim) {
    RngStream rng(config.seed, 0, StreamRole::weights);
    const double sigma0 = activation_value(config.activation, 0.0);
    std::vector<Layer> layers;
    Eigen::Index prev = input_dim;
    for (int k = 0; k + 1 < config.depth; ++k) {
        // Output layout: (sigma(A h + b), carried input).
        const Eigen::Index out = config.width + input_dim;
        const double scale = config.init_weight_scale / std::sqrt(static_cast<double>(prev));
        Layer layer;
        layer.A = Eigen::MatrixXd::Zero(out, prev);
        layer.A.topRows(config.width) = scale * rng.normal_matrix(config.width, prev);
        layer.b = Eigen::VectorXd::Zero(out);
        layer.b.head(config.width) = 0.3 * rng.normal_vector(config.width);
        layer.C = Eigen::MatrixXd::Zero(out, prev);
        layer.C.bottomRightCorner(input_dim, input_dim) =
            Eigen::MatrixXd::Identity(input_dim, input_dim);
        layer.d = Eigen::VectorXd::Zero(out);
        layer.d.tail(input_dim).array() -= sigma0;  // cancel sigma(0) on the carry path
        layers.push_back(std::move(layer));
        prev = out;
    }
    {
        const double scale = config.init_weight_scale / std::sqrt(static_cast<double>(prev));
        Layer readout;
        readout.A = Eigen::MatrixXd::Zero(output_dim, prev);
        readout.b = Eigen::VectorXd::Zero(output_dim);
        readout.C = scale * rng.normal_matrix(output_dim, prev);
        readout.d = Eigen::VectorXd::Constant(output_dim, -sigma0);
        layers.push_back(std::move(readout));
    }
    return Network(std::move(layers), config.activation, input_dim);
}

/// Minibatch Adam on the profile objective. Deterministic per seed; the
/// loss curve records the full-data objective after every epoch.
inline TrainingReport fit(const TrainingConfig& config, const TransitionDataset& data) {
    config.validate();
    data.validate();
    const Eigen::Index count = data.size();
    const Eigen::Index n_out = data.targets.rows();
    if (count < n_out + 1) {
        throw dimension_error("fit: need at least n_x + 1 transition pairs");
    }

    Network net = make_training_network(config, data.inputs.rows(), n_out);
    detail::AdamState state = detail::AdamState::zeros_like(net);
    RngStream shuffle(config.seed, 0, StreamRole::shuffle);

    TrainingReport report{net, Eigen::MatrixXd(), {}, std::move(state)};
    report.loss_curve.reserve(static_cast<std::size_t>(config.epochs));

    const Eigen::Index batch_size = std::min<Eigen::Index>(config.minibatch, count);
    Eigen::MatrixXd batch_in(data.inputs.rows(), batch_size);
    Eigen::MatrixXd batch_tg(n_out, batch_size);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.learning_rate.at(epoch, config.epochs);
        std::vector<int> order = shuffle.permutation(static_cast<int>(count));
        for (Eigen::Index begin = 0; begin + batch_size <= count; begin += batch_size) {
            for (Eigen::Index i = 0; i < batch_size; ++i) {
                const int idx = order[static_cast<std::size_t>(begin + i)];
                batch_in.col(i) = data.inputs.col(idx);
                batch_tg.col(i) = data.targets.col(idx);
            }
            auto grads = profile_loss_gradient(report.network, batch_in, batch_tg,
                                               config.q_jitter);
            if (config.affine_readout) {
                grads.back().A.setZero();
                grads.back().b.setZero();
            }
            detail::adam_update(report.network, grads, report.optimizer_state, config, lr);
        }
        auto [loss, q_hat] = profile_loss(report.network, data, config.q_jitter);
        if (!std::isfinite(loss)) {
            throw estimation_error(
                numerical_error("nonfinite_loss", "fit: training loss became non-finite"),
                epoch + 1);
        }
        report.loss_curve.push_back(loss);
        report.q_hat = std::move(q_hat);
    }
    return report;
}

/// Train on per-coordinate standardized inputs and targets, then fold the
/// standardization into the first and last layers so the returned network
/// (and residual covariance) operate in raw units. The folding is exact:
/// first layer absorbs z = D (x - m), the readout absorbs x' = S y + c.
inline TrainingReport fit_standardized(const TrainingConfig& config,
                                       const TransitionDataset& data) {
    data.validate();
    auto column_stats = [](const Eigen::MatrixXd& m) {
        Eigen::VectorXd mean = m.rowwise().mean();
        Eigen::VectorXd sd(m.rows());
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            sd(i) = std::max(1e-12, std::sqrt((m.row(i).array() - mean(i)).square().mean()));
        }
        return std::pair{mean, sd};
    };
    auto [in_mean, in_sd] = column_stats(data.inputs);
    auto [out_mean, out_sd] = column_stats(data.targets);

    TransitionDataset scaled;
    scaled.inputs = in_sd.cwiseInverse().asDiagonal() * (data.inputs.colwise() - in_mean);
    scaled.targets = out_sd.cwiseInverse().asDiagonal() * (data.targets.colwise() - out_mean);
    TrainingReport report = fit(config, scaled);

    std::vector<Layer> layers = report.network.layers();
    {
        Layer& first = layers.front();
        Eigen::MatrixXd d_in = in_sd.cwiseInverse().asDiagonal();
        first.b -= first.A * d_in * in_mean;
        first.d -= first.C * d_in * in_mean;
        first.A = first.A * d_in;
        first.C = first.C * d_in;
        Layer& last = layers.back();
        if (!last.A.isZero(0.0)) {
            throw numerical_error("nonaffine_readout",
                                  "fit_standardized: readout layer must be affine");
        }
        // y_raw = S (sigma(b) + C h + d) + m, re-expressed in layer form
        // with A = 0 and b unchanged.
        Eigen::VectorXd sigma_b = last.b.unaryExpr([&](double v) {
            return activation_value(report.network.activation(), v);
        });
        last.C = out_sd.asDiagonal() * last.C;
        last.d = out_sd.asDiagonal() * (sigma_b + last.d) + out_mean - sigma_b;
    }
    report.network = Network(std::move(layers), report.network.activation(),
                             report.network.input_dim());
    report.q_hat = out_sd.asDiagonal() * report.q_hat * out_sd.asDiagonal();
    return report;
}

}  // namespace nkf
