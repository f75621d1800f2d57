#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "nkf/errors.hpp"
#include "nkf/special_functions.hpp"

namespace nkf {

enum class Activation { sine, probit };

inline const char* to_string(Activation a) {
    return a == Activation::sine ? "sine" : "probit";
}

/// Elementwise activation value.
inline double activation_value(Activation a, double x) {
    return a == Activation::sine ? std::sin(x) : norm_cdf(x);
}

/// Elementwise activation derivative.
inline double activation_deriv(Activation a, double x) {
    return a == Activation::sine ? std::cos(x) : norm_pdf(x);
}

/// One layer x -> sigma(A x + b) + C x + d. The explicit linear bypass C
/// is what makes identity blocks, residual connections and input couplings
/// expressible inside a single layer.
struct Layer {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    Eigen::MatrixXd C;
    Eigen::VectorXd d;

    Eigen::Index in_dim() const { return A.cols(); }
    Eigen::Index out_dim() const { return A.rows(); }

    void validate() const {
        if (A.rows() != C.rows() || A.cols() != C.cols() || b.size() != A.rows() ||
            d.size() != A.rows()) {
            throw dimension_error("Layer: A, b, C, d shapes are inconsistent");
        }
        if (!A.allFinite() || !b.allFinite() || !C.allFinite() || !d.allFinite()) {
            throw numerical_error("nonfinite_parameter", "Layer: parameters must be finite");
        }
    }
};

inline Eigen::VectorXd layer_eval(const Eigen::VectorXd& x, const Layer& layer, Activation act) {
    if (x.size() != layer.in_dim()) throw dimension_error("layer_eval: input dimension mismatch");
    Eigen::VectorXd z = layer.A * x + layer.b;
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = activation_value(act, z(i));
    return z + layer.C * x + layer.d;
}

/// Feedforward network: an ordered list of layers sharing one activation.
class Network {
public:
    Network() = default;

    Network(std::vector<Layer> layers, Activation act, Eigen::Index input_dim)
        : layers_(std::move(layers)), activation_(act), input_dim_(input_dim) {
        if (layers_.empty()) throw dimension_error("Network: needs at least one layer");
        Eigen::Index prev = input_dim_;
        for (const Layer& layer : layers_) {
            layer.validate();
            if (layer.in_dim() != prev) {
                throw dimension_error("Network: consecutive layer dimensions do not chain");
            }
            prev = layer.out_dim();
        }
    }

    const std::vector<Layer>& layers() const { return layers_; }
    Activation activation() const { return activation_; }
    Eigen::Index input_dim() const { return input_dim_; }
    Eigen::Index output_dim() const { return layers_.back().out_dim(); }
    int depth() const { return static_cast<int>(layers_.size()); }

private:
    std::vector<Layer> layers_;
    Activation activation_ = Activation::sine;
    Eigen::Index input_dim_ = 0;
};

inline Eigen::VectorXd network_eval(const Eigen::VectorXd& x, const Network& net) {
    if (x.size() != net.input_dim()) throw dimension_error("network_eval: input dimension mismatch");
    Eigen::VectorXd h = x;
    for (const Layer& layer : net.layers()) h = layer_eval(h, layer, net.activation());
    return h;
}

/// Evaluate on a column batch (input_dim x n). Used by the Monte Carlo
/// propagation backend and by training, where per-sample calls would be
/// dominated by dispatch overhead instead of GEMMs.
inline Eigen::MatrixXd network_eval_batch(const Eigen::MatrixXd& x, const Network& net) {
    if (x.rows() != net.input_dim()) {
        throw dimension_error("network_eval_batch: input dimension mismatch");
    }
    const Activation act = net.activation();
    Eigen::MatrixXd h = x;
    for (const Layer& layer : net.layers()) {
        Eigen::MatrixXd z = layer.A * h;
        z.colwise() += layer.b;
        if (act == Activation::sine) {
            z = z.array().sin().matrix();
        } else {
            z = z.unaryExpr([](double v) { return norm_cdf(v); });
        }
        z.noalias() += layer.C * h;
        z.colwise() += layer.d;
        h = std::move(z);
    }
    return h;
}

/// Input coupling: a single network computing x -> (f1(x), f2(x)) exactly.
/// First layer stacks the parameter blocks; later layers are direct sums.
inline Network couple(const Network& f1, const Network& f2) {
    if (f1.input_dim() != f2.input_dim()) throw dimension_error("couple: input dims differ");
    if (f1.depth() != f2.depth()) throw dimension_error("couple: layer counts differ");
    if (f1.activation() != f2.activation()) throw dimension_error("couple: activations differ");

    std::vector<Layer> layers;
    layers.reserve(f1.depth());
    for (int k = 0; k < f1.depth(); ++k) {
        const Layer& l1 = f1.layers()[k];
        const Layer& l2 = f2.layers()[k];
        Layer out;
        const Eigen::Index m1 = l1.out_dim(), m2 = l2.out_dim();
        out.b = Eigen::VectorXd(m1 + m2);
        out.b << l1.b, l2.b;
        out.d = Eigen::VectorXd(m1 + m2);
        out.d << l1.d, l2.d;
        if (k == 0) {
            out.A = Eigen::MatrixXd(m1 + m2, l1.in_dim());
            out.A << l1.A, l2.A;
            out.C = Eigen::MatrixXd(m1 + m2, l1.in_dim());
            out.C << l1.C, l2.C;
        } else {
            const Eigen::Index n1 = l1.in_dim(), n2 = l2.in_dim();
            out.A = Eigen::MatrixXd::Zero(m1 + m2, n1 + n2);
            out.A.topLeftCorner(m1, n1) = l1.A;
            out.A.bottomRightCorner(m2, n2) = l2.A;
            out.C = Eigen::MatrixXd::Zero(m1 + m2, n1 + n2);
            out.C.topLeftCorner(m1, n1) = l1.C;
            out.C.bottomRightCorner(m2, n2) = l2.C;
        }
        layers.push_back(std::move(out));
    }
    return Network(std::move(layers), f1.activation(), f1.input_dim());
}

/// Exact identity map as an l-layer network (A = 0, C = I). For probit the
/// constant sigma(0) = 1/2 is cancelled through d, keeping exactness.
inline Network identity_network(Eigen::Index n, int num_layers, Activation act) {
    if (n < 1 || num_layers < 1) throw dimension_error("identity_network: n, l must be >= 1");
    const double sigma0 = activation_value(act, 0.0);
    std::vector<Layer> layers(static_cast<std::size_t>(num_layers));
    for (Layer& layer : layers) {
        layer.A = Eigen::MatrixXd::Zero(n, n);
        layer.b = Eigen::VectorXd::Zero(n);
        layer.C = Eigen::MatrixXd::Identity(n, n);
        layer.d = Eigen::VectorXd::Constant(n, -sigma0);
    }
    return Network(std::move(layers), act, n);
}

/// x -> (x, f(x)) as one network.
inline Network augment_identity(const Network& f) {
    return couple(identity_network(f.input_dim(), f.depth(), f.activation()), f);
}

/// Fix the trailing inputs of f to `fixed_tail`, absorbing them into the
/// first layer's offsets: b += A_u u, d += C_u u.
inline Network partially_apply(const Network& f, const Eigen::VectorXd& fixed_tail) {
    const Eigen::Index n_fixed = fixed_tail.size();
    if (n_fixed == 0) return f;
    if (n_fixed >= f.input_dim()) {
        throw dimension_error("partially_apply: tail must be shorter than the input");
    }
    const Eigen::Index n_free = f.input_dim() - n_fixed;
    std::vector<Layer> layers = f.layers();
    Layer& first = layers.front();
    first.b += first.A.rightCols(n_fixed) * fixed_tail;
    first.d += first.C.rightCols(n_fixed) * fixed_tail;
    first.A = Eigen::MatrixXd(first.A.leftCols(n_free));
    first.C = Eigen::MatrixXd(first.C.leftCols(n_free));
    return Network(std::move(layers), f.activation(), n_free);
}

/// Jacobian of the network at x: product over layers of
/// diag(sigma'(A h + b)) A + C.
inline Eigen::MatrixXd network_jacobian(const Eigen::VectorXd& x, const Network& net) {
    if (x.size() != net.input_dim()) {
        throw dimension_error("network_jacobian: input dimension mismatch");
    }
    Eigen::VectorXd h = x;
    Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(net.input_dim(), net.input_dim());
    for (const Layer& layer : net.layers()) {
        Eigen::VectorXd z = layer.A * h + layer.b;
        Eigen::VectorXd dz(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) dz(i) = activation_deriv(net.activation(), z(i));
        jac = (dz.asDiagonal() * layer.A + layer.C) * jac;
        h = layer_eval(h, layer, net.activation());
    }
    return jac;
}

/// Per-layer parameter gradients produced by reverse mode.
struct LayerGrads {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    Eigen::MatrixXd C;
    Eigen::VectorXd d;
};

struct VjpResult {
    std::vector<LayerGrads> layers;
    Eigen::VectorXd input;
};

/// Reverse-mode gradients of <cotangent, f(x)> with respect to every layer
/// parameter and the input.
inline VjpResult network_vjp(const Eigen::VectorXd& x, const Network& net,
                             const Eigen::VectorXd& cotangent) {
    if (x.size() != net.input_dim()) throw dimension_error("network_vjp: input dimension mismatch");
    if (cotangent.size() != net.output_dim()) {
        throw dimension_error("network_vjp: cotangent dimension mismatch");
    }
    const int depth = net.depth();
    std::vector<Eigen::VectorXd> inputs(static_cast<std::size_t>(depth));
    std::vector<Eigen::VectorXd> preacts(static_cast<std::size_t>(depth));
    Eigen::VectorXd h = x;
    for (int k = 0; k < depth; ++k) {
        const Layer& layer = net.layers()[static_cast<std::size_t>(k)];
        inputs[static_cast<std::size_t>(k)] = h;
        Eigen::VectorXd z = layer.A * h + layer.b;
        preacts[static_cast<std::size_t>(k)] = z;
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = activation_value(net.activation(), z(i));
        h = z + layer.C * h + layer.d;
    }

    VjpResult result;
    result.layers.resize(static_cast<std::size_t>(depth));
    Eigen::VectorXd cot = cotangent;
    for (int k = depth - 1; k >= 0; --k) {
        const Layer& layer = net.layers()[static_cast<std::size_t>(k)];
        const Eigen::VectorXd& z = preacts[static_cast<std::size_t>(k)];
        const Eigen::VectorXd& hin = inputs[static_cast<std::size_t>(k)];
        Eigen::VectorXd gated(z.size());
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            gated(i) = cot(i) * activation_deriv(net.activation(), z(i));
        }
        LayerGrads& g = result.layers[static_cast<std::size_t>(k)];
        g.A = gated * hin.transpose();
        g.b = gated;
        g.C = cot * hin.transpose();
        g.d = cot;
        cot = layer.A.transpose() * gated + layer.C.transpose() * cot;
    }
    result.input = std::move(cot);
    return result;
}

}  // namespace nkf
