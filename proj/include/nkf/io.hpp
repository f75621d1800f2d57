#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "nkf/errors.hpp"
#include "nkf/estimation.hpp"
#include "nkf/gaussian.hpp"
#include "nkf/network.hpp"
#include "nkf/training.hpp"

namespace nkf {

using json = nlohmann::json;

namespace detail {

/// Strict-object helper: every present key must be known, every required
/// key must be present. Unknown keys are configuration typos, not noise.
inline void require_keys(const json& obj, const std::string& context,
                         const std::set<std::string>& required,
                         const std::set<std::string>& optional = {}) {
    if (!obj.is_object()) throw config_error(context + ": expected an object");
    for (const auto& item : obj.items()) {
        if (!required.contains(item.key()) && !optional.contains(item.key())) {
            throw config_error(context + ": unknown key '" + item.key() + "'");
        }
    }
    for (const std::string& key : required) {
        if (!obj.contains(key)) throw config_error(context + ": missing key '" + key + "'");
    }
}

inline void require_version(const json& obj, const std::string& context) {
    if (obj.at("format_version").get<int>() != 1) {
        throw config_error(context + ": unsupported format_version");
    }
}

}  // namespace detail

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& rows, const std::string& context) {
    if (!rows.is_array() || rows.empty()) throw config_error(context + ": expected a 2-D array");
    const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index c = static_cast<Eigen::Index>(rows[0].size());
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        if (static_cast<Eigen::Index>(rows[i].size()) != c) {
            throw config_error(context + ": ragged rows");
        }
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows[i][j].get<double>();
    }
    return m;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

inline Eigen::VectorXd vector_from_json(const json& arr, const std::string& context) {
    if (!arr.is_array()) throw config_error(context + ": expected an array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = arr[i].get<double>();
    return v;
}

inline Activation activation_from_string(const std::string& name) {
    if (name == "sine") return Activation::sine;
    if (name == "probit") return Activation::probit;
    throw config_error("unknown activation '" + name + "'");
}

// ---------------------------------------------------------------------------
// Network model files
// ---------------------------------------------------------------------------

inline json network_to_json(const Network& net) {
    json layers = json::array();
    for (const Layer& layer : net.layers()) {
        layers.push_back(json{{"A", matrix_to_json(layer.A)},
                              {"b", vector_to_json(layer.b)},
                              {"C", matrix_to_json(layer.C)},
                              {"d", vector_to_json(layer.d)}});
    }
    return json{{"format_version", 1},
                {"activation", to_string(net.activation())},
                {"input_dim", net.input_dim()},
                {"layers", std::move(layers)}};
}

inline Network network_from_json(const json& obj) {
    detail::require_keys(obj, "network", {"format_version", "activation", "input_dim", "layers"});
    detail::require_version(obj, "network");
    std::vector<Layer> layers;
    for (const json& entry : obj.at("layers")) {
        detail::require_keys(entry, "layer", {"A", "b", "C", "d"});
        Layer layer;
        layer.A = matrix_from_json(entry.at("A"), "layer.A");
        layer.b = vector_from_json(entry.at("b"), "layer.b");
        layer.C = matrix_from_json(entry.at("C"), "layer.C");
        layer.d = vector_from_json(entry.at("d"), "layer.d");
        layers.push_back(std::move(layer));
    }
    return Network(std::move(layers), activation_from_string(obj.at("activation").get<std::string>()),
                   obj.at("input_dim").get<Eigen::Index>());
}

// ---------------------------------------------------------------------------
// Dynamic-model files: the network format plus Q, R and the initial belief.
// ---------------------------------------------------------------------------

inline json model_to_json(const DynamicModel& model) {
    return json{{"format_version", 1},
                {"n_x", model.n_x},
                {"n_u", model.n_u},
                {"n_y", model.n_y},
                {"F", network_to_json(model.F)},
                {"H", network_to_json(model.H)},
                {"Q", matrix_to_json(model.Q)},
                {"R", matrix_to_json(model.R)},
                {"init", json{{"mean", vector_to_json(model.init.mean())},
                              {"cov", matrix_to_json(model.init.cov())}}}};
}

inline DynamicModel model_from_json(const json& obj) {
    detail::require_keys(obj, "model",
                         {"format_version", "n_x", "n_u", "n_y", "F", "H", "Q", "R", "init"});
    detail::require_version(obj, "model");
    const json& init = obj.at("init");
    detail::require_keys(init, "model.init", {"mean", "cov"});
    DynamicModel model;
    model.n_x = obj.at("n_x").get<Eigen::Index>();
    model.n_u = obj.at("n_u").get<Eigen::Index>();
    model.n_y = obj.at("n_y").get<Eigen::Index>();
    model.F = network_from_json(obj.at("F"));
    model.H = network_from_json(obj.at("H"));
    model.Q = matrix_from_json(obj.at("Q"), "model.Q");
    model.R = matrix_from_json(obj.at("R"), "model.R");
    model.init = Gaussian(vector_from_json(init.at("mean"), "init.mean"),
                          matrix_from_json(init.at("cov"), "init.cov"));
    model.validate();
    return model;
}

// ---------------------------------------------------------------------------
// Optimizer-state checkpoints
// ---------------------------------------------------------------------------

inline json optimizer_state_to_json(const detail::AdamState& state) {
    auto grads_to_json = [](const std::vector<LayerGrads>& list) {
        json arr = json::array();
        for (const LayerGrads& g : list) {
            arr.push_back(json{{"A", matrix_to_json(g.A)},
                               {"b", vector_to_json(g.b)},
                               {"C", matrix_to_json(g.C)},
                               {"d", vector_to_json(g.d)}});
        }
        return arr;
    };
    return json{{"format_version", 1},
                {"step", state.step},
                {"first_moment", grads_to_json(state.first_moment)},
                {"second_moment", grads_to_json(state.second_moment)}};
}

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

inline void write_json_file(const std::string& path, const json& value) {
    std::ofstream out(path);
    if (!out) throw config_error("cannot open for writing: " + path);
    out << value.dump(2) << "\n";
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open for reading: " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw config_error("invalid JSON in " + path + ": " + e.what());
    }
}

}  // namespace nkf
