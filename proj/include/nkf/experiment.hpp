#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "nkf/csv.hpp"
#include "nkf/errors.hpp"
#include "nkf/estimation.hpp"
#include "nkf/io.hpp"
#include "nkf/metrics.hpp"
#include "nkf/systems/lorenz.hpp"
#include "nkf/systems/lqr.hpp"
#include "nkf/systems/network_truth.hpp"
#include "nkf/systems/simulate.hpp"
#include "nkf/systems/wiener.hpp"
#include "nkf/training.hpp"
#include "nkf/version.hpp"

namespace nkf {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct MethodConfig {
    std::string name;  // unique label, defaults to the method string
    PropagatorSpec spec;
};

inline PropagationMethod propagation_method_from_string(const std::string& name) {
    if (name == "analytic") return PropagationMethod::analytic;
    if (name == "mean-field") return PropagationMethod::mean_field;
    if (name == "linearized") return PropagationMethod::linearized;
    if (name == "unscented95") return PropagationMethod::unscented95;
    if (name == "unscented02") return PropagationMethod::unscented02;
    if (name == "mc") return PropagationMethod::monte_carlo;
    throw config_error("unknown propagation method '" + name + "'");
}

inline MethodConfig method_config_from_json(const json& obj) {
    detail::require_keys(obj, "method", {"method"},
                         {"name", "kappa", "alpha", "beta", "samples", "seed"});
    MethodConfig out;
    out.spec.method = propagation_method_from_string(obj.at("method").get<std::string>());
    out.name = obj.value("name", obj.at("method").get<std::string>());
    if (obj.contains("kappa")) out.spec.unscented.kappa = obj.at("kappa").get<double>();
    if (obj.contains("alpha")) out.spec.unscented.alpha = obj.at("alpha").get<double>();
    if (obj.contains("beta")) out.spec.unscented.beta = obj.at("beta").get<double>();
    if (obj.contains("samples")) out.spec.mc_samples = obj.at("samples").get<Eigen::Index>();
    if (obj.contains("seed")) out.spec.seed = obj.at("seed").get<std::uint64_t>();
    return out;
}

struct ExperimentConfig {
    std::string kind;  // lorenz | wiener-estimation | lti-regulation | network-truth
    Eigen::Index horizon = 100;
    int replications = 1;
    std::uint64_t seed = 0;
    std::vector<MethodConfig> methods;
    double alpha = 0.05;
    std::vector<double> coverage_levels{0.5, 0.8, 0.9, 0.95, 0.99};
    json system = json::object();
    json training = json::object();

    void validate() const {
        if (kind != "lorenz" && kind != "wiener-estimation" && kind != "lti-regulation" &&
            kind != "network-truth") {
            throw config_error("ExperimentConfig: unknown kind '" + kind + "'");
        }
        if (replications < 1) throw config_error("ExperimentConfig: replications >= 1");
        if (methods.empty()) throw config_error("ExperimentConfig: methods must be nonempty");
        if (horizon < 1) throw config_error("ExperimentConfig: horizon >= 1");
        for (std::size_t i = 0; i < methods.size(); ++i) {
            for (std::size_t j = i + 1; j < methods.size(); ++j) {
                if (methods[i].name == methods[j].name) {
                    throw config_error("ExperimentConfig: duplicate method name '" +
                                       methods[i].name + "'");
                }
            }
        }
    }
};

inline ExperimentConfig experiment_config_from_json(const json& obj) {
    detail::require_keys(obj, "experiment",
                         {"format_version", "kind", "horizon", "replications", "seed", "methods"},
                         {"alpha", "coverage_levels", "system", "training"});
    detail::require_version(obj, "experiment");
    ExperimentConfig config;
    config.kind = obj.at("kind").get<std::string>();
    config.horizon = obj.at("horizon").get<Eigen::Index>();
    config.replications = obj.at("replications").get<int>();
    config.seed = obj.at("seed").get<std::uint64_t>();
    for (const json& m : obj.at("methods")) config.methods.push_back(method_config_from_json(m));
    config.alpha = obj.value("alpha", 0.05);
    if (obj.contains("coverage_levels")) {
        config.coverage_levels.clear();
        for (const json& level : obj.at("coverage_levels")) {
            config.coverage_levels.push_back(level.get<double>());
        }
    }
    if (obj.contains("system")) config.system = obj.at("system");
    if (obj.contains("training")) config.training = obj.at("training");
    config.validate();
    return config;
}

/// FNV-1a over the canonical dump; stable across runs of the same build.
inline std::uint64_t config_hash(const json& obj) {
    std::string dump = obj.dump();
    std::uint64_t hash = 1469598103934665603ULL;
    for (unsigned char c : dump) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    return hash;
}

// ---------------------------------------------------------------------------
// System construction from the config's `system` block
// ---------------------------------------------------------------------------

inline WienerSystemSpec wiener_spec_from_json(const json& obj, bool regulation) {
    detail::require_keys(obj, "system", {},
                         {"eigenvalues", "n_y", "hidden_width", "first_weight_scale",
                          "first_bias_scale", "q_scale", "r_scale", "input_frequency"});
    WienerSystemSpec spec = regulation ? WienerSystemSpec::regulation_benchmark()
                                       : WienerSystemSpec::estimation_benchmark();
    if (obj.contains("eigenvalues")) {
        spec.eigenvalues.clear();
        for (const json& e : obj.at("eigenvalues")) spec.eigenvalues.push_back(e.get<double>());
        spec.n_x = static_cast<Eigen::Index>(spec.eigenvalues.size());
    }
    spec.n_y = obj.value("n_y", spec.n_y);
    spec.hidden_width = obj.value("hidden_width", spec.hidden_width);
    spec.first_weight_scale = obj.value("first_weight_scale", spec.first_weight_scale);
    spec.first_bias_scale = obj.value("first_bias_scale", spec.first_bias_scale);
    spec.q_scale = obj.value("q_scale", spec.q_scale);
    spec.r_scale = obj.value("r_scale", spec.r_scale);
    spec.input_frequency = obj.value("input_frequency", spec.input_frequency);
    spec.validate();
    return spec;
}

inline NetworkTruthConfig network_truth_config_from_json(const json& obj) {
    detail::require_keys(obj, "system", {},
                         {"n_x", "n_y", "depth", "width", "activation", "transition_gain",
                          "first_layer_norm", "obs_first_layer_norm", "q_scale", "r_scale"});
    NetworkTruthConfig config;
    config.n_x = obj.value("n_x", config.n_x);
    config.n_y = obj.value("n_y", config.n_y);
    config.depth = obj.value("depth", config.depth);
    config.width = obj.value("width", config.width);
    if (obj.contains("activation")) {
        config.activation = activation_from_string(obj.at("activation").get<std::string>());
    }
    config.transition_gain = obj.value("transition_gain", config.transition_gain);
    config.first_layer_norm = obj.value("first_layer_norm", config.first_layer_norm);
    config.obs_first_layer_norm = obj.value("obs_first_layer_norm", config.obs_first_layer_norm);
    config.q_scale = obj.value("q_scale", config.q_scale);
    config.r_scale = obj.value("r_scale", config.r_scale);
    config.validate();
    return config;
}

inline LorenzConfig lorenz_config_from_json(const json& obj) {
    detail::require_keys(obj, "system", {},
                         {"dt", "substeps", "process_noise", "measurement_noise", "x0",
                          "train_steps"});
    LorenzConfig config;
    config.dt = obj.value("dt", config.dt);
    config.substeps = obj.value("substeps", config.substeps);
    config.process_noise = obj.value("process_noise", config.process_noise);
    config.measurement_noise = obj.value("measurement_noise", config.measurement_noise);
    if (obj.contains("x0")) {
        Eigen::VectorXd x0 = vector_from_json(obj.at("x0"), "system.x0");
        if (x0.size() != 3) throw config_error("system.x0 must have length 3");
        config.x0 = x0;
    }
    config.validate();
    return config;
}

inline TrainingConfig training_config_from_json(const json& obj) {
    detail::require_keys(obj, "training", {},
                         {"epochs", "minibatch", "lr_start", "lr_end", "lr_shape",
                          "weight_decay", "depth", "width", "activation", "seed",
                          "init_weight_scale"});
    TrainingConfig config;
    config.epochs = obj.value("epochs", config.epochs);
    config.minibatch = obj.value("minibatch", config.minibatch);
    config.learning_rate.start = obj.value("lr_start", config.learning_rate.start);
    config.learning_rate.end = obj.value("lr_end", config.learning_rate.end);
    config.learning_rate.shape = obj.value("lr_shape", config.learning_rate.shape);
    config.weight_decay = obj.value("weight_decay", config.weight_decay);
    config.depth = obj.value("depth", config.depth);
    config.width = obj.value("width", config.width);
    if (obj.contains("activation")) {
        config.activation = activation_from_string(obj.at("activation").get<std::string>());
    }
    config.seed = obj.value("seed", config.seed);
    config.init_weight_scale = obj.value("init_weight_scale", config.init_weight_scale);
    config.validate();
    return config;
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

struct MethodStatus {
    std::string name;
    std::string status = "ok";  // or "failed: <kind>"
    bool ok() const { return status == "ok"; }
};

struct ExperimentResult {
    std::vector<MethodStatus> statuses;
    std::vector<std::pair<std::string, MetricSummary>> summaries;
    bool any_ok() const {
        for (const auto& s : statuses)
            if (s.ok()) return true;
        return false;
    }
};

namespace detail {

/// Run indexed jobs on a small thread pool; results land in caller-indexed
/// slots so aggregation order never depends on scheduling.
inline void parallel_for_index(int count, int jobs, const std::function<void(int)>& work) {
    if (jobs <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) work(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int threads = std::min(jobs, count);
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&]() {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) work(i);
        });
    }
    for (auto& thread : pool) thread.join();
}

struct ReplicationOutcome {
    // One record (or failure note) per method, aligned with config.methods.
    std::vector<std::optional<RunRecord>> records;
    std::vector<std::string> failures;
    SimulatedTrajectory trajectory;
};

inline void write_trajectory_excerpt(const std::string& path, const RunRecord& record,
                                     Eigen::Index max_steps) {
    const Eigen::Index n = record.truth.rows();
    const Eigen::Index steps = std::min<Eigen::Index>(max_steps, record.horizon());
    const double z90 = std::sqrt(chi2_quantile(1, 0.90));
    const double joint_q90 = chi2_quantile(static_cast<int>(n), 0.90);
    CsvWriter csv(path);
    csv.header({"t", "coord", "truth", "mean", "lo90", "hi90", "hit"});
    for (Eigen::Index t = 0; t < steps; ++t) {
        const Gaussian& belief = record.filter[static_cast<std::size_t>(t)].filtered_state;
        CriterionSample sample{record.truth.col(t), belief.mean(), belief.cov()};
        bool hit = detail::coverage_hit(sample, joint_q90);
        for (Eigen::Index i = 0; i < n; ++i) {
            double sd = std::sqrt(std::max(0.0, belief.cov()(i, i)));
            csv.row_of_strings({std::to_string(t + 1), std::to_string(i),
                                format_double(record.truth(i, t)),
                                format_double(belief.mean()(i)),
                                format_double(belief.mean()(i) - z90 * sd),
                                format_double(belief.mean()(i) + z90 * sd),
                                hit ? "1" : "0"});
        }
    }
}

}  // namespace detail

/// Estimation-style experiments (everything except lti-regulation): build
/// the system, replicate data, run every method's filter and smoother,
/// aggregate metrics, and write the result bundle.
inline ExperimentResult run_estimation_experiment(const ExperimentConfig& config,
                                                  const DynamicModel& model,
                                                  const Eigen::MatrixXd& inputs,
                                                  const std::string& out_dir, int jobs) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "data");
    fs::create_directories(fs::path(out_dir) / "runs");

    const int reps = config.replications;
    std::vector<detail::ReplicationOutcome> outcomes(static_cast<std::size_t>(reps));
    detail::parallel_for_index(reps, jobs, [&](int rep) {
        auto& outcome = outcomes[static_cast<std::size_t>(rep)];
        outcome.records.resize(config.methods.size());
        outcome.failures.resize(config.methods.size());
        outcome.trajectory =
            simulate_model(model, inputs, config.seed, static_cast<std::uint64_t>(rep));
        for (std::size_t m = 0; m < config.methods.size(); ++m) {
            try {
                RunRecord record;
                record.truth = outcome.trajectory.states.rightCols(inputs.cols());
                record.filter = filter_run(model, inputs, outcome.trajectory.outputs,
                                           config.methods[m].spec);
                record.smoother =
                    smoother_run(model, inputs, config.methods[m].spec, record.filter);
                outcome.records[m] = std::move(record);
            } catch (const numerical_error& e) {
                outcome.failures[m] = e.kind();
            }
        }
    });

    for (int rep = 0; rep < reps; ++rep) {
        const auto& outcome = outcomes[static_cast<std::size_t>(rep)];
        write_trajectory_csv(out_dir + "/data/rep_" + std::to_string(rep) + ".csv",
                             outcome.trajectory.states.rightCols(inputs.cols()), inputs,
                             outcome.trajectory.outputs);
    }

    ExperimentResult result;
    std::vector<std::tuple<std::string, std::string, double, double>> curves;
    for (std::size_t m = 0; m < config.methods.size(); ++m) {
        MethodStatus status{config.methods[m].name};
        std::vector<RunRecord> records;
        for (int rep = 0; rep < reps; ++rep) {
            const auto& outcome = outcomes[static_cast<std::size_t>(rep)];
            if (!outcome.records[m]) {
                status.status = "failed: " + outcome.failures[m];
                break;
            }
            records.push_back(*outcome.records[m]);
        }
        if (status.ok()) {
            for (int rep = 0; rep < reps; ++rep) {
                write_run_record_csv(out_dir + "/runs/" + status.name + "_rep" +
                                         std::to_string(rep) + ".csv",
                                     records[static_cast<std::size_t>(rep)]);
            }
            for (const auto& summary : evaluate_run(records, config.alpha)) {
                result.summaries.emplace_back(status.name, summary);
            }
            for (Task task : {Task::prediction, Task::filtering, Task::smoothing}) {
                std::vector<CriterionSample> pooled;
                for (const auto& record : records) {
                    auto samples = criterion_samples(record, task);
                    pooled.insert(pooled.end(), samples.begin(), samples.end());
                }
                for (auto [level, empirical] : coverage_curve(pooled, config.coverage_levels)) {
                    curves.emplace_back(status.name, to_string(task), level, empirical);
                }
            }
            detail::write_trajectory_excerpt(out_dir + "/trajectory_" + status.name + ".csv",
                                             records.front(), 100);
        }
        result.statuses.push_back(std::move(status));
    }

    write_coverage_curve_csv(out_dir + "/coverage_curves.csv", curves);
    write_summary_csv(out_dir + "/summary.csv", result.summaries);
    {
        CsvWriter csv(out_dir + "/status.csv");
        csv.header({"method", "status"});
        for (const auto& s : result.statuses) csv.row_of_strings({s.name, s.status});
    }
    return result;
}

/// Regulation experiment: per replication (seed) run the closed loop for
/// every method against the shared-noise true-state LQR baseline.
inline ExperimentResult run_regulation_experiment(const ExperimentConfig& config,
                                                  const std::string& out_dir, int jobs) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    WienerSystemSpec spec = wiener_spec_from_json(config.system, /*regulation=*/true);
    const std::uint64_t system_seed = derive_stream_key(config.seed, 0, StreamRole::weights);
    DynamicModel model = make_wiener_system(spec, system_seed);
    auto [a, b] = controllable_canonical(spec.eigenvalues);
    DareSolution lqr = dare_gain(a, b);

    const int reps = config.replications;
    std::vector<std::vector<ClosedLoopResult>> results(
        static_cast<std::size_t>(reps),
        std::vector<ClosedLoopResult>(config.methods.size()));
    detail::parallel_for_index(reps, jobs, [&](int rep) {
        for (std::size_t m = 0; m < config.methods.size(); ++m) {
            results[static_cast<std::size_t>(rep)][m] =
                closed_loop_run(model, lqr.K, config.methods[m].spec, config.horizon,
                                config.seed, static_cast<std::uint64_t>(rep));
        }
    });

    write_json_file(out_dir + "/model.json", model_to_json(model));
    ExperimentResult result;
    CsvWriter costs(out_dir + "/lqr_costs.csv");
    costs.header({"method", "replication", "state_cost", "control_cost", "total_cost",
                  "baseline_state_cost", "baseline_control_cost", "baseline_total_cost",
                  "total_cost_ratio", "diverged"});
    for (std::size_t m = 0; m < config.methods.size(); ++m) {
        MethodStatus status{config.methods[m].name};
        std::vector<RunRecord> records;
        int diverged_count = 0;
        for (int rep = 0; rep < reps; ++rep) {
            const ClosedLoopResult& run = results[static_cast<std::size_t>(rep)][m];
            costs.row_of_strings(
                {status.name, std::to_string(rep), detail::format_double(run.state_cost),
                 detail::format_double(run.control_cost), detail::format_double(run.total_cost),
                 detail::format_double(run.baseline_state_cost),
                 detail::format_double(run.baseline_control_cost),
                 detail::format_double(run.baseline_total_cost),
                 detail::format_double(run.total_cost_ratio()), run.diverged ? "1" : "0"});
            if (run.diverged) {
                ++diverged_count;
            } else {
                records.push_back(run.record);
            }
        }
        if (diverged_count == reps) {
            status.status = "failed: " + results[0][m].failure;
        } else if (!records.empty()) {
            // Filtering metrics over the non-diverged replications.
            for (const auto& summary : evaluate_run(records, config.alpha)) {
                if (summary.task == "filtering") {
                    result.summaries.emplace_back(status.name, summary);
                }
            }
            detail::write_trajectory_excerpt(out_dir + "/trajectory_" + status.name + ".csv",
                                             records.front(), 100);
        }
        result.statuses.push_back(std::move(status));
    }
    write_summary_csv(out_dir + "/summary.csv", result.summaries);
    {
        CsvWriter csv(out_dir + "/status.csv");
        csv.header({"method", "status"});
        for (const auto& s : result.statuses) csv.row_of_strings({s.name, s.status});
    }
    return result;
}

/// End-to-end experiment driver; writes the manifest and dispatches on kind.
inline ExperimentResult run_experiment(const ExperimentConfig& config, const json& raw_config,
                                       const std::string& out_dir, int jobs = 1) {
    namespace fs = std::filesystem;
    config.validate();
    fs::create_directories(out_dir);

    json manifest{{"format_version", 1},
                  {"kind", config.kind},
                  {"library_version", kVersion},
                  {"config_hash", config_hash(raw_config)},
                  {"seed", config.seed},
                  {"horizon", config.horizon},
                  {"replications", config.replications}};
    json method_names = json::array();
    for (const auto& m : config.methods) method_names.push_back(m.name);
    manifest["methods"] = std::move(method_names);

    ExperimentResult result;
    if (config.kind == "network-truth") {
        NetworkTruthConfig system = network_truth_config_from_json(config.system);
        DynamicModel model = make_network_truth_system(
            system, derive_stream_key(config.seed, 0, StreamRole::weights));
        write_json_file(out_dir + "/model.json", model_to_json(model));
        Eigen::MatrixXd inputs(0, config.horizon);
        result = run_estimation_experiment(config, model, inputs, out_dir, jobs);
    } else if (config.kind == "wiener-estimation") {
        WienerSystemSpec spec = wiener_spec_from_json(config.system, /*regulation=*/false);
        DynamicModel model =
            make_wiener_system(spec, derive_stream_key(config.seed, 0, StreamRole::weights));
        write_json_file(out_dir + "/model.json", model_to_json(model));
        result = run_estimation_experiment(
            config, model, sinusoid_input(config.horizon, spec.input_frequency), out_dir, jobs);
    } else if (config.kind == "lorenz") {
        LorenzConfig lorenz = lorenz_config_from_json(config.system);
        TrainingConfig training = training_config_from_json(config.training);
        const Eigen::Index train_steps = config.system.value("train_steps", 20000);

        LorenzTrajectory train_traj = simulate_lorenz(
            lorenz, train_steps, derive_stream_key(config.seed, 0, StreamRole::sampling));
        TransitionDataset dataset =
            make_transition_dataset(train_traj.states, Eigen::MatrixXd(0, train_steps));
        TrainingReport report = fit(training, dataset);
        write_json_file(out_dir + "/surrogate.json", network_to_json(report.network));
        write_json_file(out_dir + "/surrogate_opt.json",
                        optimizer_state_to_json(report.optimizer_state));
        {
            CsvWriter curve(out_dir + "/training_curve.csv");
            curve.header({"epoch", "loss"});
            for (std::size_t e = 0; e < report.loss_curve.size(); ++e) {
                curve.numeric_row({static_cast<double>(e + 1), report.loss_curve[e]});
            }
        }
        DynamicModel model = make_lorenz_filter_model(
            report.network, symmetrize_psd(report.q_hat), lorenz);
        write_json_file(out_dir + "/model.json", model_to_json(model));

        // Test realizations come from the true SDE, not the surrogate.
        const int reps = config.replications;
        std::vector<RunRecord> truth_records(static_cast<std::size_t>(reps));
        std::vector<Eigen::MatrixXd> outputs(static_cast<std::size_t>(reps));
        Eigen::MatrixXd inputs(0, config.horizon);
        detail::parallel_for_index(reps, jobs, [&](int rep) {
            LorenzTrajectory traj =
                simulate_lorenz(lorenz, config.horizon,
                                derive_stream_key(config.seed, 1, StreamRole::sampling),
                                static_cast<std::uint64_t>(rep));
            truth_records[static_cast<std::size_t>(rep)].truth =
                traj.states.rightCols(config.horizon);
            outputs[static_cast<std::size_t>(rep)] = traj.measurements;
        });

        namespace fs2 = std::filesystem;
        fs2::create_directories(fs2::path(out_dir) / "data");
        fs2::create_directories(fs2::path(out_dir) / "runs");
        for (int rep = 0; rep < reps; ++rep) {
            write_trajectory_csv(out_dir + "/data/rep_" + std::to_string(rep) + ".csv",
                                 truth_records[static_cast<std::size_t>(rep)].truth, inputs,
                                 outputs[static_cast<std::size_t>(rep)]);
        }

        std::vector<std::tuple<std::string, std::string, double, double>> curves;
        for (const auto& method : config.methods) {
            MethodStatus status{method.name};
            std::vector<RunRecord> records;
            std::vector<std::optional<RunRecord>> rep_records(static_cast<std::size_t>(reps));
            std::vector<std::string> failures(static_cast<std::size_t>(reps));
            detail::parallel_for_index(reps, jobs, [&](int rep) {
                try {
                    RunRecord record;
                    record.truth = truth_records[static_cast<std::size_t>(rep)].truth;
                    record.filter = filter_run(
                        model, inputs, outputs[static_cast<std::size_t>(rep)], method.spec);
                    record.smoother =
                        smoother_run(model, inputs, method.spec, record.filter);
                    rep_records[static_cast<std::size_t>(rep)] = std::move(record);
                } catch (const numerical_error& e) {
                    failures[static_cast<std::size_t>(rep)] = e.kind();
                }
            });
            for (int rep = 0; rep < reps; ++rep) {
                if (!rep_records[static_cast<std::size_t>(rep)]) {
                    status.status = "failed: " + failures[static_cast<std::size_t>(rep)];
                    break;
                }
                records.push_back(*rep_records[static_cast<std::size_t>(rep)]);
            }
            if (status.ok()) {
                for (int rep = 0; rep < reps; ++rep) {
                    write_run_record_csv(out_dir + "/runs/" + status.name + "_rep" +
                                             std::to_string(rep) + ".csv",
                                         records[static_cast<std::size_t>(rep)]);
                }
                for (const auto& summary : evaluate_run(records, config.alpha)) {
                    result.summaries.emplace_back(status.name, summary);
                }
                for (Task task : {Task::prediction, Task::filtering, Task::smoothing}) {
                    std::vector<CriterionSample> pooled;
                    for (const auto& record : records) {
                        auto samples = criterion_samples(record, task);
                        pooled.insert(pooled.end(), samples.begin(), samples.end());
                    }
                    for (auto [level, empirical] :
                         coverage_curve(pooled, config.coverage_levels)) {
                        curves.emplace_back(status.name, to_string(task), level, empirical);
                    }
                }
                detail::write_trajectory_excerpt(
                    out_dir + "/trajectory_" + status.name + ".csv", records.front(), 100);
            }
            result.statuses.push_back(std::move(status));
        }
        write_coverage_curve_csv(out_dir + "/coverage_curves.csv", curves);
        write_summary_csv(out_dir + "/summary.csv", result.summaries);
        {
            CsvWriter csv(out_dir + "/status.csv");
            csv.header({"method", "status"});
            for (const auto& s : result.statuses) csv.row_of_strings({s.name, s.status});
        }
    } else {  // lti-regulation
        result = run_regulation_experiment(config, out_dir, jobs);
    }

    manifest["probit_rho_clamps"] = probit_rho_clamp_count().load();
    write_json_file(out_dir + "/manifest.json", manifest);
    return result;
}

}  // namespace nkf
