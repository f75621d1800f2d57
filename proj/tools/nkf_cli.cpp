// Experiment CLI: generate benchmark systems and data, train transition
// surrogates, run filters/smoothers with any propagation backend, evaluate
// the calibration metrics, and reproduce the comparison tables as CSV.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure in all
// requested methods.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nkf/csv.hpp"
#include "nkf/experiment.hpp"
#include "nkf/io.hpp"
#include "nkf/metrics.hpp"
#include "nkf/systems/lorenz.hpp"
#include "nkf/training.hpp"
#include "nkf/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct MethodFlags {
    std::string method = "analytic";
    double kappa = 0.0;
    double alpha = 1e-3;
    double beta = 2.0;
    long samples = 100000;
    std::uint64_t mc_seed = 0;

    nkf::PropagatorSpec to_spec() const {
        nkf::PropagatorSpec spec;
        spec.method = nkf::propagation_method_from_string(method);
        spec.unscented = {kappa, alpha, beta};
        spec.mc_samples = samples;
        spec.seed = mc_seed;
        return spec;
    }
};

void add_method_flags(CLI::App* cmd, MethodFlags& flags) {
    cmd->add_option("--method", flags.method,
                    "analytic | mean-field | linearized | unscented95 | unscented02 | mc")
        ->required();
    cmd->add_option("--kappa", flags.kappa, "unscented kappa");
    cmd->add_option("--ut-alpha", flags.alpha, "unscented02 alpha");
    cmd->add_option("--ut-beta", flags.beta, "unscented02 beta");
    cmd->add_option("--samples", flags.samples, "mc sample count");
    cmd->add_option("--mc-seed", flags.mc_seed, "mc stream seed");
}

nkf::json load_config(const std::string& path, std::optional<std::uint64_t> seed_override) {
    nkf::json config = nkf::read_json_file(path);
    if (seed_override) {
        if (!config.is_object()) throw nkf::config_error("config root must be an object");
        config["seed"] = *seed_override;
    }
    return config;
}

nkf::RunRecord run_estimation(const nkf::DynamicModel& model, const nkf::TrajectoryData& data,
                              const nkf::PropagatorSpec& spec, bool with_smoother) {
    if (data.states.rows() != model.n_x) {
        throw nkf::config_error("data file lacks the truth columns required for a run record");
    }
    nkf::RunRecord record;
    record.truth = data.states;
    record.filter = nkf::filter_run(model, data.inputs, data.outputs, spec);
    if (with_smoother) {
        record.smoother = nkf::smoother_run(model, data.inputs, spec, record.filter);
    }
    return record;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"state estimation for neural-network dynamic systems"};
    app.set_version_flag("--version", nkf::kVersion);
    app.require_subcommand(1);

    // ---- run / lqr ----------------------------------------------------
    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed_override;
    int jobs = 1;
    auto add_run_like = [&](const std::string& name, const std::string& help) {
        CLI::App* cmd = app.add_subcommand(name, help);
        cmd->add_option("--config", config_path, "experiment config JSON")->required();
        cmd->add_option("--out", out_dir, "output directory")->required();
        cmd->add_option("--seed", seed_override, "override the config seed");
        cmd->add_option("--jobs", jobs, "parallel replications");
        return cmd;
    };
    CLI::App* run_cmd = add_run_like("run", "run a configured experiment end to end");
    CLI::App* lqr_cmd = add_run_like("lqr", "run a regulation experiment (kind lti-regulation)");
    CLI::App* generate_cmd =
        add_run_like("generate", "generate the system model and data files only");

    // ---- train ----------------------------------------------------------
    CLI::App* train_cmd = app.add_subcommand("train", "fit a transition surrogate");
    std::string train_data_path;
    train_cmd->add_option("--config", config_path, "experiment config JSON (lorenz kind)")
        ->required();
    train_cmd->add_option("--data", train_data_path, "training trajectory CSV")->required();
    train_cmd->add_option("--out", out_dir, "output directory")->required();

    // ---- filter / smooth -------------------------------------------------
    std::string model_path, data_path, run_out;
    MethodFlags method_flags;
    auto add_filter_like = [&](const std::string& name, const std::string& help) {
        CLI::App* cmd = app.add_subcommand(name, help);
        cmd->add_option("--model", model_path, "dynamic model JSON")->required();
        cmd->add_option("--data", data_path, "trajectory CSV with truth columns")->required();
        cmd->add_option("--out", run_out, "output run-record CSV")->required();
        add_method_flags(cmd, method_flags);
        return cmd;
    };
    CLI::App* filter_cmd = add_filter_like("filter", "run the Kalman filter over a data file");
    CLI::App* smooth_cmd = add_filter_like("smooth", "run the filter and the RTS smoother");

    // ---- evaluate ---------------------------------------------------------
    CLI::App* evaluate_cmd = app.add_subcommand("evaluate", "compute metrics over run records");
    std::vector<std::string> run_files;
    std::string method_name = "method";
    double eval_alpha = 0.05;
    evaluate_cmd->add_option("--runs", run_files, "run-record CSVs (one per replication)")
        ->required();
    evaluate_cmd->add_option("--method", method_name, "method label for the summary rows");
    evaluate_cmd->add_option("--alpha", eval_alpha, "coverage miss level");
    evaluate_cmd->add_option("--out", out_dir, "output summary CSV")->required();

    // ---- report -----------------------------------------------------------
    CLI::App* report_cmd = app.add_subcommand("report", "merge summary CSVs into one table");
    std::vector<std::string> summary_files;
    report_cmd->add_option("--inputs", summary_files, "summary CSVs to merge")->required();
    report_cmd->add_option("--out", out_dir, "merged CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed() || lqr_cmd->parsed()) {
            nkf::json raw = load_config(config_path, seed_override);
            nkf::ExperimentConfig config = nkf::experiment_config_from_json(raw);
            if (lqr_cmd->parsed() && config.kind != "lti-regulation") {
                throw nkf::config_error("lqr subcommand requires kind = lti-regulation");
            }
            nkf::ExperimentResult result = nkf::run_experiment(config, raw, out_dir, jobs);
            for (const auto& status : result.statuses) {
                std::cout << status.name << ": " << status.status << "\n";
            }
            if (nkf::probit_rho_clamp_count().load() > 0) {
                std::cerr << "warning: " << nkf::probit_rho_clamp_count().load()
                          << " probit correlation clamp(s) applied\n";
            }
            return result.any_ok() ? kExitOk : kExitNumerical;
        }

        if (generate_cmd->parsed()) {
            nkf::json raw = load_config(config_path, seed_override);
            nkf::ExperimentConfig config = nkf::experiment_config_from_json(raw);
            std::filesystem::create_directories(out_dir + "/data");
            std::uint64_t system_seed =
                nkf::derive_stream_key(config.seed, 0, nkf::StreamRole::weights);
            if (config.kind == "lorenz") {
                nkf::LorenzConfig lorenz = nkf::lorenz_config_from_json(config.system);
                const Eigen::Index train_steps = config.system.value("train_steps", 20000);
                nkf::LorenzTrajectory train = nkf::simulate_lorenz(
                    lorenz, train_steps,
                    nkf::derive_stream_key(config.seed, 0, nkf::StreamRole::sampling));
                nkf::write_trajectory_csv(out_dir + "/train_data.csv",
                                          train.states.rightCols(train_steps),
                                          Eigen::MatrixXd(0, train_steps), train.measurements);
                for (int rep = 0; rep < config.replications; ++rep) {
                    nkf::LorenzTrajectory test = nkf::simulate_lorenz(
                        lorenz, config.horizon,
                        nkf::derive_stream_key(config.seed, 1, nkf::StreamRole::sampling),
                        static_cast<std::uint64_t>(rep));
                    nkf::write_trajectory_csv(
                        out_dir + "/data/rep_" + std::to_string(rep) + ".csv",
                        test.states.rightCols(config.horizon), Eigen::MatrixXd(0, config.horizon),
                        test.measurements);
                }
            } else {
                nkf::DynamicModel model;
                Eigen::MatrixXd inputs;
                if (config.kind == "network-truth") {
                    model = nkf::make_network_truth_system(
                        nkf::network_truth_config_from_json(config.system), system_seed);
                    inputs = Eigen::MatrixXd(0, config.horizon);
                } else {
                    nkf::WienerSystemSpec spec = nkf::wiener_spec_from_json(
                        config.system, config.kind == "lti-regulation");
                    model = nkf::make_wiener_system(spec, system_seed);
                    inputs = nkf::sinusoid_input(config.horizon, spec.input_frequency);
                }
                nkf::write_json_file(out_dir + "/model.json", nkf::model_to_json(model));
                if (config.kind != "lti-regulation") {
                    for (int rep = 0; rep < config.replications; ++rep) {
                        nkf::SimulatedTrajectory traj = nkf::simulate_model(
                            model, inputs, config.seed, static_cast<std::uint64_t>(rep));
                        nkf::write_trajectory_csv(
                            out_dir + "/data/rep_" + std::to_string(rep) + ".csv",
                            traj.states.rightCols(config.horizon), inputs, traj.outputs);
                    }
                }
            }
            return kExitOk;
        }

        if (train_cmd->parsed()) {
            nkf::json raw = load_config(config_path, std::nullopt);
            nkf::ExperimentConfig config = nkf::experiment_config_from_json(raw);
            if (config.kind != "lorenz") {
                throw nkf::config_error("train currently supports the lorenz kind only");
            }
            nkf::LorenzConfig lorenz = nkf::lorenz_config_from_json(config.system);
            nkf::TrainingConfig training = nkf::training_config_from_json(config.training);
            nkf::TrajectoryData data = nkf::read_trajectory_csv(train_data_path);
            // Rebuild the (x_{t-1} -> x_t) pairs, prepending the initial state.
            Eigen::MatrixXd states(3, data.states.cols() + 1);
            states.col(0) = lorenz.x0;
            states.rightCols(data.states.cols()) = data.states;
            nkf::TransitionDataset dataset = nkf::make_transition_dataset(
                states, Eigen::MatrixXd(0, data.states.cols()));
            nkf::TrainingReport report = nkf::fit(training, dataset);

            std::filesystem::create_directories(out_dir);
            nkf::write_json_file(out_dir + "/surrogate.json",
                                 nkf::network_to_json(report.network));
            nkf::write_json_file(out_dir + "/surrogate_opt.json",
                                 nkf::optimizer_state_to_json(report.optimizer_state));
            nkf::CsvWriter curve(out_dir + "/training_curve.csv");
            curve.header({"epoch", "loss"});
            for (std::size_t e = 0; e < report.loss_curve.size(); ++e) {
                curve.numeric_row({static_cast<double>(e + 1), report.loss_curve[e]});
            }
            nkf::DynamicModel model = nkf::make_lorenz_filter_model(
                report.network, nkf::symmetrize_psd(report.q_hat), lorenz);
            nkf::write_json_file(out_dir + "/model.json", nkf::model_to_json(model));
            return kExitOk;
        }

        if (filter_cmd->parsed() || smooth_cmd->parsed()) {
            nkf::DynamicModel model = nkf::model_from_json(nkf::read_json_file(model_path));
            nkf::TrajectoryData data = nkf::read_trajectory_csv(data_path);
            try {
                nkf::RunRecord record = run_estimation(model, data, method_flags.to_spec(),
                                                       smooth_cmd->parsed());
                nkf::write_run_record_csv(run_out, record);
            } catch (const nkf::numerical_error& e) {
                std::cerr << "numerical failure: " << e.what() << "\n";
                return kExitNumerical;
            }
            return kExitOk;
        }

        if (evaluate_cmd->parsed()) {
            std::vector<nkf::RunRecord> records;
            for (const std::string& file : run_files) {
                records.push_back(nkf::read_run_record_csv(file));
            }
            std::vector<std::pair<std::string, nkf::MetricSummary>> rows;
            for (const auto& summary : nkf::evaluate_run(records, eval_alpha)) {
                rows.emplace_back(method_name, summary);
            }
            nkf::write_summary_csv(out_dir, rows);
            return kExitOk;
        }

        if (report_cmd->parsed()) {
            std::map<std::string, std::vector<std::string>> merged;  // key -> full row cells
            std::vector<std::string> order;
            for (const std::string& file : summary_files) {
                std::ifstream in(file);
                if (!in) throw nkf::config_error("cannot open for reading: " + file);
                std::string line;
                if (!std::getline(in, line) ||
                    !line.starts_with("method,task,metric,value,stderr,n_reps")) {
                    throw nkf::config_error(file + ": not a summary CSV");
                }
                while (std::getline(in, line)) {
                    if (line.empty()) continue;
                    std::stringstream ss(line);
                    std::string cell;
                    std::vector<std::string> cells;
                    while (std::getline(ss, cell, ',')) cells.push_back(cell);
                    if (cells.size() != 6) throw nkf::config_error(file + ": malformed row");
                    std::string key = cells[0] + "|" + cells[1] + "|" + cells[2];
                    if (merged.contains(key)) {
                        throw nkf::config_error("duplicate key in report inputs: " + key);
                    }
                    merged[key] = cells;
                    order.push_back(key);
                }
            }
            nkf::CsvWriter csv(out_dir);
            csv.header({"method", "task", "metric", "value", "stderr", "n_reps"});
            for (const std::string& key : order) csv.row_of_strings(merged[key]);
            return kExitOk;
        }
    } catch (const nkf::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const nkf::dimension_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const nkf::numerical_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
