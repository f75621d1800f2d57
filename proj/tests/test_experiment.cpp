#include "nkf/experiment.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "support/oracles.hpp"

using namespace nkf;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

json smoke_config(const std::string& kind) {
    json config{{"format_version", 1},
                {"kind", kind},
                {"horizon", 10},
                {"replications", 2},
                {"seed", 12345},
                {"methods", json::array({json{{"method", "analytic"}},
                                         json{{"method", "linearized"}}})}};
    if (kind == "lorenz") {
        config["system"] = json{{"dt", 0.05}, {"substeps", 10}, {"train_steps", 200}};
        config["training"] = json{{"epochs", 5}, {"minibatch", 64}, {"width", 8}, {"depth", 2}};
    }
    return config;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path);
    EXPECT_TRUE(in.good()) << path;
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(RunExperiment, NetworkTruthSmokeEmitsAllFiles) {
    fs::path dir = fresh_dir("nkf_exp_nt");
    json raw = smoke_config("network-truth");
    ExperimentConfig config = experiment_config_from_json(raw);
    ExperimentResult result = run_experiment(config, raw, dir.string());
    EXPECT_TRUE(result.any_ok());

    for (const char* file :
         {"manifest.json", "model.json", "summary.csv", "coverage_curves.csv", "status.csv",
          "data/rep_0.csv", "data/rep_1.csv", "runs/analytic_rep0.csv",
          "runs/linearized_rep1.csv", "trajectory_analytic.csv"}) {
        EXPECT_TRUE(fs::exists(dir / file)) << file;
    }
    // 2 methods x 3 tasks x 4 metrics.
    EXPECT_EQ(result.summaries.size(), 24u);
    fs::remove_all(dir);
}

TEST(RunExperiment, RerunIsBitIdentical) {
    fs::path dir_a = fresh_dir("nkf_exp_det_a");
    fs::path dir_b = fresh_dir("nkf_exp_det_b");
    json raw = smoke_config("network-truth");
    ExperimentConfig config = experiment_config_from_json(raw);
    run_experiment(config, raw, dir_a.string(), 1);
    run_experiment(config, raw, dir_b.string(), 2);  // different pool size

    for (const char* file : {"manifest.json", "summary.csv", "coverage_curves.csv",
                             "runs/analytic_rep0.csv", "runs/analytic_rep1.csv",
                             "data/rep_0.csv", "trajectory_analytic.csv"}) {
        EXPECT_EQ(read_file(dir_a / file), read_file(dir_b / file)) << file;
    }
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST(RunExperiment, WienerSmokeHasSummariesForBothMethods) {
    fs::path dir = fresh_dir("nkf_exp_wiener");
    json raw = smoke_config("wiener-estimation");
    ExperimentConfig config = experiment_config_from_json(raw);
    ExperimentResult result = run_experiment(config, raw, dir.string());
    EXPECT_TRUE(result.any_ok());
    int analytic_rows = 0, linearized_rows = 0;
    for (const auto& [method, summary] : result.summaries) {
        if (method == "analytic") ++analytic_rows;
        if (method == "linearized") ++linearized_rows;
    }
    EXPECT_EQ(analytic_rows, 12);
    EXPECT_EQ(linearized_rows, 12);
    fs::remove_all(dir);
}

TEST(RunExperiment, LorenzSmokeTrainsAndFilters) {
    fs::path dir = fresh_dir("nkf_exp_lorenz");
    json raw = smoke_config("lorenz");
    ExperimentConfig config = experiment_config_from_json(raw);
    ExperimentResult result = run_experiment(config, raw, dir.string());
    EXPECT_TRUE(result.any_ok());
    for (const char* file : {"surrogate.json", "surrogate_opt.json", "training_curve.csv",
                             "model.json", "summary.csv"}) {
        EXPECT_TRUE(fs::exists(dir / file)) << file;
    }
    fs::remove_all(dir);
}

TEST(RunExperiment, RegulationSmokeWritesCosts) {
    fs::path dir = fresh_dir("nkf_exp_reg");
    json raw = smoke_config("lti-regulation");
    raw["horizon"] = 50;
    ExperimentConfig config = experiment_config_from_json(raw);
    ExperimentResult result = run_experiment(config, raw, dir.string());
    EXPECT_TRUE(fs::exists(dir / "lqr_costs.csv"));
    EXPECT_TRUE(fs::exists(dir / "model.json"));
    std::string costs = read_file(dir / "lqr_costs.csv");
    EXPECT_NE(costs.find("analytic,0"), std::string::npos);
    EXPECT_NE(costs.find("linearized,1"), std::string::npos);
    EXPECT_TRUE(result.any_ok());
    fs::remove_all(dir);
}

TEST(RunExperiment, MethodFailureIsIsolated) {
    // An absurd unscented02 kappa (n + kappa < 0) fails while analytic
    // proceeds; the failure lands in the status, not an exception.
    fs::path dir = fresh_dir("nkf_exp_isolate");
    json raw = smoke_config("network-truth");
    raw["methods"] = json::array(
        {json{{"method", "analytic"}},
         json{{"method", "unscented95"}, {"kappa", -100.0}, {"name", "broken"}}});
    ExperimentConfig config = experiment_config_from_json(raw);
    ExperimentResult result = run_experiment(config, raw, dir.string());
    EXPECT_TRUE(result.any_ok());
    ASSERT_EQ(result.statuses.size(), 2u);
    EXPECT_EQ(result.statuses[0].status, "ok");
    EXPECT_TRUE(result.statuses[1].status.starts_with("failed:"))
        << result.statuses[1].status;
    std::string status = read_file(dir / "status.csv");
    EXPECT_NE(status.find("broken,failed:"), std::string::npos);
    fs::remove_all(dir);
}

TEST(Pipeline, GenerateFilterEvaluateMatchesRunExperiment) {
    // The composed subcommands and the end-to-end runner agree on the
    // summary rows for the same config.
    fs::path run_dir = fresh_dir("nkf_pipe_run");
    json raw = smoke_config("network-truth");
    ExperimentConfig config = experiment_config_from_json(raw);
    ExperimentResult direct = run_experiment(config, raw, run_dir.string());

    DynamicModel model = model_from_json(read_json_file((run_dir / "model.json").string()));
    std::vector<RunRecord> records;
    for (int rep = 0; rep < config.replications; ++rep) {
        TrajectoryData data = read_trajectory_csv(
            (run_dir / ("data/rep_" + std::to_string(rep) + ".csv")).string());
        RunRecord record;
        record.truth = data.states;
        record.filter = filter_run(model, data.inputs, data.outputs, PropagatorSpec::analytic());
        record.smoother = smoother_run(model, data.inputs, PropagatorSpec::analytic(),
                                       record.filter);
        records.push_back(std::move(record));
    }
    auto summaries = evaluate_run(records, config.alpha);
    for (const auto& summary : summaries) {
        bool matched = false;
        for (const auto& [method, direct_summary] : direct.summaries) {
            if (method == "analytic" && direct_summary.metric == summary.metric &&
                direct_summary.task == summary.task) {
                EXPECT_NEAR(direct_summary.value, summary.value,
                            1e-12 * std::max(1.0, std::abs(summary.value)))
                    << summary.metric << "/" << summary.task;
                matched = true;
            }
        }
        EXPECT_TRUE(matched) << summary.metric;
    }
    fs::remove_all(run_dir);
}

#ifdef NKF_CLI_PATH
TEST(Cli, EndToEndSubcommands) {
    fs::path dir = fresh_dir("nkf_cli_e2e");
    json raw = smoke_config("network-truth");
    write_json_file((dir / "config.json").string(), raw);

    const std::string cli = NKF_CLI_PATH;
    auto run = [&](const std::string& args) {
        std::string cmd = cli + " " + args + " >/dev/null 2>&1";
        return std::system(cmd.c_str());
    };
    EXPECT_EQ(run("run --config " + (dir / "config.json").string() + " --out " +
                  (dir / "out").string() + " --jobs 2"),
              0);
    EXPECT_TRUE(fs::exists(dir / "out/summary.csv"));

    EXPECT_EQ(run("generate --config " + (dir / "config.json").string() + " --out " +
                  (dir / "gen").string()),
              0);
    EXPECT_EQ(run("filter --model " + (dir / "gen/model.json").string() + " --data " +
                  (dir / "gen/data/rep_0.csv").string() + " --method analytic --out " +
                  (dir / "run0.csv").string()),
              0);
    EXPECT_EQ(run("smooth --model " + (dir / "gen/model.json").string() + " --data " +
                  (dir / "gen/data/rep_1.csv").string() + " --method analytic --out " +
                  (dir / "run1.csv").string()),
              0);
    EXPECT_EQ(run("evaluate --method analytic --runs " + (dir / "run1.csv").string() +
                  " --out " + (dir / "summary1.csv").string()),
              0);

    // Monte Carlo backend passthrough: oracle columns in a run record.
    EXPECT_EQ(run("filter --model " + (dir / "gen/model.json").string() + " --data " +
                  (dir / "gen/data/rep_0.csv").string() +
                  " --method mc --samples 2000 --mc-seed 3 --out " +
                  (dir / "run_mc.csv").string()),
              0);
    EXPECT_EQ(run("evaluate --method oracle --runs " + (dir / "run_mc.csv").string() +
                  " --out " + (dir / "summary_mc.csv").string()),
              0);

    // Merging two distinct summaries works; duplicated keys are rejected.
    EXPECT_EQ(run("report --inputs " + (dir / "summary1.csv").string() + " " +
                  (dir / "summary_mc.csv").string() + " --out " +
                  (dir / "merged.csv").string()),
              0);
    EXPECT_TRUE(fs::exists(dir / "merged.csv"));
    int dup = run("report --inputs " + (dir / "summary1.csv").string() + " " +
                  (dir / "summary1.csv").string() + " --out " +
                  (dir / "merged_dup.csv").string());
    EXPECT_EQ(WEXITSTATUS(dup), 2);

    // Config errors exit with 2.
    json bad = raw;
    bad["kind"] = "bogus";
    write_json_file((dir / "bad.json").string(), bad);
    int code = run("run --config " + (dir / "bad.json").string() + " --out " +
                   (dir / "bad_out").string());
    EXPECT_EQ(WEXITSTATUS(code), 2);
    fs::remove_all(dir);
}
#endif
