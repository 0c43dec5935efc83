#include "chaosflow/errors.hpp"
#include "chaosflow/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

void report_outcome(const chaosflow::StageOutcome& outcome) {
    const auto manifest = nlohmann::json::parse(outcome.manifest_json);
    std::cout << manifest["stage"].get<std::string>() << ": ok ("
              << manifest["wall_time_seconds"].get<double>() << "s)\n";
    if (outcome.rollout_diverged)
        std::cerr << "chaosflow: warning: rollout left the finite range and was truncated; "
                     "see the predict manifest for the step index\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"learn discrete flow maps of chaotic systems and check their long-run statistics"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "chaosflow 0.1.0");

    std::string config_path;
    std::string out_dir;
    std::string stage_in;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;

    const std::vector<std::pair<std::string, std::string>> stages = {
        {"simulate", "integrate the configured system into train/test trajectories"},
        {"make-dataset", "project observed channels and sample training windows"},
        {"train", "fit the flow-map network on the sampled windows"},
        {"predict", "roll the trained model forward from the test seed window"},
        {"evaluate", "compute chaos statistics for reference and prediction"},
        {"compare", "tabulate reference-vs-prediction metric differences"},
        {"run-all", "run every stage in order against one output directory"},
    };
    for (const auto& [name, help] : stages) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "experiment config (JSON)")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory for artifacts and manifests")
            ->required();
        sub->add_option("--stage-in", stage_in,
                        "directory holding upstream artifacts (default: --out)");
        sub->add_option("--seed", seed,
                        "override sampling/training seeds (dataset gets s, training s+1)");
        sub->add_option("--threads", threads,
                        "worker thread count (default: CHAOSFLOW_THREADS or all cores)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const chaosflow::ExperimentConfig config = chaosflow::load_experiment_config(config_path);
        chaosflow::StageOptions opts;
        opts.out_dir = out_dir;
        opts.stage_in = stage_in;
        opts.seed_override = seed;
        opts.threads = threads;

        if (command == "run-all") {
            for (const auto& outcome : chaosflow::run_all(config, opts)) report_outcome(outcome);
        } else {
            report_outcome(chaosflow::run_stage(config, chaosflow::parse_stage(command), opts));
        }
        return 0;
    } catch (const chaosflow::ConfigInvalid& e) {
        std::cerr << "chaosflow: invalid config: " << e.what() << '\n';
        return 2;
    } catch (const chaosflow::UpstreamMissing& e) {
        std::cerr << "chaosflow: " << e.what() << '\n';
        return 3;
    } catch (const chaosflow::FingerprintMismatch& e) {
        std::cerr << "chaosflow: " << e.what() << '\n';
        return 3;
    } catch (const chaosflow::IncomparableReports& e) {
        std::cerr << "chaosflow: " << e.what() << '\n';
        return 3;
    } catch (const chaosflow::FormatError& e) {
        std::cerr << "chaosflow: " << e.what() << '\n';
        return 3;
    } catch (const chaosflow::TrainingDiverged& e) {
        std::cerr << "chaosflow: " << e.what() << '\n';
        return 4;
    } catch (const chaosflow::IntegrationDiverged& e) {
        std::cerr << "chaosflow: " << e.what() << '\n';
        return 4;
    } catch (const chaosflow::DivergedRollout& e) {
        std::cerr << "chaosflow: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "chaosflow: error: " << e.what() << '\n';
        return 1;
    }
}
