#include "chaosflow/pipeline.hpp"

#include "chaosflow/errors.hpp"
#include "chaosflow/hash.hpp"
#include "chaosflow/parallel.hpp"
#include "chaosflow/report_io.hpp"
#include "chaosflow/rollout.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>

namespace chaosflow {

namespace {

using nlohmann::json;

// ---------------------------------------------------------------- config IO

json system_to_json(const SystemSpec& system) {
    json j;
    if (system.is_lorenz63()) {
        const auto& p = std::get<Lorenz63Params>(system.params);
        j["kind"] = "lorenz63";
        j["params"] = {{"sigma", p.sigma}, {"rho", p.rho}, {"beta", p.beta}};
    } else {
        const auto& p = std::get<Lorenz96Params>(system.params);
        j["kind"] = "lorenz96";
        j["params"] = {{"n", p.n}, {"forcing", p.forcing}, {"damping", p.damping}};
    }
    return j;
}

SystemSpec system_from_json(const json& j) {
    SystemSpec system;
    const auto kind = j.at("kind").get<std::string>();
    const json params = j.value("params", json::object());
    if (kind == "lorenz63") {
        Lorenz63Params p;
        p.sigma = params.value("sigma", p.sigma);
        p.rho = params.value("rho", p.rho);
        p.beta = params.value("beta", p.beta);
        system.params = p;
    } else if (kind == "lorenz96") {
        Lorenz96Params p;
        p.n = params.value("n", p.n);
        p.forcing = params.value("forcing", p.forcing);
        p.damping = params.value("damping", p.damping);
        system.params = p;
    } else {
        throw ConfigInvalid({"system.kind: unknown system '" + kind + "'"});
    }
    return system;
}

json metrics_to_json(const MetricsConfig& c) {
    json j;
    j["embedding"] = {{"dim", c.embedding.dim}, {"lag", c.embedding.lag}};
    j["corr_dim"] = {{"n_points", c.corr_dim.n_points},
                     {"n_radii", c.corr_dim.n_radii},
                     {"fit_window", c.corr_dim.fit_window},
                     {"lo_percentile", c.corr_dim.lo_percentile},
                     {"hi_percentile", c.corr_dim.hi_percentile}};
    if (!c.corr_dim.radii_override.empty())
        j["corr_dim"]["radii_override"] = c.corr_dim.radii_override;
    j["apen"] = {{"radius_factor", c.apen.radius_factor}, {"max_points", c.apen.max_points}};
    j["lyapunov"] = {{"k_min", c.lyapunov.k_min},
                     {"k_max", c.lyapunov.k_max},
                     {"min_separation", c.lyapunov.min_separation}};
    j["histogram_bins"] = c.histogram_bins;
    j["acf_max_lag"] = c.acf_max_lag;
    return j;
}

MetricsConfig metrics_from_json(const json& j) {
    MetricsConfig c;
    if (j.contains("embedding")) {
        c.embedding.dim = j["embedding"].value("dim", c.embedding.dim);
        c.embedding.lag = j["embedding"].value("lag", c.embedding.lag);
    }
    if (j.contains("corr_dim")) {
        const auto& cd = j["corr_dim"];
        c.corr_dim.n_points = cd.value("n_points", c.corr_dim.n_points);
        c.corr_dim.n_radii = cd.value("n_radii", c.corr_dim.n_radii);
        c.corr_dim.fit_window = cd.value("fit_window", c.corr_dim.fit_window);
        c.corr_dim.lo_percentile = cd.value("lo_percentile", c.corr_dim.lo_percentile);
        c.corr_dim.hi_percentile = cd.value("hi_percentile", c.corr_dim.hi_percentile);
        c.corr_dim.radii_override =
            cd.value("radii_override", c.corr_dim.radii_override);
    }
    if (j.contains("apen")) {
        c.apen.radius_factor = j["apen"].value("radius_factor", c.apen.radius_factor);
        c.apen.max_points = j["apen"].value("max_points", c.apen.max_points);
    }
    if (j.contains("lyapunov")) {
        c.lyapunov.k_min = j["lyapunov"].value("k_min", c.lyapunov.k_min);
        c.lyapunov.k_max = j["lyapunov"].value("k_max", c.lyapunov.k_max);
        c.lyapunov.min_separation =
            j["lyapunov"].value("min_separation", c.lyapunov.min_separation);
    }
    c.histogram_bins = j.value("histogram_bins", c.histogram_bins);
    c.acf_max_lag = j.value("acf_max_lag", c.acf_max_lag);
    return c;
}

} // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigInvalid({std::string("config is not valid JSON: ") + e.what()});
    }
    try {
        ExperimentConfig c;
        c.name = j.value("name", std::string("unnamed"));
        c.version = j.value("version", 1);
        c.system = system_from_json(j.at("system"));
        c.observation.indices = j.at("observation").at("indices").get<std::vector<int>>();
        const auto& sim = j.at("simulate");
        c.simulate.dt = sim.at("dt").get<double>();
        c.simulate.horizon = sim.at("horizon").get<double>();
        c.simulate.initial = sim.at("initial").get<std::vector<double>>();
        c.simulate.substeps = sim.value("substeps", 10);
        const auto& ds = j.at("dataset");
        c.dataset.spec.m_sequences = ds.at("m_sequences").get<std::size_t>();
        c.dataset.spec.memory_len = ds.at("memory_len").get<int>();
        c.dataset.spec.recurrent_len = ds.at("recurrent_len").get<int>();
        c.dataset.spec.seed = ds.at("seed").get<std::uint64_t>();
        c.dataset.normalize = ds.value("normalize", false);
        const auto& model = j.at("model");
        c.model.hidden_layers = model.at("hidden_layers").get<std::vector<int>>();
        c.model.memory_len = model.value("memory_len", c.dataset.spec.memory_len);
        const auto& train = j.at("train");
        c.train.epochs = train.at("epochs").get<std::size_t>();
        c.train.batch_size = train.at("batch_size").get<std::size_t>();
        c.train.learning_rate = train.at("learning_rate").get<double>();
        c.train.recurrent_len = train.value("recurrent_len", c.dataset.spec.recurrent_len);
        c.train.seed = train.at("seed").get<std::uint64_t>();
        c.train.shuffle = train.value("shuffle", true);
        const auto& test = j.at("test");
        c.test.initial = test.at("initial").get<std::vector<double>>();
        c.test.horizon = test.at("horizon").get<double>();
        c.metrics = metrics_from_json(j.value("metrics", json::object()));
        return c;
    } catch (const json::exception& e) {
        throw ConfigInvalid({std::string("config missing required field: ") + e.what()});
    }
}

std::string config_to_json_text(const ExperimentConfig& c) {
    json j;
    j["name"] = c.name;
    j["version"] = c.version;
    j["system"] = system_to_json(c.system);
    j["observation"] = {{"indices", c.observation.indices}};
    j["simulate"] = {{"dt", c.simulate.dt},
                     {"horizon", c.simulate.horizon},
                     {"initial", c.simulate.initial},
                     {"substeps", c.simulate.substeps}};
    j["dataset"] = {{"m_sequences", c.dataset.spec.m_sequences},
                    {"memory_len", c.dataset.spec.memory_len},
                    {"recurrent_len", c.dataset.spec.recurrent_len},
                    {"seed", c.dataset.spec.seed},
                    {"normalize", c.dataset.normalize}};
    j["model"] = {{"hidden_layers", c.model.hidden_layers},
                  {"memory_len", c.model.memory_len}};
    j["train"] = {{"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"learning_rate", c.train.learning_rate},
                  {"recurrent_len", c.train.recurrent_len},
                  {"seed", c.train.seed},
                  {"shuffle", c.train.shuffle}};
    j["test"] = {{"initial", c.test.initial}, {"horizon", c.test.horizon}};
    j["metrics"] = metrics_to_json(c.metrics);
    return j.dump(2);
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigInvalid({"cannot open config file: " + path.string()});
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return config_from_json_text(text);
}

std::uint64_t config_hash(const ExperimentConfig& config) {
    return fnv1a64(config_to_json_text(config));
}

namespace {

std::size_t steps_for(double horizon, double dt) {
    return static_cast<std::size_t>(std::llround(horizon / dt));
}

} // namespace

std::vector<std::string> validate_config(const ExperimentConfig& c) {
    std::vector<std::string> v;
    auto bad = [&](const std::string& msg) { v.push_back(msg); };

    int dim = 0;
    if (c.system.is_lorenz63()) {
        const auto& p = std::get<Lorenz63Params>(c.system.params);
        if (!std::isfinite(p.sigma) || !std::isfinite(p.rho) || !std::isfinite(p.beta))
            bad("system.params: sigma/rho/beta must be finite");
        dim = 3;
    } else {
        const auto& p = std::get<Lorenz96Params>(c.system.params);
        if (p.n < 4) bad("system.params.n: must be >= 4");
        if (!std::isfinite(p.forcing)) bad("system.params.forcing: must be finite");
        if (!(p.damping >= 0.0)) bad("system.params.damping: must be >= 0");
        dim = p.n;
    }

    if (c.observation.indices.empty()) bad("observation.indices: must be non-empty");
    for (std::size_t i = 0; i < c.observation.indices.size(); ++i) {
        const int idx = c.observation.indices[i];
        if (idx < 0 || idx >= dim)
            bad("observation.indices[" + std::to_string(i) + "]: " + std::to_string(idx) +
                " out of range for system dimension " + std::to_string(dim));
        if (i > 0 && idx <= c.observation.indices[i - 1])
            bad("observation.indices: must be strictly increasing");
    }

    if (!(c.simulate.dt > 0.0)) bad("simulate.dt: must be > 0");
    if (!(c.simulate.horizon > 0.0)) bad("simulate.horizon: must be > 0");
    if (c.simulate.substeps < 1) bad("simulate.substeps: must be >= 1");
    if (c.simulate.initial.size() != static_cast<std::size_t>(dim))
        bad("simulate.initial: has " + std::to_string(c.simulate.initial.size()) +
            " components, system dimension is " + std::to_string(dim));

    if (c.dataset.spec.m_sequences < 1) bad("dataset.m_sequences: must be >= 1");
    if (c.dataset.spec.memory_len < 0) bad("dataset.memory_len: must be >= 0");
    if (c.dataset.spec.recurrent_len < 1) bad("dataset.recurrent_len: must be >= 1");
    if (c.simulate.dt > 0.0 && c.simulate.horizon > 0.0) {
        const std::size_t rows = steps_for(c.simulate.horizon, c.simulate.dt) + 1;
        if (rows < static_cast<std::size_t>(c.dataset.spec.window_len()))
            bad("dataset: window length " + std::to_string(c.dataset.spec.window_len()) +
                " does not fit in the simulated trajectory of " + std::to_string(rows) +
                " rows (simulate.horizon)");
    }

    for (std::size_t i = 0; i < c.model.hidden_layers.size(); ++i)
        if (c.model.hidden_layers[i] < 1)
            bad("model.hidden_layers[" + std::to_string(i) + "]: must be >= 1");
    if (c.model.memory_len != c.dataset.spec.memory_len)
        bad("model.memory_len (" + std::to_string(c.model.memory_len) +
            ") and dataset.memory_len (" + std::to_string(c.dataset.spec.memory_len) +
            ") must agree");

    if (c.train.epochs < 1) bad("train.epochs: must be >= 1");
    if (c.train.batch_size < 1 || c.train.batch_size > c.dataset.spec.m_sequences)
        bad("train.batch_size: must be in [1, dataset.m_sequences]");
    if (!(c.train.learning_rate > 0.0)) bad("train.learning_rate: must be > 0");
    if (c.train.recurrent_len != c.dataset.spec.recurrent_len)
        bad("train.recurrent_len (" + std::to_string(c.train.recurrent_len) +
            ") and dataset.recurrent_len (" + std::to_string(c.dataset.spec.recurrent_len) +
            ") must agree");

    if (c.test.initial.size() != static_cast<std::size_t>(dim))
        bad("test.initial: has " + std::to_string(c.test.initial.size()) +
            " components, system dimension is " + std::to_string(dim));
    if (!(c.test.horizon > 0.0)) bad("test.horizon: must be > 0");
    if (c.simulate.dt > 0.0 && c.test.horizon > 0.0) {
        const std::size_t rows = steps_for(c.test.horizon, c.simulate.dt) + 1;
        if (rows < static_cast<std::size_t>(c.dataset.spec.memory_len) + 2)
            bad("test.horizon: too short to seed a window of memory_len " +
                std::to_string(c.dataset.spec.memory_len) + " and predict at least one step");
    }

    if (c.metrics.embedding.dim < 1) bad("metrics.embedding.dim: must be >= 1");
    if (c.metrics.embedding.lag < 1) bad("metrics.embedding.lag: must be >= 1");
    if (c.metrics.corr_dim.n_points < 100) bad("metrics.corr_dim.n_points: must be >= 100");
    if (c.metrics.corr_dim.radii_override.empty() && c.metrics.corr_dim.n_radii < 10)
        bad("metrics.corr_dim.n_radii: must be >= 10");
    if (!(c.metrics.corr_dim.fit_window > 0.0 && c.metrics.corr_dim.fit_window <= 1.0))
        bad("metrics.corr_dim.fit_window: must be in (0, 1]");
    if (!(c.metrics.corr_dim.lo_percentile >= 0.0 &&
          c.metrics.corr_dim.lo_percentile < c.metrics.corr_dim.hi_percentile &&
          c.metrics.corr_dim.hi_percentile <= 100.0))
        bad("metrics.corr_dim: need 0 <= lo_percentile < hi_percentile <= 100");
    if (!(c.metrics.apen.radius_factor > 0.0))
        bad("metrics.apen.radius_factor: must be > 0");
    if (c.metrics.apen.max_points < 1) bad("metrics.apen.max_points: must be >= 1");
    if (c.metrics.lyapunov.k_min < 1 || c.metrics.lyapunov.k_min > c.metrics.lyapunov.k_max)
        bad("metrics.lyapunov: need 1 <= k_min <= k_max");
    if (c.metrics.lyapunov.min_separation < 0)
        bad("metrics.lyapunov.min_separation: must be >= 0 (0 selects the ACF heuristic)");
    if (c.metrics.histogram_bins < 1) bad("metrics.histogram_bins: must be >= 1");
    if (c.metrics.acf_max_lag < 1) bad("metrics.acf_max_lag: must be >= 1");

    return v;
}

Stage parse_stage(const std::string& name) {
    if (name == "simulate") return Stage::Simulate;
    if (name == "make-dataset") return Stage::MakeDataset;
    if (name == "train") return Stage::Train;
    if (name == "predict") return Stage::Predict;
    if (name == "evaluate") return Stage::Evaluate;
    if (name == "compare") return Stage::Compare;
    throw ConfigInvalid({"unknown stage '" + name + "'"});
}

std::string stage_name(Stage stage) {
    switch (stage) {
    case Stage::Simulate: return "simulate";
    case Stage::MakeDataset: return "make-dataset";
    case Stage::Train: return "train";
    case Stage::Predict: return "predict";
    case Stage::Evaluate: return "evaluate";
    case Stage::Compare: return "compare";
    }
    throw Error("unreachable stage");
}

namespace {

// Which stage produces each pipeline artifact; consumers use this to locate
// the manifest that recorded the artifact's hash.
const std::map<std::string, std::string>& artifact_producers() {
    static const std::map<std::string, std::string> producers = {
        {"train.cftj", "simulate"},       {"test.cftj", "simulate"},
        {"dataset.cfds", "make-dataset"}, {"dataset.cfds.json", "make-dataset"},
        {"model.cfnn", "train"},          {"train_history.csv", "train"},
        {"prediction.cftj", "predict"},   {"prediction.json", "predict"},
        {"report_ref.json", "evaluate"},  {"report_pred.json", "evaluate"},
    };
    return producers;
}

class StageRunner {
public:
    StageRunner(const ExperimentConfig& config, Stage stage, const StageOptions& opts)
        : config_(config), stage_(stage), opts_(opts),
          in_dir_(opts.stage_in.empty() ? opts.out_dir : opts.stage_in) {}

    StageOutcome run() {
        const auto violations = validate_config(config_);
        if (!violations.empty()) throw ConfigInvalid(violations);
        if (opts_.threads) set_thread_count(*opts_.threads);
        std::filesystem::create_directories(opts_.out_dir);

        const auto started = std::chrono::steady_clock::now();
        switch (stage_) {
        case Stage::Simulate: run_simulate(); break;
        case Stage::MakeDataset: run_make_dataset(); break;
        case Stage::Train: run_train(); break;
        case Stage::Predict: run_predict(); break;
        case Stage::Evaluate: run_evaluate(); break;
        case Stage::Compare: run_compare(); break;
        }
        const std::chrono::duration<double> elapsed =
            std::chrono::steady_clock::now() - started;

        json manifest;
        manifest["stage"] = stage_name(stage_);
        manifest["version"] = 1;
        manifest["config_name"] = config_.name;
        manifest["config_hash"] = hex64(config_hash(config_));
        manifest["inputs"] = inputs_;
        manifest["outputs"] = outputs_;
        manifest["wall_time_seconds"] = elapsed.count();
        for (auto& [key, value] : extra_.items()) manifest[key] = value;

        StageOutcome outcome;
        outcome.rollout_diverged = rollout_diverged_;
        outcome.manifest_json = manifest.dump(2);
        write_text(stage_name(stage_) + ".manifest.json", outcome.manifest_json + "\n");
        return outcome;
    }

private:
    // Verifies the artifact against the hash its producer recorded, when that
    // manifest is available; user-supplied artifacts pass through unchecked.
    std::filesystem::path input(const std::string& name) {
        const auto path = in_dir_ / name;
        if (!std::filesystem::exists(path))
            throw UpstreamMissing("required input artifact missing: " + path.string() +
                                  " (run the producing stage first or set --stage-in)");
        const std::uint64_t actual = hash_file(path);
        const auto producer = artifact_producers().find(name);
        if (producer != artifact_producers().end()) {
            const auto manifest_path = in_dir_ / (producer->second + ".manifest.json");
            if (std::filesystem::exists(manifest_path)) {
                std::ifstream is(manifest_path);
                json manifest;
                try {
                    manifest = json::parse(std::string((std::istreambuf_iterator<char>(is)),
                                                       std::istreambuf_iterator<char>()));
                } catch (const json::exception& e) {
                    throw FormatError("corrupt manifest " + manifest_path.string() + ": " +
                                      e.what());
                }
                if (manifest.contains("outputs") && manifest["outputs"].contains(name)) {
                    const auto recorded = manifest["outputs"][name].get<std::string>();
                    if (parse_hex64(recorded) != actual)
                        throw FingerprintMismatch(
                            "artifact " + path.string() + " does not match the hash in " +
                            manifest_path.string() + " (stale or corrupted pipeline)");
                }
            }
        }
        inputs_[name] = hex64(actual);
        return path;
    }

    std::filesystem::path out_path(const std::string& name) const { return opts_.out_dir / name; }

    // All artifacts land via temp + rename so readers never see partial files.
    void write_artifact(const std::string& name,
                        const std::function<void(const std::filesystem::path&)>& writer) {
        const auto final_path = out_path(name);
        auto tmp_path = final_path;
        tmp_path += ".tmp";
        writer(tmp_path);
        std::filesystem::rename(tmp_path, final_path);
        outputs_[name] = hex64(hash_file(final_path));
    }

    void write_text(const std::string& name, const std::string& text) {
        write_artifact(name, [&](const std::filesystem::path& p) {
            std::ofstream os(p);
            if (!os) throw FormatError("cannot open for writing: " + p.string());
            os << text;
            if (!os) throw FormatError("write failure on " + p.string());
        });
    }

    ExperimentConfig effective_config() const {
        ExperimentConfig c = config_;
        if (opts_.seed_override) {
            c.dataset.spec.seed = *opts_.seed_override;
            c.train.seed = *opts_.seed_override + 1;
        }
        return c;
    }

    // ------------------------------------------------------------- stages

    void run_simulate() {
        const ExperimentConfig c = effective_config();
        const int dim = c.system.dimension();
        const Eigen::VectorXd x0 =
            Eigen::Map<const Eigen::VectorXd>(c.simulate.initial.data(), dim);
        const Eigen::VectorXd x0_test =
            Eigen::Map<const Eigen::VectorXd>(c.test.initial.data(), dim);

        const Trajectory train_traj = integrate(c.system, x0, c.simulate.dt,
                                                steps_for(c.simulate.horizon, c.simulate.dt),
                                                c.simulate.substeps);
        const Trajectory test_traj = integrate(c.system, x0_test, c.simulate.dt,
                                               steps_for(c.test.horizon, c.simulate.dt),
                                               c.simulate.substeps);
        write_artifact("train.cftj",
                       [&](const std::filesystem::path& p) { save_trajectory_binary(train_traj, p); });
        write_artifact("test.cftj",
                       [&](const std::filesystem::path& p) { save_trajectory_binary(test_traj, p); });
        extra_["train_rows"] = train_traj.rows();
        extra_["test_rows"] = test_traj.rows();
    }

    void run_make_dataset() {
        const ExperimentConfig c = effective_config();
        const Trajectory source = load_trajectory(input("train.cftj"));
        const Trajectory observed = project_observed(source, c.observation);
        const SequenceDataset data =
            sample_sequences(observed, c.dataset.spec, c.dataset.normalize);
        write_artifact("dataset.cfds", [&](const std::filesystem::path& p) {
            save_dataset(data, p);
            // save_dataset writes the sidecar next to its target; move it too.
            std::filesystem::rename(p.string() + ".json",
                                    out_path("dataset.cfds.json").string() + ".tmp2");
        });
        std::filesystem::rename(out_path("dataset.cfds.json").string() + ".tmp2",
                                out_path("dataset.cfds.json"));
        outputs_["dataset.cfds.json"] = hex64(hash_file(out_path("dataset.cfds.json")));
        extra_["dataset_fingerprint"] = hex64(dataset_fingerprint(data));
    }

    void run_train() {
        const ExperimentConfig c = effective_config();
        const SequenceDataset data = load_dataset(input("dataset.cfds"));
        if (data.spec.memory_len != c.dataset.spec.memory_len ||
            data.spec.recurrent_len != c.dataset.spec.recurrent_len ||
            data.spec.m_sequences != c.dataset.spec.m_sequences ||
            data.spec.seed != c.dataset.spec.seed)
            throw FingerprintMismatch(
                "dataset.cfds was built with a different dataset section than this config");
        FlowMapModel model =
            init_model(data.obs_dim, c.model.memory_len, c.model.hidden_layers, c.train.seed);
        const TrainResult result = train(model, data, c.train);
        write_artifact("model.cfnn",
                       [&](const std::filesystem::path& p) { save_checkpoint(model, p); });

        std::string history = "epoch,loss\n";
        for (std::size_t e = 0; e < result.epoch_loss.size(); ++e)
            history += std::to_string(e) + "," + format_double(result.epoch_loss[e]) + "\n";
        write_text("train_history.csv", history);
        extra_["final_loss"] = result.epoch_loss.back();
        extra_["model_fingerprint"] = hex64(model_fingerprint(model));
    }

    void run_predict() {
        const ExperimentConfig c = effective_config();
        const FlowMapModel model = load_checkpoint(input("model.cfnn"));
        const Trajectory test_traj = load_trajectory(input("test.cftj"));
        const Trajectory observed = project_observed(test_traj, c.observation);
        if (model.obs_dim != observed.dim() || model.memory_len != c.model.memory_len)
            throw FingerprintMismatch("model.cfnn geometry does not match this config");

        const Eigen::MatrixXd raw_seed = seed_window_from(observed, model.memory_len);
        const auto n_steps =
            static_cast<std::size_t>(observed.rows() - (model.memory_len + 1));

        Eigen::MatrixXd seed = raw_seed;
        if (model.meta.normalization)
            for (Eigen::Index i = 0; i < seed.rows(); ++i)
                seed.row(i) =
                    apply_normalization(*model.meta.normalization, seed.row(i).transpose())
                        .transpose();
        PredictionRun run = predict(model, seed, n_steps, observed.dt, observed.t0,
                                    observed.labels);
        if (model.meta.normalization) {
            for (Eigen::Index i = 0; i < run.predicted.rows(); ++i)
                run.predicted.states.row(i) =
                    invert_normalization(*model.meta.normalization,
                                         run.predicted.states.row(i).transpose())
                        .transpose();
            // The seed rows are the measured history; keep them verbatim
            // rather than round-tripped through the affine transform.
            run.predicted.states.topRows(raw_seed.rows()) = raw_seed;
        }

        write_artifact("prediction.cftj", [&](const std::filesystem::path& p) {
            save_trajectory_binary(run.predicted, p);
        });
        json info;
        info["model_fingerprint"] = hex64(run.model_fingerprint);
        info["requested_steps"] = n_steps;
        info["produced_rows"] = run.predicted.rows();
        info["seed_rows"] = model.memory_len + 1;
        info["dt"] = run.dt;
        info["diverged_at"] =
            run.diverged_at ? json(*run.diverged_at) : json(nullptr);
        write_text("prediction.json", info.dump(2) + "\n");

        rollout_diverged_ = run.diverged_at.has_value();
        extra_["rollout_diverged"] = rollout_diverged_;
        if (run.diverged_at) extra_["diverged_at"] = *run.diverged_at;
    }

    void run_evaluate() {
        const ExperimentConfig c = effective_config();
        const Trajectory test_traj = load_trajectory(input("test.cftj"));
        const Trajectory reference = project_observed(test_traj, c.observation);
        const Trajectory predicted = load_trajectory(input("prediction.cftj"));
        if (predicted.dim() != reference.dim())
            throw FingerprintMismatch("prediction.cftj channel count does not match config");

        MetricsConfig metrics = c.metrics;
        if (metrics.lyapunov.min_separation == 0) {
            // Resolve the ACF heuristic once, from the reference, so both
            // reports use identical estimator settings and stay comparable.
            metrics.lyapunov.min_separation = auto_min_separation(reference);
            extra_["lyapunov_min_separation"] = metrics.lyapunov.min_separation;
        }
        std::vector<std::pair<double, double>> ranges;
        for (Eigen::Index ch = 0; ch < reference.dim(); ++ch)
            ranges.emplace_back(
                std::min(reference.states.col(ch).minCoeff(), predicted.states.col(ch).minCoeff()),
                std::max(reference.states.col(ch).maxCoeff(), predicted.states.col(ch).maxCoeff()));

        const ChaosReport ref_report = analyze(reference, metrics, &ranges);
        const ChaosReport pred_report = analyze(predicted, metrics, &ranges);
        write_artifact("report_ref.json",
                       [&](const std::filesystem::path& p) { save_report(ref_report, p); });
        write_artifact("report_pred.json",
                       [&](const std::filesystem::path& p) { save_report(pred_report, p); });
        write_report_csvs(ref_report, opts_.out_dir, "ref");
        write_report_csvs(pred_report, opts_.out_dir, "pred");
        for (const std::string tag : {"ref", "pred"})
            for (const std::string base : {"acf_", "hist_", "corrdim_", "lyap_", "lambda_"})
                outputs_[base + tag + ".csv"] = hex64(hash_file(out_path(base + tag + ".csv")));

        const Eigen::MatrixXd log_err = pointwise_log_abs_error(predicted, reference);
        std::string err_csv = "t";
        for (const auto& label : reference.labels) err_csv += ",log10_abs_err_" + label;
        err_csv += "\n";
        for (Eigen::Index i = 0; i < log_err.rows(); ++i) {
            err_csv += format_double(reference.time_at(i));
            for (Eigen::Index j = 0; j < log_err.cols(); ++j)
                err_csv += "," + format_double(log_err(i, j));
            err_csv += "\n";
        }
        write_text("pointwise_error.csv", err_csv);

        const bool stable = within_envelope(predicted, trajectory_envelope(reference), 1.5);
        extra_["stability_pass"] = stable;
        extra_["envelope_factor"] = 1.5;
    }

    void run_compare() {
        const ChaosReport ref_report = load_report(input("report_ref.json"));
        const ChaosReport pred_report = load_report(input("report_pred.json"));
        const ComparisonTable table = compare_reports(ref_report, pred_report);

        json j = json::parse(comparison_to_json(table));
        const auto pred_info_path = in_dir_ / "prediction.json";
        if (std::filesystem::exists(pred_info_path)) {
            std::ifstream is(pred_info_path);
            try {
                const json info = json::parse(std::string(
                    (std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>()));
                j["rollout_diverged"] = !info.at("diverged_at").is_null();
                inputs_["prediction.json"] = hex64(hash_file(pred_info_path));
            } catch (const json::exception&) {
                // advisory only; comparison proceeds without the flag
            }
        }
        const auto eval_manifest_path = in_dir_ / "evaluate.manifest.json";
        if (std::filesystem::exists(eval_manifest_path)) {
            std::ifstream is(eval_manifest_path);
            try {
                const json manifest = json::parse(std::string(
                    (std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>()));
                if (manifest.contains("stability_pass")) {
                    j["stability"] = {{"pass", manifest["stability_pass"]},
                                      {"envelope_factor", manifest.value("envelope_factor", 1.5)}};
                }
            } catch (const json::exception&) {
            }
        }
        write_text("comparison.json", j.dump(2) + "\n");
    }

    const ExperimentConfig& config_;
    Stage stage_;
    const StageOptions& opts_;
    std::filesystem::path in_dir_;
    json inputs_ = json::object();
    json outputs_ = json::object();
    json extra_ = json::object();
    bool rollout_diverged_ = false;
};

} // namespace

StageOutcome run_stage(const ExperimentConfig& config, Stage stage, const StageOptions& opts) {
    StageRunner runner(config, stage, opts);
    return runner.run();
}

std::vector<StageOutcome> run_all(const ExperimentConfig& config, const StageOptions& opts) {
    StageOptions chained = opts;
    chained.stage_in = opts.out_dir;
    std::vector<StageOutcome> outcomes;
    for (Stage stage : {Stage::Simulate, Stage::MakeDataset, Stage::Train, Stage::Predict,
                        Stage::Evaluate, Stage::Compare})
        outcomes.push_back(run_stage(config, stage, chained));
    return outcomes;
}

} // namespace chaosflow
