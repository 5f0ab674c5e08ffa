#pragma once

// File-based pipeline behind the command-line tool: one function per stage,
// each reading upstream artifacts from the output directory and writing its
// own. Every artifact carries the config hash and the global seed.

#include <Eigen/Dense>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "modaltl/bayes/posterior.hpp"
#include "modaltl/design/dataset.hpp"
#include "modaltl/errors.hpp"
#include "modaltl/fem/json.hpp"
#include "modaltl/fem/modal.hpp"
#include "modaltl/io/json_util.hpp"
#include "modaltl/io/text.hpp"
#include "modaltl/monitor/scenario.hpp"
#include "modaltl/monitor/stream.hpp"
#include "modaltl/monitor/track.hpp"
#include "modaltl/nn/serialize.hpp"
#include "modaltl/nn/training.hpp"
#include "modaltl/random.hpp"
#include "modaltl/transfer/transfer.hpp"

namespace modaltl::pipeline {

namespace fs = std::filesystem;
using Eigen::Index;
using Eigen::VectorXd;

inline constexpr int config_version = 1;

struct StructureConfig {
    std::string name;
    fem::BeamModel model;
    fem::SensorLayout sensors;
    Index modes = 10;

    fem::ModalAnalyzer analyzer() const { return fem::ModalAnalyzer(model, sensors, modes); }
};

struct PipelineConfig {
    std::string file;          // config path ("" for in-memory configs)
    std::string hash;          // hash of the canonical config JSON
    std::uint64_t seed = 2024;
    unsigned threads = 1;
    std::string out = "run";

    StructureConfig source, target;

    std::string fem_structure = "source";
    VectorXd fem_multipliers;  // empty: undamaged

    double lower = 0.70, upper = 1.05;
    Index source_samples = 2048, target_samples = 512, validation_samples = 512;

    nn::NetworkSpec network;
    nn::TrainConfig train;
    nn::LossConfig loss;

    transfer::MatchWeights weights;
    std::string pairing_file;  // overrides automatic matching when set
    nn::TrainConfig fine_tune;

    std::string monitor_structure = "target";
    std::vector<monitor::DamageScenario> scenarios;
    monitor::StreamConfig stream;
    bayes::TruncatedGaussianPrior prior;
    bayes::LikelihoodConfig likelihood;
    bayes::McmcConfig mcmc;

    std::map<std::string, std::string> paths;  // artifact name -> file relative to `out`

    const StructureConfig& structure(const std::string& name) const {
        if (name == "source") return source;
        if (name == "target") return target;
        throw ConfigError("/structure", "unknown structure '" + name + "' (expected source or target)");
    }
};

// Seeds of the individual stages, all derived from the global seed.
enum class Stage : std::uint64_t {
    source_dataset = 1,
    target_dataset,
    source_validation,
    target_validation,
    network_init,
    train_shuffle,
    train_dropout,
    fine_tune_shuffle,
    fine_tune_dropout,
    scenario,
    stream,
    track
};

inline std::uint64_t stage_seed(const PipelineConfig& c, Stage s) { return derive_seed(c.seed, static_cast<std::uint64_t>(s)); }

inline const std::map<std::string, std::string>& default_paths() {
    static const std::map<std::string, std::string> p{{"source_dataset", "datasets/source"},
                                                      {"target_dataset", "datasets/target"},
                                                      {"source_validation", "datasets/source_validation"},
                                                      {"target_validation", "datasets/target_validation"},
                                                      {"source_net", "source_net.json"},
                                                      {"source_history", "source_history.csv"},
                                                      {"pairing", "pairing.json"},
                                                      {"target_net", "target_net.json"},
                                                      {"target_history", "target_history.csv"},
                                                      {"validation", "validation.json"},
                                                      {"effects", "effects.json"},
                                                      {"stream", "stream.jsonl"},
                                                      {"trace", "trace.csv"},
                                                      {"report", "report.txt"}};
    return p;
}

// ---------------------------------------------------------------------------
// Config parsing

namespace detail {

inline void allow_keys(const io::json& j, const std::string& path, std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw ConfigError(path.empty() ? "/" : path, "expected an object");
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* a : keys) ok = ok || k == a;
        if (!ok) throw ConfigError(path + "/" + k, "unknown field");
    }
}

inline io::json object_or_empty(const io::json& j, const char* key) { return j.contains(key) ? j[key] : io::json::object(); }

inline StructureConfig structure_from_json(const io::json& j, const std::string& path, const std::string& name) {
    allow_keys(j, path, {"model", "sensors", "modes"});
    StructureConfig s;
    s.name = name;
    if (!j.contains("model")) throw ConfigError(path + "/model", "required field is missing");
    const auto& m = j["model"];
    if (m.is_string()) {
        const auto preset = m.get<std::string>();
        if (preset == "source")
            s.model = fem::source_beam();
        else if (preset == "target")
            s.model = fem::target_beam();
        else
            throw ConfigError(path + "/model", "unknown preset '" + preset + "' (expected source or target)");
    } else {
        s.model = fem::beam_model_from_json(m, path + "/model");
    }
    if (j.contains("sensors")) s.sensors = fem::sensor_layout_from_json(j["sensors"], path + "/sensors");
    s.modes = io::get<Index>(j, "modes", path, s.modes);
    if (s.modes < 1) throw ConfigError(path + "/modes", "must be >= 1");
    return s;
}

inline std::string resolve(const std::string& base_file, const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute() || base_file.empty()) return p;
    return (fs::path(base_file).parent_path() / p).string();
}

}  // namespace detail

/// `file` is used for diagnostics and to resolve relative file references.
inline PipelineConfig config_from_json(const io::json& j, const std::string& file = "") {
    using detail::object_or_empty;
    detail::allow_keys(j, "", {"format", "version", "seed", "threads", "out", "source", "target", "fem_modes", "design", "network",
                               "train", "loss", "transfer", "monitor", "paths", "description"});
    if (io::get<std::string>(j, "format", "") != "modaltl-pipeline") throw ConfigError("/format", "expected \"modaltl-pipeline\"");
    const int version = io::get<int>(j, "version", "");
    if (version != config_version)
        throw ConfigError("/version", "unsupported version " + std::to_string(version) + " (this build reads " +
                                          std::to_string(config_version) + ")");
    PipelineConfig c;
    c.file = file;
    c.hash = io::hash_hex(j.dump());
    c.seed = io::get<std::uint64_t>(j, "seed", "", c.seed);
    c.threads = io::get<unsigned>(j, "threads", "", c.threads);
    c.out = io::get<std::string>(j, "out", "", c.out);
    if (!j.contains("source")) throw ConfigError("/source", "required field is missing");
    if (!j.contains("target")) throw ConfigError("/target", "required field is missing");
    c.source = detail::structure_from_json(j["source"], "/source", "source");
    c.target = detail::structure_from_json(j["target"], "/target", "target");
    if (c.source.model.region_count() != c.target.model.region_count())
        throw ConfigError("/target/model", "source and target must have the same number of control regions");
    if (c.source.sensors.sensor_count(c.source.model) != c.target.sensors.sensor_count(c.target.model))
        throw ConfigError("/target/sensors", "source and target must have the same number of sensors");
    const auto regions = static_cast<Index>(c.source.model.region_count());
    const auto m = static_cast<Index>(c.source.sensors.sensor_count(c.source.model));

    const auto fm = object_or_empty(j, "fem_modes");
    detail::allow_keys(fm, "/fem_modes", {"structure", "multipliers"});
    c.fem_structure = io::get<std::string>(fm, "structure", "/fem_modes", c.fem_structure);
    c.structure(c.fem_structure);
    if (fm.contains("multipliers")) c.fem_multipliers = bayes::scalar_or_vector(fm, "multipliers", "/fem_modes", regions, 1.0);

    const auto d = object_or_empty(j, "design");
    detail::allow_keys(d, "/design", {"lower", "upper", "source_samples", "target_samples", "validation_samples"});
    c.lower = io::get<double>(d, "lower", "/design", c.lower);
    c.upper = io::get<double>(d, "upper", "/design", c.upper);
    if (!(c.lower > 0.0 && c.lower < c.upper)) throw ConfigError("/design", "bounds must satisfy 0 < lower < upper");
    c.source_samples = io::get<Index>(d, "source_samples", "/design", c.source_samples);
    c.target_samples = io::get<Index>(d, "target_samples", "/design", c.target_samples);
    c.validation_samples = io::get<Index>(d, "validation_samples", "/design", c.validation_samples);
    for (const char* k : {"source_samples", "target_samples", "validation_samples"})
        if (io::get<Index>(d, k, "/design", 1) < 1) throw ConfigError(std::string("/design/") + k, "must be >= 1");

    c.network = nn::network_spec_from_json(object_or_empty(j, "network"), "/network", regions, c.source.modes, m);
    if (c.network.input_dim != regions || c.network.n_modes != c.source.modes || c.network.m_sensors != m)
        throw ConfigError("/network", "network dimensions must match the source structure (regions, modes, sensors)");
    c.train = nn::train_config_from_json(object_or_empty(j, "train"), "/train");
    c.loss = nn::loss_config_from_json(object_or_empty(j, "loss"), "/loss", c.source.modes);

    const auto t = object_or_empty(j, "transfer");
    detail::allow_keys(t, "/transfer", {"weights", "pairing", "train"});
    const auto w = object_or_empty(t, "weights");
    detail::allow_keys(w, "/transfer/weights", {"frequency", "shape"});
    c.weights.frequency = io::get<double>(w, "frequency", "/transfer/weights", c.weights.frequency);
    c.weights.shape = io::get<double>(w, "shape", "/transfer/weights", c.weights.shape);
    if (t.contains("pairing") && !t["pairing"].is_null())
        c.pairing_file = detail::resolve(file, io::get<std::string>(t, "pairing", "/transfer"));
    c.fine_tune = nn::train_config_from_json(object_or_empty(t, "train"), "/transfer/train", c.train);

    const auto mo = object_or_empty(j, "monitor");
    detail::allow_keys(mo, "/monitor", {"structure", "scenarios", "scenario_file", "stream", "prior", "likelihood", "mcmc"});
    c.monitor_structure = io::get<std::string>(mo, "structure", "/monitor", c.monitor_structure);
    const auto& ms = c.structure(c.monitor_structure);
    const auto mregions = ms.model.region_count();
    if (mo.contains("scenarios") && mo.contains("scenario_file"))
        throw ConfigError("/monitor", "give either scenarios or scenario_file, not both");
    if (mo.contains("scenarios")) c.scenarios = monitor::scenarios_from_json(mo["scenarios"], "/monitor/scenarios", mregions);
    if (mo.contains("scenario_file")) {
        const auto f = detail::resolve(file, io::get<std::string>(mo, "scenario_file", "/monitor"));
        c.scenarios = monitor::scenarios_from_json(io::parse(io::read_file(f), f), f, mregions);
    }
    const auto st = object_or_empty(mo, "stream");
    detail::allow_keys(st, "/monitor/stream", {"duration", "step", "environment"});
    c.stream.duration = io::get<double>(st, "duration", "/monitor/stream", c.stream.duration);
    c.stream.step = io::get<double>(st, "step", "/monitor/stream", c.stream.step);
    if (!(c.stream.duration > 0.0 && c.stream.step > 0.0)) throw ConfigError("/monitor/stream", "duration and step must be > 0");
    c.stream.environment = monitor::environment_from_json(object_or_empty(st, "environment"), "/monitor/stream/environment");
    try {
        monitor::check_schedule(c.scenarios, c.stream.duration);
    } catch (const Error& e) {
        throw ConfigError("/monitor/scenarios", e.what());
    }
    c.prior = bayes::prior_from_json(object_or_empty(mo, "prior"), "/monitor/prior", regions);
    // sized at track time, when the surrogate's slot count is known
    if (mo.contains("likelihood")) {
        detail::allow_keys(mo["likelihood"], "/monitor/likelihood", {"sigma_f", "sigma_phi", "shape"});
        for (const char* k : {"sigma_f", "sigma_phi"})
            if (mo["likelihood"].contains(k) && !mo["likelihood"][k].is_number())
                throw ConfigError(std::string("/monitor/likelihood/") + k, "must be a scalar (applied to every mode)");
    }
    c.likelihood = bayes::likelihood_from_json(object_or_empty(mo, "likelihood"), "/monitor/likelihood", 1);
    c.mcmc = bayes::mcmc_from_json(object_or_empty(mo, "mcmc"), "/monitor/mcmc");

    c.paths = default_paths();
    const auto p = object_or_empty(j, "paths");
    for (const auto& [k, v] : p.items()) {
        if (!c.paths.contains(k)) throw ConfigError("/paths/" + k, "unknown artifact");
        c.paths[k] = io::get<std::string>(p, k, "/paths");
    }
    return c;
}

inline PipelineConfig load_config(const std::string& file) {
    const auto j = io::parse(io::read_file(file), file);
    try {
        return config_from_json(j, file);
    } catch (const ConfigError& e) {
        if (!e.path().empty() && e.path().front() == '/') throw ConfigError(file + ":" + e.path(), std::string(e.what()).substr(e.path().size() + 2));
        throw;
    }
}

// ---------------------------------------------------------------------------
// Stage helpers

struct Context {
    PipelineConfig config;
    std::string command;
    std::ostream* log = nullptr;

    std::string path(const std::string& artifact) const { return (fs::path(config.out) / config.paths.at(artifact)).string(); }

    io::json provenance() const {
        return {{"tool", "modaltl"}, {"command", command}, {"config_hash", config.hash}, {"seed", config.seed}};
    }

    std::vector<std::string> comments() const {
        return {"modaltl " + command, "config_hash " + config.hash, "seed " + std::to_string(config.seed)};
    }

    void note(const std::string& s) const {
        if (log) *log << s << '\n' << std::flush;
    }

    std::string require(const std::string& artifact) const {
        const auto p = path(artifact);
        if (!fs::exists(p)) throw ConfigError(p, "missing input artifact '" + artifact + "'; run the stage that produces it first");
        return p;
    }

    void prepare(const std::string& file) const {
        const auto parent = fs::path(file).parent_path();
        if (!parent.empty()) fs::create_directories(parent);
    }
};

inline void write_json(const Context& ctx, const std::string& file, io::json j) {
    ctx.prepare(file);
    j["provenance"] = ctx.provenance();
    io::write_file(file, j.dump(2) + "\n");
}

inline design::DesignBounds bounds(const PipelineConfig& c, const StructureConfig& s) {
    return design::DesignBounds::uniform(static_cast<Index>(s.model.region_count()), c.lower, c.upper);
}

inline design::Dataset load_checked_dataset(const Context& ctx, const std::string& artifact) {
    auto d = design::load_dataset(ctx.require(artifact));
    if (!d.meta.config_hash.empty() && d.meta.config_hash != ctx.config.hash)
        ctx.note("warning: " + artifact + " was produced by config " + d.meta.config_hash + ", not " + ctx.config.hash);
    return d;
}

// ---------------------------------------------------------------------------
// Stages

/// fem-modes: one row per mode (mode, frequency in Hz, shape components).
inline std::string cmd_fem_modes(const Context& ctx) {
    const auto& c = ctx.config;
    const auto& s = c.structure(c.fem_structure);
    const auto analyzer = s.analyzer();
    const VectorXd k = c.fem_multipliers.size() ? c.fem_multipliers : VectorXd::Ones(static_cast<Index>(s.model.region_count()));
    const auto sig = analyzer.signature(k);
    Eigen::MatrixXd rows(sig.modes(), 2 + sig.sensors());
    std::vector<std::string> header{"mode", "frequency_hz"};
    for (Index i = 0; i < sig.sensors(); ++i) header.push_back("phi_" + std::to_string(i + 1));
    for (Index r = 0; r < sig.modes(); ++r) {
        rows(r, 0) = static_cast<double>(r + 1);
        rows(r, 1) = sig.frequencies(r);
        rows.row(r).tail(sig.sensors()) = sig.shapes.col(r).transpose();
    }
    const auto file = (fs::path(c.out) / ("fem_modes_" + s.name + ".csv")).string();
    ctx.prepare(file);
    auto comments = ctx.comments();
    comments.push_back("structure " + s.name + ", model " + fem::model_hash(s.model));
    io::write_csv(file, rows, header, comments);
    ctx.note(s.name + " f1 = " + io::format_double(sig.frequencies(0)) + " Hz -> " + file);
    return file;
}

/// dataset: training and validation sets for both structures. `which` is
/// "all", "source" or "target".
inline std::vector<std::string> cmd_dataset(const Context& ctx, const std::string& which = "all") {
    const auto& c = ctx.config;
    if (which != "all" && which != "source" && which != "target") throw ConfigError("--structure", "expected all, source or target");
    struct Job {
        const StructureConfig* s;
        Index q;
        Stage stage;
        std::string artifact;
    };
    std::vector<Job> jobs;
    if (which != "target") {
        jobs.push_back({&c.source, c.source_samples, Stage::source_dataset, "source_dataset"});
        jobs.push_back({&c.source, c.validation_samples, Stage::source_validation, "source_validation"});
    }
    if (which != "source") {
        jobs.push_back({&c.target, c.target_samples, Stage::target_dataset, "target_dataset"});
        jobs.push_back({&c.target, c.validation_samples, Stage::target_validation, "target_validation"});
    }
    std::vector<std::string> written;
    for (const auto& job : jobs) {
        const auto analyzer = job.s->analyzer();
        auto d = design::build_dataset(analyzer, job.q, bounds(c, *job.s), stage_seed(c, job.stage), c.threads);
        d.meta.label = job.artifact + "; pipeline seed " + std::to_string(c.seed);
        d.meta.config_hash = c.hash;
        const auto dir = ctx.path(job.artifact);
        fs::create_directories(dir);
        design::save_dataset(d, dir);
        ctx.note(job.artifact + ": " + std::to_string(job.q) + " samples -> " + dir);
        written.push_back(dir);
    }
    return written;
}

inline nn::EpochCallback epoch_logger(const Context& ctx, const std::string& label, int epochs) {
    return [&ctx, label, epochs](const nn::EpochRecord& e) {
        if (e.epoch == 1 || e.epoch % 50 == 0 || e.epoch == epochs) {
            std::ostringstream s;
            s << label << " epoch " << e.epoch << "/" << epochs << "  train " << e.train.total;
            if (e.has_holdout) s << "  holdout " << e.holdout.total;
            ctx.note(s.str());
        }
    };
}

/// train: source surrogate on the source data set.
inline std::string cmd_train(const Context& ctx) {
    const auto& c = ctx.config;
    const auto data = load_checked_dataset(ctx, "source_dataset");
    if (data.meta.n != c.network.n_modes || data.meta.m != c.network.m_sensors || data.input_dim() != c.network.input_dim)
        throw DimensionMismatchError("train: source data set (n=" + std::to_string(data.meta.n) + ", m=" + std::to_string(data.meta.m) +
                                     ") does not match the network spec");
    auto cfg = c.train;
    cfg.shuffle_seed = stage_seed(c, Stage::train_shuffle);
    cfg.dropout_seed = stage_seed(c, Stage::train_dropout);
    auto fit = nn::fit_surrogate(c.network, stage_seed(c, Stage::network_init), data, cfg, c.loss, epoch_logger(ctx, "source", cfg.epochs));
    const auto file = ctx.path("source_net");
    ctx.prepare(file);
    auto prov = ctx.provenance();
    prov["train"] = nn::to_json(cfg);
    prov["loss"] = nn::to_json(c.loss);
    nn::save_network(fit.net, file, prov);
    nn::write_history(ctx.path("source_history"), fit.history, ctx.comments());
    ctx.note("source network -> " + file);
    return file;
}

/// transfer: pairing (automatic or from file), target network, fine-tuning.
inline std::string cmd_transfer(const Context& ctx) {
    const auto& c = ctx.config;
    const auto source = nn::load_network(ctx.require("source_net"));
    const auto target_all = load_checked_dataset(ctx, "target_dataset");
    transfer::ModePairing pairing;
    if (!c.pairing_file.empty()) {
        pairing = transfer::pairing_from_json(io::parse(io::read_file(c.pairing_file), c.pairing_file), c.pairing_file);
        ctx.note("pairing read from " + c.pairing_file);
    } else {
        pairing = transfer::match_modes(c.source.analyzer().reference(), c.target.analyzer().reference(), c.weights);
    }
    if (pairing.transfer.size() != static_cast<std::size_t>(source.outputs()))
        throw DimensionMismatchError("transfer: pairing covers " + std::to_string(pairing.transfer.size()) + " source modes, network has " +
                                     std::to_string(source.outputs()));
    for (int t : pairing.target_modes())
        if (t >= target_all.meta.n) throw DimensionMismatchError("transfer: pairing references target mode " + std::to_string(t));
    const auto target = transfer::target_dataset_for(target_all, pairing);
    auto cfg = c.fine_tune;
    cfg.shuffle_seed = stage_seed(c, Stage::fine_tune_shuffle);
    cfg.dropout_seed = stage_seed(c, Stage::fine_tune_dropout);
    design::Dataset train_set = target, holdout;
    if (cfg.holdout_fraction > 0.0) std::tie(train_set, holdout) = design::split(target, cfg.holdout_fraction, cfg.shuffle_seed);
    auto net = transfer::prepare_target_net(source, pairing, &train_set);
    const auto slots = static_cast<Index>(pairing.selected().size());
    nn::LossConfig loss = nn::LossConfig::uniform(slots, c.loss.beta);
    for (Index s = 0; s < slots; ++s) {
        const int src = pairing.selected()[static_cast<std::size_t>(s)].source;
        loss.c(s) = c.loss.c(src);
        loss.d(s) = c.loss.d(src);
    }
    const auto r = transfer::fine_tune(net, train_set, holdout, cfg, loss, c.source_samples, epoch_logger(ctx, "target", cfg.epochs));
    for (const auto& w : r.warnings) ctx.note("warning: " + w);
    write_json(ctx, ctx.path("pairing"), transfer::to_json(pairing));
    const auto file = ctx.path("target_net");
    auto prov = ctx.provenance();
    prov["train"] = nn::to_json(cfg);
    prov["trunk_checksum"] = io::hex64(r.trunk_checksum_after);
    nn::save_network(net, file, prov);
    nn::write_history(ctx.path("target_history"), r.history, ctx.comments());
    ctx.note("target network -> " + file + " (trunk checksum " + io::hex64(r.trunk_checksum_after) + " unchanged)");
    return file;
}

inline io::json validation_to_json(const nn::ValidationReport& rep) {
    io::json modes = io::json::array();
    for (const auto& m : rep.modes) {
        io::json e = {{"r2", m.r2_defined ? io::json(m.r2) : io::json(nullptr)}};
        if (m.has_shape) {
            e["mac_min"] = m.mac_min;
            e["mac_mean"] = m.mac_mean;
        }
        modes.push_back(e);
    }
    return {{"min_r2", rep.min_r2()}, {"min_mac", rep.min_mac()}, {"modes", modes}};
}

/// validate: both networks (whichever exist) on their fresh validation sets.
inline std::string cmd_validate(const Context& ctx) {
    io::json out = io::json::object();
    bool any = false;
    if (fs::exists(ctx.path("source_net"))) {
        const auto net = nn::load_network(ctx.path("source_net"));
        const auto rep = nn::validate(net, load_checked_dataset(ctx, "source_validation"));
        out["source"] = validation_to_json(rep);
        ctx.note("source: min R2 " + io::format_double(rep.min_r2()) + ", min MAC " + io::format_double(rep.min_mac()));
        any = true;
    }
    if (fs::exists(ctx.path("target_net"))) {
        const auto net = nn::load_network(ctx.path("target_net"));
        const auto pairing =
            transfer::pairing_from_json(io::parse(io::read_file(ctx.require("pairing")), ctx.path("pairing")), ctx.path("pairing"));
        const auto val = transfer::target_dataset_for(load_checked_dataset(ctx, "target_validation"), pairing);
        const auto rep = nn::validate(net, val);
        auto j = validation_to_json(rep);
        j["target_modes"] = pairing.target_modes();
        out["target"] = j;
        ctx.note("target: min R2 " + io::format_double(rep.min_r2()) + ", min MAC " + io::format_double(rep.min_mac()));
        any = true;
    }
    if (!any) throw ConfigError(ctx.path("source_net"), "no network to validate; run train first");
    const auto file = ctx.path("validation");
    write_json(ctx, file, out);
    return file;
}

/// scenario: modal effect of every configured scenario on the monitored
/// structure.
inline std::string cmd_scenario(const Context& ctx) {
    const auto& c = ctx.config;
    const auto& s = c.structure(c.monitor_structure);
    const auto analyzer = s.analyzer();
    io::json effects = io::json::array(), scenarios = io::json::array();
    for (std::size_t i = 0; i < c.scenarios.size(); ++i) {
        const auto& sc = c.scenarios[i];
        const auto e = monitor::modal_effect(analyzer, sc, derive_seed(stage_seed(c, Stage::scenario), i));
        effects.push_back(monitor::to_json(e));
        scenarios.push_back(monitor::to_json(sc));
        std::ostringstream msg;
        msg << sc.name << ": decays % [" << e.decays.transpose().format(Eigen::IOFormat(4, 0, ", ")) << "]";
        ctx.note(msg.str());
    }
    const auto file = ctx.path("effects");
    write_json(ctx, file,
               {{"format", "modaltl-effects"}, {"structure", s.name}, {"n", s.modes}, {"scenarios", scenarios}, {"effects", effects}});
    return file;
}

inline std::vector<monitor::ScheduledDamage> load_effects(const Context& ctx, Index n, Index m) {
    const auto file = ctx.require("effects");
    const auto j = io::parse(io::read_file(file), file);
    if (io::get<std::string>(j, "format", "") != "modaltl-effects") throw ConfigError(file + ":/format", "not an effects file");
    const auto scen = io::get<io::json>(j, "scenarios", "");
    const auto eff = io::get<io::json>(j, "effects", "");
    if (scen.size() != eff.size()) throw ConfigError(file, "scenario and effect lists differ in length");
    std::vector<monitor::ScheduledDamage> out;
    for (std::size_t i = 0; i < scen.size(); ++i) {
        const std::string p = file + ":/effects/" + std::to_string(i);
        auto sc = monitor::scenario_from_json(scen[i], file + ":/scenarios/" + std::to_string(i),
                                              ctx.config.structure(ctx.config.monitor_structure).model.region_count());
        auto e = monitor::effect_from_json(eff[i], p);
        if (e.decays.size() != n || e.shapes.rows() != m)
            throw DimensionMismatchError(p + ": effect is " + std::to_string(e.decays.size()) + " modes x " + std::to_string(e.shapes.rows()) +
                                         " sensors, the monitored structure gives " + std::to_string(n) + " x " + std::to_string(m));
        out.push_back({std::move(sc), std::move(e)});
    }
    return out;
}

/// stream: synthetic hourly records of the monitored structure.
inline std::string cmd_stream(const Context& ctx) {
    const auto& c = ctx.config;
    const auto& s = c.structure(c.monitor_structure);
    const auto analyzer = s.analyzer();
    const auto base = analyzer.reference();
    const auto damage = load_effects(ctx, base.modes(), base.sensors());
    const auto records = monitor::synthesize_stream(base, damage, c.stream, stage_seed(c, Stage::stream));
    monitor::StreamHeader h{base.modes(), base.sensors(), c.seed, {}};
    io::json names = io::json::array();
    for (const auto& d : damage) names.push_back({{"name", d.scenario.name}, {"start", d.scenario.start}, {"end", d.scenario.end}});
    h.extra = {{"structure", s.name}, {"scenarios", names}, {"environment", monitor::to_json(c.stream.environment)},
               {"provenance", ctx.provenance()}};
    const auto file = ctx.path("stream");
    ctx.prepare(file);
    monitor::write_stream(file, records, h);
    ctx.note(std::to_string(records.size()) + " records -> " + file);
    return file;
}

/// Surrogate, its pi mapping and the stream's mode order for the monitored
/// structure.
struct MonitorSurrogate {
    nn::SurrogateNetwork net;
    design::PiMapping pi;
    std::vector<int> modes;  // stream mode of every surrogate slot
};

inline MonitorSurrogate monitor_surrogate(const Context& ctx) {
    const auto& c = ctx.config;
    const auto& s = c.structure(c.monitor_structure);
    const auto analyzer = s.analyzer();
    const auto pi = design::PiMapping::for_model(s.model, analyzer.reference().frequencies(0));
    if (s.name == "source") {
        auto net = nn::load_network(ctx.require("source_net"));
        std::vector<int> modes(static_cast<std::size_t>(net.outputs()));
        for (std::size_t i = 0; i < modes.size(); ++i) modes[i] = static_cast<int>(i);
        return {std::move(net), pi, modes};
    }
    auto net = nn::load_network(ctx.require("target_net"));
    const auto pairing =
        transfer::pairing_from_json(io::parse(io::read_file(ctx.require("pairing")), ctx.path("pairing")), ctx.path("pairing"));
    auto modes = pairing.target_modes();
    if (static_cast<Index>(modes.size()) != net.outputs())
        throw DimensionMismatchError("track: pairing selects " + std::to_string(modes.size()) + " modes, the target network predicts " +
                                     std::to_string(net.outputs()));
    return {std::move(net), pi, modes};
}

/// track: posterior trace over the stream. `shape` overrides the configured
/// shape likelihood ("mac", "full_gaussian" or "none"); the trace then goes
/// to trace_<shape>.csv.
inline std::string cmd_track(const Context& ctx, const std::string& shape = "") {
    const auto& c = ctx.config;
    const auto ms = monitor_surrogate(ctx);
    const auto stream = monitor::read_stream(ctx.require("stream"));
    if (stream.header.m != ms.net.sensors())
        throw DimensionMismatchError("track: stream has m=" + std::to_string(stream.header.m) + " sensors, the network " +
                                     std::to_string(ms.net.sensors()));
    for (int r : ms.modes)
        if (r >= stream.header.n)
            throw DimensionMismatchError("track: network needs stream mode " + std::to_string(r) + ", the stream has n=" +
                                         std::to_string(stream.header.n));
    const auto records = monitor::select_modes(stream.records, ms.modes);
    const Index n = ms.net.outputs();
    auto lik = bayes::LikelihoodConfig::uniform(n, c.likelihood.sigma_f(0), c.likelihood.sigma_phi(0), c.likelihood.shape);
    if (!shape.empty()) {
        try {
            lik.shape = bayes::shape_likelihood_from_string(shape);
        } catch (const Error& e) {
            throw ConfigError("--likelihood", e.what());
        }
    }
    const bayes::SurrogatePosterior post(ms.net, ms.pi, c.prior, lik);
    std::size_t done = 0;
    const auto trace = monitor::track(records, post, c.mcmc, stage_seed(c, Stage::track), c.threads,
                                      [&](std::size_t, const monitor::TraceEntry& e) {
                                          ++done;
                                          if (done % 24 == 0 || done == records.size())
                                              ctx.note("tracked " + std::to_string(done) + "/" + std::to_string(records.size()) +
                                                       (e.ok ? "" : " (gap)"));
                                      });
    auto file = ctx.path("trace");
    if (!shape.empty()) {
        const fs::path p(file);
        file = (p.parent_path() / (p.stem().string() + "_" + bayes::to_string(lik.shape) + p.extension().string())).string();
    }
    ctx.prepare(file);
    auto comments = ctx.comments();
    comments.push_back("likelihood " + std::string(bayes::to_string(lik.shape)) + ", samples " + std::to_string(c.mcmc.samples) +
                       ", burn_in " + std::to_string(c.mcmc.burn_in));
    monitor::write_trace(file, trace, comments);
    if (trace.gaps()) ctx.note("warning: " + std::to_string(trace.gaps()) + " record(s) failed and appear as gaps");
    ctx.note("trace -> " + file);
    return file;
}

// ---------------------------------------------------------------------------
// Report

struct WindowSummary {
    std::string name;
    double start = 0.0, end = 0.0;
    VectorXd mean_median;  // per multiplier, averaged over the window
    Index records = 0;
};

/// Per-window average of the posterior medians ("undamaged" covers the
/// records outside every scenario window).
inline std::vector<WindowSummary> summarize_windows(const monitor::PosteriorTrace& t, const std::vector<monitor::DamageScenario>& scenarios) {
    std::vector<WindowSummary> out;
    auto add = [&](const std::string& name, double a, double b, auto inside) {
        WindowSummary w{name, a, b, VectorXd::Zero(t.dim), 0};
        for (const auto& e : t.entries)
            if (e.ok && inside(e.timestamp)) {
                w.mean_median += e.median;
                ++w.records;
            }
        if (w.records) w.mean_median /= static_cast<double>(w.records);
        out.push_back(w);
    };
    add("undamaged", 0.0, 0.0, [&](double ts) {
        for (const auto& s : scenarios)
            if (s.active(ts)) return false;
        return true;
    });
    for (const auto& s : scenarios) add(s.name, s.start, s.end, [&](double ts) { return s.active(ts); });
    return out;
}

/// report: summary text plus plot-ready CSVs (validation table, per-window
/// medians); loss curves and posterior bands are the history and trace
/// files themselves.
inline std::string cmd_report(const Context& ctx) {
    const auto& c = ctx.config;
    std::ostringstream txt;
    txt << "modaltl report\nconfig " << (c.file.empty() ? "(in memory)" : c.file) << "\nconfig_hash " << c.hash << "\nseed " << c.seed
        << "\n\n";
    bool any = false;
    const auto vfile = ctx.path("validation");
    if (fs::exists(vfile)) {
        any = true;
        const auto v = io::parse(io::read_file(vfile), vfile);
        const auto csv = (fs::path(c.out) / "report_validation.csv").string();
        std::ofstream out(csv, std::ios::binary);
        for (const auto& line : ctx.comments()) out << "# " << line << '\n';
        out << "structure,slot,r2,mac_min,mac_mean\n";
        for (const char* which : {"source", "target"}) {
            if (!v.contains(which)) continue;
            const auto& s = v[which];
            txt << which << " surrogate: min R2 " << io::format_double(s["min_r2"].get<double>()) << ", min per-sample MAC "
                << io::format_double(s["min_mac"].get<double>()) << "\n";
            txt << "  slot  R2        MAC min   MAC mean\n";
            const auto& modes = s["modes"];
            for (std::size_t k = 0; k < modes.size(); ++k) {
                const auto& m = modes[k];
                const auto num = [&](const char* key) {
                    return m.contains(key) && m[key].is_number() ? m[key].get<double>() : std::numeric_limits<double>::quiet_NaN();
                };
                txt << "  " << std::setw(4) << k << "  " << std::fixed << std::setprecision(5) << num("r2") << "  " << num("mac_min") << "  "
                    << num("mac_mean") << std::defaultfloat << "\n";
                out << which << ',' << k << ',' << io::format_double(num("r2")) << ',' << io::format_double(num("mac_min")) << ','
                    << io::format_double(num("mac_mean")) << '\n';
            }
            txt << "\n";
        }
        if (!out) throw ConfigError(csv, "write failed");
    }
    for (const auto& h : {"source_history", "target_history"})
        if (fs::exists(ctx.path(h))) txt << "loss curve: " << ctx.path(h) << "\n";

    const fs::path trace_base(ctx.path("trace"));
    std::vector<fs::path> traces;
    if (fs::exists(trace_base.parent_path()))
        for (const auto& e : fs::directory_iterator(trace_base.parent_path())) {
            const auto name = e.path().filename().string();
            if (name.rfind(trace_base.stem().string(), 0) == 0 && e.path().extension() == trace_base.extension()) traces.push_back(e.path());
        }
    std::sort(traces.begin(), traces.end());
    for (const auto& tp : traces) {
        any = true;
        const auto t = monitor::read_trace(tp.string());
        txt << "\ntrace " << tp.string() << ": " << t.entries.size() << " records, " << t.gaps() << " gap(s)\n";
        const auto windows = summarize_windows(t, c.scenarios);
        const auto csv = (fs::path(c.out) / ("report_" + tp.stem().string() + "_windows.csv")).string();
        Eigen::MatrixXd rows(static_cast<Index>(windows.size()), t.dim);
        std::vector<std::string> header;
        for (Index d = 0; d < t.dim; ++d) header.push_back("k" + std::to_string(d));
        auto comments = ctx.comments();
        std::string order = "rows:";
        for (std::size_t i = 0; i < windows.size(); ++i) {
            const auto& w = windows[i];
            rows.row(static_cast<Index>(i)) = w.mean_median.transpose();
            order += " " + w.name;
            txt << "  " << w.name << " (" << w.records << " records): ";
            std::vector<std::string> low;
            for (Index d = 0; d < t.dim; ++d)
                if (w.mean_median(d) < 0.95) low.push_back("k" + std::to_string(d) + "=" + io::format_double(std::round(w.mean_median(d) * 1000) / 1000));
            if (low.empty()) txt << "all medians >= 0.95";
            for (std::size_t i2 = 0; i2 < low.size(); ++i2) txt << (i2 ? ", " : "") << low[i2];
            txt << "\n";
        }
        comments.push_back(order);
        io::write_csv(csv, rows, header, comments);
    }
    if (!any) throw ConfigError(c.out, "nothing to report; run validate or track first");
    const auto file = ctx.path("report");
    ctx.prepare(file);
    io::write_file(file, txt.str());
    ctx.note(txt.str());
    return file;
}

}  // namespace modaltl::pipeline
