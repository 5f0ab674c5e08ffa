#pragma once

// Synthetic hourly monitoring streams: a baseline signature, scheduled
// damage effects, a daily thermal sinusoid and measurement noise.

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "modaltl/bayes/posterior.hpp"
#include "modaltl/errors.hpp"
#include "modaltl/fem/signature.hpp"
#include "modaltl/io/json_util.hpp"
#include "modaltl/monitor/scenario.hpp"
#include "modaltl/random.hpp"

namespace modaltl::monitor {

using MonitoringRecord = bayes::Observation;

struct EnvironmentModel {
    double daily_amplitude = 0.002;   // relative
    double frequency_noise = 0.0005;  // relative std
    double shape_noise = 0.002;       // std per component

    static EnvironmentModel none() { return {0.0, 0.0, 0.0}; }

    void validate() const {
        if (!(daily_amplitude >= 0.0 && frequency_noise >= 0.0 && shape_noise >= 0.0))
            throw SpecError("environment model: amplitudes and noise levels must be >= 0");
    }
};

/// A scenario with its precomputed effect.
struct ScheduledDamage {
    DamageScenario scenario;
    ModalEffect effect;
};

struct StreamConfig {
    double duration = 168.0;  // hours
    double step = 1.0;        // hours between records
    EnvironmentModel environment;

    Index records() const { return static_cast<Index>(std::floor(duration / step + 1e-9)); }
};

/// Record t (hour h = t step):
///   f_r = f_r,damaged (1 + A sin(2 pi h / 24)) (1 + eps_r),   eps_r ~ N(0, sigma_f)
/// where f_r,damaged = f_r,base (1 + decay_r / 100), or the FEM value when the
/// effect carries one. Shapes are the damaged (or baseline) shapes plus
/// componentwise N(0, sigma_phi) noise, renormalized when noise is drawn.
/// Record h uses its own stream derive_seed(seed, h).
inline std::vector<MonitoringRecord> synthesize_stream(const ModalSignature& baseline, const std::vector<ScheduledDamage>& damage,
                                                       const StreamConfig& cfg, std::uint64_t seed) {
    cfg.environment.validate();
    if (!(cfg.step > 0.0)) throw SpecError("stream: step must be > 0");
    std::vector<DamageScenario> scenarios;
    for (const auto& d : damage) {
        scenarios.push_back(d.scenario);
        if (d.effect.decays.size() != baseline.modes() || d.effect.shapes.cols() != baseline.modes() ||
            d.effect.shapes.rows() != baseline.sensors())
            throw DimensionMismatchError("stream: effect of '" + d.scenario.name + "' does not match the baseline signature");
    }
    check_schedule(scenarios, cfg.duration);

    const auto& env = cfg.environment;
    std::vector<MonitoringRecord> out;
    for (Index t = 0; t < cfg.records(); ++t) {
        const double hour = static_cast<double>(t) * cfg.step;
        MonitoringRecord rec;
        rec.timestamp = hour;
        rec.frequencies = baseline.frequencies;
        rec.shapes = baseline.shapes;
        for (const auto& d : damage) {
            if (!d.scenario.active(hour)) continue;
            rec.tag = d.scenario.name;
            if (d.effect.frequencies.size() == baseline.modes())
                rec.frequencies = d.effect.frequencies;
            else
                rec.frequencies = (baseline.frequencies.array() * (1.0 + d.effect.decays.array() / 100.0)).matrix();
            rec.shapes = d.effect.shapes;
        }
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
        const double thermal = 1.0 + env.daily_amplitude * std::sin(2.0 * std::numbers::pi * hour / 24.0);
        for (Index r = 0; r < rec.frequencies.size(); ++r) {
            const double eps = env.frequency_noise * standard_normal(rng);
            rec.frequencies(r) *= thermal * (1.0 + eps);
        }
        if (env.shape_noise > 0.0) {
            for (Index r = 0; r < rec.shapes.cols(); ++r) {
                for (Index i = 0; i < rec.shapes.rows(); ++i) rec.shapes(i, r) += env.shape_noise * standard_normal(rng);
                rec.shapes.col(r) = normalize_shape(rec.shapes.col(r));
            }
        }
        out.push_back(std::move(rec));
    }
    return out;
}

/// Records restricted to the listed modes, in that order (a transferred
/// surrogate predicts the target modes in its own slot order).
inline std::vector<MonitoringRecord> select_modes(const std::vector<MonitoringRecord>& records, const std::vector<int>& modes) {
    std::vector<MonitoringRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        const ModalSignature s = ModalSignature{r.frequencies, r.shapes}.select(modes);
        out.push_back({r.timestamp, s.frequencies, s.shapes, r.tag});
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSONL: one header object (it has a "format" key), then one record per line.

struct StreamHeader {
    Index n = 0, m = 0;
    std::uint64_t seed = 0;
    io::json extra = io::json::object();  // provenance, scenario list, ...
};

inline std::string stream_to_jsonl(const std::vector<MonitoringRecord>& records, const StreamHeader& h) {
    std::ostringstream out;
    io::json head = h.extra;
    head["format"] = "modaltl-stream";
    head["version"] = 1;
    head["n"] = h.n;
    head["m"] = h.m;
    head["seed"] = h.seed;
    out << head.dump() << '\n';
    for (const auto& r : records) out << bayes::to_json(r).dump() << '\n';
    return out.str();
}

inline void write_stream(const std::string& path, const std::vector<MonitoringRecord>& records, const StreamHeader& h) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError(path, "cannot open for writing");
    f << stream_to_jsonl(records, h);
    if (!f) throw ConfigError(path, "write failed");
}

struct Stream {
    StreamHeader header;
    std::vector<MonitoringRecord> records;
};

inline Stream read_stream(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path, "cannot open for reading");
    Stream s;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path + ":" + std::to_string(lineno);
        const auto j = io::parse(line, where);
        if (j.contains("format")) {
            if (j["format"] != "modaltl-stream") throw ConfigError(where, "not a stream file");
            s.header.n = io::get<Index>(j, "n", where);
            s.header.m = io::get<Index>(j, "m", where);
            s.header.seed = io::get<std::uint64_t>(j, "seed", where, 0);
            s.header.extra = j;
            have_header = true;
            continue;
        }
        auto rec = bayes::observation_from_json(j, where);
        if (have_header && (rec.frequencies.size() != s.header.n || rec.shapes.rows() != s.header.m))
            throw DimensionMismatchError(where + ": record dimensions differ from the stream header");
        s.records.push_back(std::move(rec));
    }
    if (!have_header && !s.records.empty()) {
        s.header.n = s.records.front().frequencies.size();
        s.header.m = s.records.front().shapes.rows();
    }
    return s;
}

inline io::json to_json(const EnvironmentModel& e) {
    return {{"daily_amplitude", e.daily_amplitude}, {"frequency_noise", e.frequency_noise}, {"shape_noise", e.shape_noise}};
}

inline EnvironmentModel environment_from_json(const io::json& j, const std::string& path) {
    EnvironmentModel e;
    e.daily_amplitude = io::get<double>(j, "daily_amplitude", path, e.daily_amplitude);
    e.frequency_noise = io::get<double>(j, "frequency_noise", path, e.frequency_noise);
    e.shape_noise = io::get<double>(j, "shape_noise", path, e.shape_noise);
    try {
        e.validate();
    } catch (const Error& err) {
        throw ConfigError(path.empty() ? "/" : path, err.what());
    }
    return e;
}

}  // namespace modaltl::monitor
