#pragma once

// Damage scenarios and their modal effect: region multipliers, a partial
// stiffness loss inside one region, or a precomputed table of frequency
// decays and shape MACs.

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "modaltl/errors.hpp"
#include "modaltl/fem/modal.hpp"
#include "modaltl/io/json_util.hpp"
#include "modaltl/random.hpp"

namespace modaltl::monitor {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Mechanism { multipliers, partial, table };

inline const char* to_string(Mechanism m) {
    switch (m) {
        case Mechanism::multipliers: return "multipliers";
        case Mechanism::partial: return "partial";
        case Mechanism::table: return "table";
    }
    return "?";
}

/// Active on hours [start, end).
struct DamageScenario {
    std::string name;
    double start = 0.0;
    double end = 0.0;
    Mechanism mechanism = Mechanism::multipliers;
    VectorXd multipliers;           // one per region
    fem::PartialDamage partial;
    VectorXd decays;                // table: percent, <= 0
    VectorXd macs;                  // table: MAC(damaged, undamaged) in [0, 1]

    bool active(double t) const { return t >= start && t < end; }

    void validate() const {
        if (!(end > start)) throw SpecError("scenario '" + name + "': end must be after start");
        switch (mechanism) {
            case Mechanism::multipliers:
                if (multipliers.size() == 0) throw SpecError("scenario '" + name + "': empty multiplier vector");
                if (!(multipliers.array() > 0.0).all()) throw SpecError("scenario '" + name + "': multipliers must be > 0");
                break;
            case Mechanism::partial:
                if (!(partial.fraction > 0.0 && partial.fraction <= 1.0))
                    throw SpecError("scenario '" + name + "': stiffness fraction must lie in (0, 1]");
                break;
            case Mechanism::table:
                if (decays.size() == 0 || decays.size() != macs.size())
                    throw SpecError("scenario '" + name + "': table needs one decay and one MAC per mode");
                if ((decays.array() > 0.0).any()) throw SpecError("scenario '" + name + "': frequency decays must be <= 0");
                if (!((macs.array() >= 0.0).all() && (macs.array() <= 1.0).all()))
                    throw SpecError("scenario '" + name + "': MAC values must lie in [0, 1]");
                break;
        }
    }
};

/// Per-mode effect of a scenario relative to the undamaged signature.
/// `frequencies` holds the damaged values when they come from the FEM (empty
/// for table scenarios, which only know the decays).
struct ModalEffect {
    std::string name;
    VectorXd decays;       // percent
    VectorXd macs;
    VectorXd frequencies;  // Hz, optional
    MatrixXd shapes;       // m x n, sign-aligned to the undamaged shapes
};

/// Flips each damaged shape so that it points along its undamaged counterpart.
inline MatrixXd align_signs(MatrixXd shapes, const MatrixXd& reference) {
    for (Index r = 0; r < shapes.cols(); ++r)
        if (shapes.col(r).dot(reference.col(r)) < 0.0) shapes.col(r) = -shapes.col(r);
    return shapes;
}

/// Unit shape with MAC `target` against `phi`: phi rotated towards a random
/// direction orthogonal to it (isotropic in the orthogonal complement).
inline VectorXd perturb_to_mac(const VectorXd& phi, double target, Rng& rng) {
    const VectorXd p = phi.normalized();
    if (target >= 1.0) return p;
    if (p.size() < 2) throw RangeError("cannot lower the MAC of a one-component shape");
    VectorXd u(p.size());
    double norm = 0.0;
    do {
        for (auto& x : u) x = standard_normal(rng);
        u -= u.dot(p) * p;
        norm = u.norm();
    } while (norm < 1e-12);
    u /= norm;
    return std::sqrt(target) * p + std::sqrt(1.0 - target) * u;
}

/// Damaged signature for a mechanism scenario.
inline ModalSignature damaged_signature(const fem::ModalAnalyzer& analyzer, const DamageScenario& s) {
    const auto regions = static_cast<Index>(analyzer.model().region_count());
    switch (s.mechanism) {
        case Mechanism::multipliers:
            if (s.multipliers.size() != regions)
                throw DimensionMismatchError("scenario '" + s.name + "': " + std::to_string(s.multipliers.size()) +
                                             " multipliers for a model with " + std::to_string(regions) + " regions");
            return analyzer.signature(s.multipliers);
        case Mechanism::partial: {
            const auto mesh = fem::apply_partial_damage(analyzer.model(), analyzer.mesh(), s.partial);
            return analyzer.signature(mesh, VectorXd::Ones(regions));
        }
        case Mechanism::table: break;
    }
    throw SpecError("scenario '" + s.name + "': table scenarios have no FEM counterpart");
}

/// decays = (f_dam - f_und) / f_und * 100 and sign-aligned damaged shapes,
/// from a modal analysis of the damaged model.
inline ModalEffect scenario_to_modal_effect(const fem::ModalAnalyzer& analyzer, const DamageScenario& s) {
    s.validate();
    const auto und = analyzer.reference();
    const auto dam = damaged_signature(analyzer, s);
    ModalEffect e;
    e.name = s.name;
    e.frequencies = dam.frequencies;
    e.decays = ((dam.frequencies - und.frequencies).array() / und.frequencies.array() * 100.0).matrix();
    e.shapes = align_signs(dam.shapes, und.shapes);
    e.macs.resize(und.modes());
    for (Index r = 0; r < und.modes(); ++r) e.macs(r) = mac(e.shapes.col(r), und.shapes.col(r));
    return e;
}

/// Table scenario applied to a baseline: decays as given, shapes rotated to
/// the tabulated MACs (a stated approximation; the table carries no shapes).
inline ModalEffect table_effect(const DamageScenario& s, const ModalSignature& baseline, std::uint64_t seed) {
    s.validate();
    if (s.mechanism != Mechanism::table) throw SpecError("table_effect: scenario '" + s.name + "' is not a table scenario");
    if (s.decays.size() != baseline.modes())
        throw DimensionMismatchError("scenario '" + s.name + "' tabulates " + std::to_string(s.decays.size()) + " modes, the baseline has " +
                                     std::to_string(baseline.modes()));
    ModalEffect e;
    e.name = s.name;
    e.decays = s.decays;
    e.macs = s.macs;
    e.shapes.resize(baseline.sensors(), baseline.modes());
    Rng rng(seed);
    for (Index r = 0; r < baseline.modes(); ++r) e.shapes.col(r) = perturb_to_mac(baseline.shapes.col(r), s.macs(r), rng);
    return e;
}

/// Effect of any scenario on `analyzer`'s undamaged signature.
inline ModalEffect modal_effect(const fem::ModalAnalyzer& analyzer, const DamageScenario& s, std::uint64_t seed = 0) {
    if (s.mechanism == Mechanism::table) return table_effect(s, analyzer.reference(), seed);
    return scenario_to_modal_effect(analyzer, s);
}

/// Throws unless the schedules are disjoint and inside [0, duration].
inline void check_schedule(const std::vector<DamageScenario>& scenarios, double duration) {
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        const auto& a = scenarios[i];
        a.validate();
        if (a.start < 0.0 || a.end > duration)
            throw RangeError("scenario '" + a.name + "' is scheduled outside the stream duration");
        for (std::size_t j = i + 1; j < scenarios.size(); ++j) {
            const auto& b = scenarios[j];
            if (a.start < b.end && b.start < a.end) throw RangeError("scenarios '" + a.name + "' and '" + b.name + "' overlap");
        }
    }
}

// ---------------------------------------------------------------------------

inline io::json to_json(const DamageScenario& s) {
    io::json j = {{"name", s.name}, {"start", s.start}, {"end", s.end}, {"mechanism", to_string(s.mechanism)}};
    switch (s.mechanism) {
        case Mechanism::multipliers: j["multipliers"] = io::to_std(s.multipliers); break;
        case Mechanism::partial:
            j["partial"] = {{"region", s.partial.region}, {"start", s.partial.start}, {"length", s.partial.length}, {"fraction", s.partial.fraction}};
            break;
        case Mechanism::table:
            j["decays_percent"] = io::to_std(s.decays);
            j["macs"] = io::to_std(s.macs);
            break;
    }
    return j;
}

/// `regions` is the region count of the model, used to expand the sparse
/// {"regions": [...], "value": v} form of a multiplier scenario.
inline DamageScenario scenario_from_json(const io::json& j, const std::string& path, std::size_t regions) {
    DamageScenario s;
    s.name = io::get<std::string>(j, "name", path);
    s.start = io::get<double>(j, "start", path);
    s.end = io::get<double>(j, "end", path);
    const auto mech = io::get<std::string>(j, "mechanism", path);
    if (mech == "multipliers") {
        s.mechanism = Mechanism::multipliers;
        if (j.contains("multipliers")) {
            s.multipliers = io::to_eigen(io::get<std::vector<double>>(j, "multipliers", path));
        } else {
            s.multipliers = VectorXd::Ones(static_cast<Index>(regions));
            const auto value = io::get<double>(j, "value", path);
            for (int r : io::get<std::vector<int>>(j, "regions", path)) {
                if (r < 0 || static_cast<std::size_t>(r) >= regions)
                    throw ConfigError(path + "/regions", "region " + std::to_string(r) + " out of range");
                s.multipliers(r) = value;
            }
        }
    } else if (mech == "partial") {
        s.mechanism = Mechanism::partial;
        const std::string p = path + "/partial";
        const auto& pj = j.contains("partial") ? j["partial"] : throw ConfigError(p, "required field is missing");
        s.partial.region = io::get<std::size_t>(pj, "region", p);
        s.partial.start = io::get<double>(pj, "start", p);
        s.partial.length = io::get<double>(pj, "length", p);
        s.partial.fraction = io::get<double>(pj, "fraction", p);
    } else if (mech == "table") {
        s.mechanism = Mechanism::table;
        s.decays = io::to_eigen(io::get<std::vector<double>>(j, "decays_percent", path));
        s.macs = io::to_eigen(io::get<std::vector<double>>(j, "macs", path));
    } else {
        throw ConfigError(path + "/mechanism", "unknown mechanism '" + mech + "'");
    }
    try {
        s.validate();
    } catch (const Error& e) {
        throw ConfigError(path.empty() ? "/" : path, e.what());
    }
    return s;
}

/// A scenario file holds {"scenarios": [...]}; a bare array is accepted too.
inline std::vector<DamageScenario> scenarios_from_json(const io::json& j, const std::string& path, std::size_t regions) {
    const io::json* list = &j;
    std::string where = path;
    if (j.is_object()) {
        if (!j.contains("scenarios")) throw ConfigError(path + "/scenarios", "required field is missing");
        list = &j["scenarios"];
        where += "/scenarios";
    }
    if (!list->is_array()) throw ConfigError(where, "expected an array of scenarios");
    std::vector<DamageScenario> out;
    for (std::size_t i = 0; i < list->size(); ++i) out.push_back(scenario_from_json((*list)[i], where + "/" + std::to_string(i), regions));
    return out;
}

inline io::json to_json(const ModalEffect& e) {
    io::json shapes = io::json::array();
    for (Index r = 0; r < e.shapes.cols(); ++r) shapes.push_back(io::to_std(e.shapes.col(r)));
    io::json j = {{"name", e.name}, {"decays_percent", io::to_std(e.decays)}, {"macs", io::to_std(e.macs)}, {"shapes", shapes}};
    if (e.frequencies.size()) j["frequencies"] = io::to_std(e.frequencies);
    return j;
}

inline ModalEffect effect_from_json(const io::json& j, const std::string& path) {
    ModalEffect e;
    e.name = io::get<std::string>(j, "name", path);
    e.decays = io::to_eigen(io::get<std::vector<double>>(j, "decays_percent", path));
    e.macs = io::to_eigen(io::get<std::vector<double>>(j, "macs", path));
    if (j.contains("frequencies")) e.frequencies = io::to_eigen(io::get<std::vector<double>>(j, "frequencies", path));
    const auto shapes = io::get<std::vector<std::vector<double>>>(j, "shapes", path);
    const Index n = e.decays.size();
    if (static_cast<Index>(shapes.size()) != n || e.macs.size() != n || (e.frequencies.size() && e.frequencies.size() != n))
        throw ConfigError(path, "effect vectors disagree on the mode count");
    const Index m = n ? static_cast<Index>(shapes[0].size()) : 0;
    e.shapes.resize(m, n);
    for (Index r = 0; r < n; ++r) {
        if (static_cast<Index>(shapes[static_cast<std::size_t>(r)].size()) != m) throw ConfigError(path + "/shapes", "ragged shapes");
        e.shapes.col(r) = io::to_eigen(shapes[static_cast<std::size_t>(r)]);
    }
    return e;
}

}  // namespace modaltl::monitor
