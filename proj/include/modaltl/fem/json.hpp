#pragma once

// JSON schema for beam models and sensor layouts (SI units).
//
//   { "n_spans": 5, "span_length": 8.0, "area": 0.15, "inertia": 3.125e-3,
//     "elastic_modulus": 3.5e10, "density": 2550, "regions_per_span": 4,
//     "elements_per_region": 8, "shear_deformation": false,
//     "shear_area_factor": 0.8333, "poisson_ratio": 0.2 }

#include <string>

#include "modaltl/fem/beam_model.hpp"
#include "modaltl/io/json_util.hpp"
#include "modaltl/io/text.hpp"

namespace modaltl::fem {

inline io::json to_json(const BeamModel& m) {
    return {{"n_spans", m.n_spans},
            {"span_length", m.span_length},
            {"area", m.area},
            {"inertia", m.inertia},
            {"elastic_modulus", m.elastic_modulus},
            {"density", m.density},
            {"regions_per_span", m.regions_per_span},
            {"elements_per_region", m.elements_per_region},
            {"shear_deformation", m.shear_deformation},
            {"shear_area_factor", m.shear_area_factor},
            {"poisson_ratio", m.poisson_ratio}};
}

inline BeamModel beam_model_from_json(const io::json& j, const std::string& path = "") {
    BeamModel d;
    BeamModel m;
    m.n_spans = io::get<std::size_t>(j, "n_spans", path, d.n_spans);
    m.span_length = io::get<double>(j, "span_length", path);
    m.area = io::get<double>(j, "area", path);
    m.inertia = io::get<double>(j, "inertia", path);
    m.elastic_modulus = io::get<double>(j, "elastic_modulus", path);
    m.density = io::get<double>(j, "density", path);
    m.regions_per_span = io::get<std::size_t>(j, "regions_per_span", path, d.regions_per_span);
    m.elements_per_region = io::get<std::size_t>(j, "elements_per_region", path, d.elements_per_region);
    m.shear_deformation = io::get<bool>(j, "shear_deformation", path, d.shear_deformation);
    m.shear_area_factor = io::get<double>(j, "shear_area_factor", path, d.shear_area_factor);
    m.poisson_ratio = io::get<double>(j, "poisson_ratio", path, d.poisson_ratio);
    try {
        m.validate();
    } catch (const InvalidModelError& e) {
        throw ConfigError(path.empty() ? "/" : path, e.what());
    }
    return m;
}

/// Stable hash of the model definition (canonical JSON dump).
inline std::string model_hash(const BeamModel& m) { return io::hash_hex(to_json(m).dump()); }

inline io::json to_json(const SensorLayout& s) { return {{"positions", s.positions}}; }

inline SensorLayout sensor_layout_from_json(const io::json& j, const std::string& path = "") {
    SensorLayout s;
    s.positions = io::get<std::vector<double>>(j, "positions", path, s.positions);
    try {
        s.validate();
    } catch (const LayoutError& e) {
        throw ConfigError(path + "/positions", e.what());
    }
    return s;
}

}  // namespace modaltl::fem
