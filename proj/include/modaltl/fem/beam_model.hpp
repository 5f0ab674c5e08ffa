#pragma once

// Multi-span continuous beam: geometry, control regions and the finite-element
// mesh that discretizes it.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "modaltl/errors.hpp"

namespace modaltl::fem {

/// Equal-span continuous beam on ideal pin supports, in SI units.
struct BeamModel {
    std::size_t n_spans = 5;
    double span_length = 8.0;         // m
    double area = 0.15;               // m^2
    double inertia = 3.125e-3;        // m^4
    double elastic_modulus = 35e9;    // Pa, reference (undamaged) value
    double density = 2550.0;          // kg/m^3
    std::size_t regions_per_span = 4;
    std::size_t elements_per_region = 8;
    bool shear_deformation = false;   // Timoshenko shear term when true
    double shear_area_factor = 5.0 / 6.0;
    double poisson_ratio = 0.2;       // only enters through G when shear is on

    std::size_t region_count() const { return n_spans * regions_per_span; }
    double region_length() const { return span_length / static_cast<double>(regions_per_span); }
    double total_length() const { return span_length * static_cast<double>(n_spans); }

    /// sqrt(E I / (rho A)), m^2/s.
    double flexural_wave_constant() const { return std::sqrt(elastic_modulus * inertia / (density * area)); }

    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v)) {
                std::ostringstream msg;
                msg << "beam model: " << name << " must be strictly positive (got " << v << ")";
                throw InvalidModelError(msg.str());
            }
        };
        positive(span_length, "span_length");
        positive(area, "area");
        positive(inertia, "inertia");
        positive(elastic_modulus, "elastic_modulus");
        positive(density, "density");
        if (shear_deformation) {
            positive(shear_area_factor, "shear_area_factor");
            if (!(poisson_ratio > -1.0 && poisson_ratio < 0.5))
                throw InvalidModelError("beam model: poisson_ratio must lie in (-1, 0.5)");
        }
        if (n_spans == 0) throw InvalidModelError("beam model: n_spans must be >= 1");
        if (regions_per_span == 0) throw InvalidModelError("beam model: regions_per_span must be >= 1");
        if (elements_per_region < 4) throw InvalidModelError("beam model: elements_per_region must be >= 4");
    }
};

/// Table values for the two five-span beams of the numerical case study.
inline BeamModel source_beam() { return BeamModel{}; }

inline BeamModel target_beam() {
    BeamModel m;
    m.span_length = 5.0;
    m.area = 0.25;
    m.inertia = 5.208e-3;
    m.elastic_modulus = 32e9;
    m.density = 2550.0;
    return m;
}

/// Fractional sensor positions inside every span.
struct SensorLayout {
    std::vector<double> positions{0.25, 0.5, 0.75};

    std::size_t sensor_count(const BeamModel& model) const { return model.n_spans * positions.size(); }

    void validate() const {
        if (positions.empty()) throw LayoutError("sensor layout: at least one position per span is required");
        for (double p : positions)
            if (!(p > 0.0 && p < 1.0)) throw LayoutError("sensor layout: positions must lie strictly inside (0, 1)");
    }
};

struct Element {
    std::size_t first_node = 0;  // nodes first_node, first_node + 1
    double length = 0.0;
    std::size_t region = 0;
    double modulus_factor = 1.0;  // extra E scaling on top of the region multiplier
};

struct Mesh {
    std::vector<double> node_x;
    std::vector<Element> elements;
    std::vector<std::size_t> support_nodes;

    std::size_t dof_count() const { return 2 * node_x.size(); }

    /// Node within a relative 1e-9 of x, or npos.
    std::size_t find_node(double x, double scale) const {
        auto it = std::lower_bound(node_x.begin(), node_x.end(), x - 1e-9 * scale);
        if (it != node_x.end() && std::abs(*it - x) <= 1e-9 * scale)
            return static_cast<std::size_t>(it - node_x.begin());
        return npos;
    }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

namespace detail {

inline Mesh mesh_from_nodes(const BeamModel& model, std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const double tol = 1e-9 * model.span_length;
    std::vector<double> unique;
    for (double x : xs)
        if (unique.empty() || x - unique.back() > tol) unique.push_back(x);
    Mesh mesh;
    mesh.node_x = std::move(unique);
    const double region_len = model.region_length();
    const std::size_t regions = model.region_count();
    for (std::size_t e = 0; e + 1 < mesh.node_x.size(); ++e) {
        Element el;
        el.first_node = e;
        el.length = mesh.node_x[e + 1] - mesh.node_x[e];
        const double mid = 0.5 * (mesh.node_x[e] + mesh.node_x[e + 1]);
        el.region = std::min(regions - 1, static_cast<std::size_t>(mid / region_len));
        mesh.elements.push_back(el);
    }
    for (std::size_t s = 0; s <= model.n_spans; ++s) {
        const std::size_t node = mesh.find_node(static_cast<double>(s) * model.span_length, model.span_length);
        if (node == Mesh::npos) throw InvalidModelError("mesh: support location is not a node");
        mesh.support_nodes.push_back(node);
    }
    return mesh;
}

}  // namespace detail

/// Uniform mesh: elements_per_region equal elements in each control region.
inline Mesh build_mesh(const BeamModel& model) {
    model.validate();
    const std::size_t ne = model.region_count() * model.elements_per_region;
    const double le = model.region_length() / static_cast<double>(model.elements_per_region);
    std::vector<double> xs(ne + 1);
    for (std::size_t i = 0; i <= ne; ++i) xs[i] = static_cast<double>(i) * le;
    xs.back() = model.total_length();
    return detail::mesh_from_nodes(model, std::move(xs));
}

/// Stiffness loss confined to [start, start + length) measured from the left
/// end of `region` (0-based).
struct PartialDamage {
    std::size_t region = 0;
    double start = 0.0;   // m, offset inside the region
    double length = 0.0;  // m
    double fraction = 1.0;
};

/// Inserts nodes at the damaged segment ends and scales E by `fraction` on the
/// elements inside it. Other elements keep their current factor.
inline Mesh apply_partial_damage(const BeamModel& model, const Mesh& base, const PartialDamage& damage) {
    if (damage.region >= model.region_count()) throw RangeError("partial damage: region index out of range");
    const double region_len = model.region_length();
    const double tol = 1e-9 * model.span_length;
    if (!(damage.length > 0.0) || damage.start < -tol || damage.start + damage.length > region_len + tol) {
        std::ostringstream msg;
        msg << "partial damage: segment [" << damage.start << ", " << damage.start + damage.length
            << "] m is outside region " << damage.region << " of length " << region_len << " m";
        throw RangeError(msg.str());
    }
    if (!(damage.fraction > 0.0 && damage.fraction <= 1.0))
        throw RangeError("partial damage: stiffness fraction must lie in (0, 1]");

    const double x0 = static_cast<double>(damage.region) * region_len + std::max(0.0, damage.start);
    const double x1 = std::min(x0 + damage.length, static_cast<double>(damage.region + 1) * region_len);

    std::vector<double> xs = base.node_x;
    xs.push_back(x0);
    xs.push_back(x1);
    Mesh refined = detail::mesh_from_nodes(model, std::move(xs));
    // carry existing factors over by element midpoint
    for (auto& el : refined.elements) {
        const double mid = refined.node_x[el.first_node] + 0.5 * el.length;
        for (const auto& old : base.elements) {
            const double a = base.node_x[old.first_node];
            if (mid >= a && mid < a + old.length) {
                el.modulus_factor = old.modulus_factor;
                break;
            }
        }
        if (mid > x0 && mid < x1) el.modulus_factor *= damage.fraction;
    }
    return refined;
}

}  // namespace modaltl::fem
