#pragma once

// Assembly of the beam stiffness/mass matrices, generalized eigen-solution and
// sampling of mode shapes at the sensor nodes.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "modaltl/errors.hpp"
#include "modaltl/fem/beam_model.hpp"
#include "modaltl/fem/signature.hpp"
#include "modaltl/linalg/symmetric_eigen.hpp"

namespace modaltl::fem {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Per-region stiffness multipliers k_i (E_i = k_i E_ref).
using StiffnessMultipliers = Eigen::VectorXd;

/// Constrained system: free DOFs only (vertical DOF removed at supports).
struct SystemMatrices {
    MatrixXd stiffness;
    MatrixXd mass;
    std::vector<Index> free_dofs;  // index into the unconstrained numbering
    Index total_dofs = 0;
};

/// 4x4 Hermitian beam element stiffness; `phi` = 12 E I / (kappa G A L^2)
/// adds the Timoshenko shear term (0 for Euler-Bernoulli).
inline Eigen::Matrix4d element_stiffness(double ei, double length, double phi = 0.0) {
    const double l = length;
    const double c = ei / (l * l * l * (1.0 + phi));
    Eigen::Matrix4d k;
    k << 12.0, 6.0 * l, -12.0, 6.0 * l,
         6.0 * l, (4.0 + phi) * l * l, -6.0 * l, (2.0 - phi) * l * l,
         -12.0, -6.0 * l, 12.0, -6.0 * l,
         6.0 * l, (2.0 - phi) * l * l, -6.0 * l, (4.0 + phi) * l * l;
    return c * k;
}

/// Consistent mass of the cubic Hermitian element.
inline Eigen::Matrix4d element_mass(double rho_a, double length) {
    const double l = length;
    Eigen::Matrix4d m;
    m << 156.0, 22.0 * l, 54.0, -13.0 * l,
         22.0 * l, 4.0 * l * l, 13.0 * l, -3.0 * l * l,
         54.0, 13.0 * l, 156.0, -22.0 * l,
         -13.0 * l, -3.0 * l * l, -22.0 * l, 4.0 * l * l;
    return (rho_a * l / 420.0) * m;
}

inline void check_multipliers(const BeamModel& model, const StiffnessMultipliers& k) {
    if (static_cast<std::size_t>(k.size()) != model.region_count()) {
        std::ostringstream msg;
        msg << "stiffness multipliers: expected " << model.region_count() << " values, got " << k.size();
        throw DimensionMismatchError(msg.str());
    }
    for (Index i = 0; i < k.size(); ++i)
        if (!(k(i) > 0.0) || !std::isfinite(k(i))) {
            std::ostringstream msg;
            msg << "stiffness multiplier k[" << i << "] = " << k(i) << " must be positive";
            throw InvalidModelError(msg.str());
        }
}

/// Global K and M before support constraints (2 DOFs per node: w, theta).
inline std::pair<MatrixXd, MatrixXd> assemble_unconstrained(const BeamModel& model, const Mesh& mesh,
                                                            const StiffnessMultipliers& k) {
    model.validate();
    check_multipliers(model, k);
    const Index ndof = static_cast<Index>(mesh.dof_count());
    MatrixXd kg = MatrixXd::Zero(ndof, ndof);
    MatrixXd mg = MatrixXd::Zero(ndof, ndof);
    const double rho_a = model.density * model.area;
    for (const auto& el : mesh.elements) {
        const double e = k(static_cast<Index>(el.region)) * el.modulus_factor * model.elastic_modulus;
        double phi = 0.0;
        if (model.shear_deformation) {
            const double g = e / (2.0 * (1.0 + model.poisson_ratio));
            phi = 12.0 * e * model.inertia / (model.shear_area_factor * g * model.area * el.length * el.length);
        }
        const Index d0 = 2 * static_cast<Index>(el.first_node);
        kg.block<4, 4>(d0, d0) += element_stiffness(e * model.inertia, el.length, phi);
        mg.block<4, 4>(d0, d0) += element_mass(rho_a, el.length);
    }
    return {std::move(kg), std::move(mg)};
}

/// Assembles K and M and removes the vertical DOF at every support.
inline SystemMatrices assemble(const BeamModel& model, const Mesh& mesh, const StiffnessMultipliers& k) {
    auto [kg, mg] = assemble_unconstrained(model, mesh, k);
    std::vector<bool> fixed(mesh.dof_count(), false);
    for (auto node : mesh.support_nodes) fixed[2 * node] = true;
    SystemMatrices sys;
    sys.total_dofs = static_cast<Index>(mesh.dof_count());
    for (Index d = 0; d < sys.total_dofs; ++d)
        if (!fixed[static_cast<std::size_t>(d)]) sys.free_dofs.push_back(d);
    const auto nf = static_cast<Index>(sys.free_dofs.size());
    sys.stiffness.resize(nf, nf);
    sys.mass.resize(nf, nf);
    for (Index j = 0; j < nf; ++j)
        for (Index i = 0; i < nf; ++i) {
            sys.stiffness(i, j) = kg(sys.free_dofs[i], sys.free_dofs[j]);
            sys.mass(i, j) = mg(sys.free_dofs[i], sys.free_dofs[j]);
        }
    return sys;
}

struct RawModes {
    VectorXd eigenvalues;   // lambda_r = omega_r^2
    VectorXd frequencies;   // Hz
    MatrixXd vectors;       // free-DOF eigenvectors, M-orthonormal
    MatrixXd full_vectors;  // expanded to the unconstrained numbering (zeros at supports)
};

inline RawModes solve_modes(const SystemMatrices& sys, Index n) {
    if (n <= 0 || n > sys.stiffness.rows()) throw RangeError("solve_modes: mode count must be in [1, DOF count]");
    auto eig = linalg::generalized_symmetric_eigen(sys.stiffness, sys.mass, n);
    RawModes out;
    out.eigenvalues = eig.eigenvalues;
    out.frequencies.resize(n);
    for (Index r = 0; r < n; ++r) {
        if (!(eig.eigenvalues(r) > 0.0)) throw EigensolverError("solve_modes: non-positive eigenvalue (unrestrained beam?)");
        out.frequencies(r) = std::sqrt(eig.eigenvalues(r)) / (2.0 * std::numbers::pi);
    }
    out.vectors = std::move(eig.eigenvectors);
    out.full_vectors = MatrixXd::Zero(sys.total_dofs, n);
    for (std::size_t i = 0; i < sys.free_dofs.size(); ++i)
        out.full_vectors.row(sys.free_dofs[i]) = out.vectors.row(static_cast<Index>(i));
    return out;
}

/// Node indices of the sensors, span by span.
inline std::vector<std::size_t> sensor_nodes(const BeamModel& model, const Mesh& mesh, const SensorLayout& layout) {
    layout.validate();
    std::vector<std::size_t> nodes;
    for (std::size_t s = 0; s < model.n_spans; ++s)
        for (double p : layout.positions) {
            const double x = (static_cast<double>(s) + p) * model.span_length;
            const std::size_t node = mesh.find_node(x, model.span_length);
            if (node == Mesh::npos) {
                std::ostringstream msg;
                msg << "sensor at x = " << x << " m (span " << s << ", fraction " << p << ") is not a mesh node";
                throw LayoutError(msg.str());
            }
            nodes.push_back(node);
        }
    return nodes;
}

/// Vertical displacements at the sensors, unit-normalized and sign-fixed.
inline ModalSignature sample_signature(const RawModes& raw, const BeamModel& model, const Mesh& mesh,
                                       const SensorLayout& layout, Index n) {
    if (n > raw.frequencies.size()) throw RangeError("sample_signature: more modes requested than solved");
    const auto nodes = sensor_nodes(model, mesh, layout);
    ModalSignature sig;
    sig.frequencies = raw.frequencies.head(n);
    sig.shapes.resize(static_cast<Index>(nodes.size()), n);
    for (Index r = 0; r < n; ++r) {
        VectorXd v(static_cast<Index>(nodes.size()));
        for (std::size_t j = 0; j < nodes.size(); ++j) v(static_cast<Index>(j)) = raw.full_vectors(2 * static_cast<Index>(nodes[j]), r);
        sig.shapes.col(r) = normalize_shape(v);
    }
    return sig;
}

/// Uniform-mesh model bundled with its sensor layout: the forward map k -> signature.
class ModalAnalyzer {
public:
    ModalAnalyzer(BeamModel model, SensorLayout layout, Index n_modes)
        : model_(std::move(model)), layout_(std::move(layout)), n_(n_modes), mesh_(build_mesh(model_)) {
        sensor_nodes(model_, mesh_, layout_);
    }

    ModalSignature signature(const StiffnessMultipliers& k) const { return signature(mesh_, k); }

    ModalSignature signature(const Mesh& mesh, const StiffnessMultipliers& k) const {
        const auto sys = assemble(model_, mesh, k);
        const auto raw = solve_modes(sys, n_);
        return sample_signature(raw, model_, mesh, layout_, n_);
    }

    /// Undamaged (k = 1) signature.
    ModalSignature reference() const { return signature(StiffnessMultipliers::Ones(static_cast<Index>(model_.region_count()))); }

    const BeamModel& model() const { return model_; }
    const SensorLayout& layout() const { return layout_; }
    const Mesh& mesh() const { return mesh_; }
    Index modes() const { return n_; }
    Index sensors() const { return static_cast<Index>(layout_.sensor_count(model_)); }

private:
    BeamModel model_;
    SensorLayout layout_;
    Index n_;
    Mesh mesh_;
};

/// Closed-form simply supported single-span frequency, r = 1, 2, ...
inline double simply_supported_frequency(const BeamModel& model, int r) {
    const double l = model.span_length;
    return (r * r * std::numbers::pi / (2.0 * l * l)) * model.flexural_wave_constant();
}

}  // namespace modaltl::fem
