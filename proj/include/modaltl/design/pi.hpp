#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "modaltl/errors.hpp"
#include "modaltl/fem/beam_model.hpp"

namespace modaltl::design {

/// Non-dimensional damage parameters
///   pi_i = sqrt(k_i E I / (rho A)) / (f1 L^2)
/// with f1 the undamaged fundamental frequency of the structure's own FEM and
/// L, A, I, rho, E the (average) beam properties. Since only k varies,
/// pi_i = scale * sqrt(k_i).
struct PiMapping {
    double scale = 1.0;

    static PiMapping for_model(const fem::BeamModel& model, double reference_frequency) {
        if (!(reference_frequency > 0.0)) throw RangeError("pi mapping: reference frequency must be positive");
        const double l = model.span_length;
        return {model.flexural_wave_constant() / (reference_frequency * l * l)};
    }

    Eigen::VectorXd to_pi(const Eigen::Ref<const Eigen::VectorXd>& k) const {
        return scale * k.array().max(0.0).sqrt().matrix();
    }

    Eigen::VectorXd to_multipliers(const Eigen::Ref<const Eigen::VectorXd>& pi) const {
        return (pi.array() / scale).square().matrix();
    }

    /// Row-wise mapping of a q x N design.
    Eigen::MatrixXd to_pi_rows(const Eigen::MatrixXd& k_rows) const {
        return scale * k_rows.array().max(0.0).sqrt().matrix();
    }
};

}  // namespace modaltl::design
