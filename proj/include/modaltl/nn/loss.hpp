#pragma once

// Custom surrogate loss
//   L_f   = sum_r c_r | 1 - beta^{|fz_hat_r - fz_r|} |
//   L_phi = sum_r d_r [ 1 - MAC(phi_hat_r, phi_r) ]
// with frequencies compared in z-normalized units.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "modaltl/errors.hpp"

namespace modaltl::nn {

using Eigen::Index;
using Eigen::VectorXd;

struct LossConfig {
    VectorXd c;  // frequency weights, one per output slot
    VectorXd d;  // shape weights
    double beta = 100.0;

    static LossConfig uniform(Index n, double beta = 100.0) { return {VectorXd::Ones(n), VectorXd::Ones(n), beta}; }

    void validate(Index n) const {
        if (c.size() != n || d.size() != n) throw SpecError("loss config: weights must have one entry per output slot");
        if ((c.array() < 0.0).any() || (d.array() < 0.0).any()) throw SpecError("loss config: weights must be >= 0");
        if (!(beta > 1.0)) throw SpecError("loss config: beta must be > 1");
    }
};

struct LossValue {
    double total = 0.0;
    double freq = 0.0;
    double shape = 0.0;

    LossValue& operator+=(const LossValue& o) {
        total += o.total;
        freq += o.freq;
        shape += o.shape;
        return *this;
    }
    LossValue scaled(double s) const { return {total * s, freq * s, shape * s}; }
};

/// c |1 - beta^|delta||; since beta > 1 this is c (beta^|delta| - 1).
inline double frequency_term(double delta, double c, double beta) { return c * std::abs(1.0 - std::pow(beta, std::abs(delta))); }

/// d/d(delta) of frequency_term; the kink at delta = 0 gets subgradient 0.
inline double frequency_term_derivative(double delta, double c, double beta) {
    if (delta == 0.0) return 0.0;
    const double g = c * std::log(beta) * std::pow(beta, std::abs(delta));
    return delta > 0.0 ? g : -g;
}

/// MAC with the zero-prediction case mapped to 0 (no correlation).
inline double mac_or_zero(const Eigen::Ref<const VectorXd>& pred, const Eigen::Ref<const VectorXd>& target) {
    const double pp = pred.squaredNorm();
    const double tt = target.squaredNorm();
    if (pp == 0.0 || tt == 0.0) return 0.0;
    const double pt = pred.dot(target);
    return pt * pt / (pp * tt);
}

/// Gradient of MAC(pred, target) with respect to pred.
inline VectorXd mac_gradient(const Eigen::Ref<const VectorXd>& pred, const Eigen::Ref<const VectorXd>& target) {
    const double pp = pred.squaredNorm();
    const double tt = target.squaredNorm();
    if (pp == 0.0 || tt == 0.0) return VectorXd::Zero(pred.size());
    const double pt = pred.dot(target);
    return (2.0 * pt / (pp * tt)) * target - (2.0 * pt * pt / (pp * pp * tt)) * pred;
}

/// One sample. `shape_pred[k]` empty means slot k has no active branch and
/// contributes no shape term.
inline LossValue sample_loss(const VectorXd& freq_z_pred, const VectorXd& freq_z_target,
                             const std::vector<VectorXd>& shape_pred, const std::vector<VectorXd>& shape_target,
                             const LossConfig& cfg) {
    LossValue v;
    for (Index k = 0; k < freq_z_pred.size(); ++k)
        v.freq += frequency_term(freq_z_pred(k) - freq_z_target(k), cfg.c(k), cfg.beta);
    for (std::size_t k = 0; k < shape_pred.size(); ++k) {
        if (shape_pred[k].size() == 0) continue;
        v.shape += cfg.d(static_cast<Index>(k)) * (1.0 - mac_or_zero(shape_pred[k], shape_target[k]));
    }
    v.total = v.freq + v.shape;
    return v;
}

}  // namespace modaltl::nn
