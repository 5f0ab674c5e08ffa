#pragma once

// Central finite-difference check of loss_and_gradient (evaluation mode).

#include <algorithm>
#include <cmath>

#include "modaltl/nn/training.hpp"

namespace modaltl::nn {

struct GradientCheck {
    double max_relative_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t parameters = 0;
};

/// Perturbs every weight and bias by +-h. The relative error of one entry is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline GradientCheck check_gradients(SurrogateNetwork net, const Batch& batch, const LossConfig& cfg, double h = 1e-5,
                                     double floor = 1e-6) {
    const LossAndGradient ref = loss_and_gradient(net, batch, cfg, false);
    std::vector<const LayerGrad*> grads;
    for (const auto& g : ref.grad.trunk) grads.push_back(&g);
    for (const auto& g : ref.grad.freq) grads.push_back(&g);
    for (const auto& b : ref.grad.shapes)
        for (const auto& g : b) grads.push_back(&g);
    std::vector<DenseLayer*> layers;
    net.for_each_layer([&](DenseLayer& l) { layers.push_back(&l); });

    GradientCheck out;
    auto probe = [&](double& param, double analytic) {
        const double saved = param;
        param = saved + h;
        const double up = loss_and_gradient(net, batch, cfg, false).loss.total;
        param = saved - h;
        const double down = loss_and_gradient(net, batch, cfg, false).loss.total;
        param = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double err = std::abs(analytic - numeric);
        out.max_abs_error = std::max(out.max_abs_error, err);
        out.max_relative_error = std::max(out.max_relative_error, err / std::max({std::abs(analytic), std::abs(numeric), floor}));
        ++out.parameters;
    };
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (!layers[i]->trainable) continue;
        for (Index c = 0; c < layers[i]->weight.cols(); ++c)
            for (Index r = 0; r < layers[i]->weight.rows(); ++r) probe(layers[i]->weight(r, c), grads[i]->weight(r, c));
        for (Index r = 0; r < layers[i]->bias.size(); ++r) probe(layers[i]->bias(r), grads[i]->bias(r));
    }
    return out;
}

/// Tiny random network and batch used by the gradient oracle: N = 3, n = 2,
/// m = 4, tanh trunk, GELU frequency branch, tanh shape branches, random
/// (non-zero) biases and normalization, targets away from the L_f kink.
struct GradientProblem {
    SurrogateNetwork net;
    Batch batch;
    LossConfig loss;
};

inline GradientProblem tiny_gradient_problem(std::uint64_t seed, Index batch_size = 3) {
    NetworkSpec spec;
    spec.input_dim = 3;
    spec.n_modes = 2;
    spec.m_sensors = 4;
    spec.trunk = {{5, Activation::tanh, 0.0}, {4, Activation::tanh, 0.0}};
    spec.freq_hidden = {{4, Activation::gelu, 0.0}};
    spec.shape_hidden = {{{3, Activation::tanh, 0.0}}, {{4, Activation::tanh, 0.0}}};
    GradientProblem p{SurrogateNetwork(spec, seed), {}, LossConfig::uniform(2, 3.0)};
    Rng rng(derive_seed(seed, 0x9c));
    p.net.for_each_layer([&](DenseLayer& l) {
        for (auto& b : l.bias) b = 0.3 * standard_normal(rng);
    });
    auto& norm = p.net.normalization();
    norm.input_mean = VectorXd::Constant(3, 0.5);
    norm.input_scale = VectorXd::Constant(3, 0.2);
    norm.freq_mean << 10.0, 20.0;
    norm.freq_scale << 2.0, 3.0;
    p.loss.c << 1.0, 0.5;
    p.loss.d << 0.7, 1.3;
    p.batch.pi.resize(3, batch_size);
    p.batch.freq_z.resize(2, batch_size);
    p.batch.shapes.assign(2, MatrixXd(4, batch_size));
    for (Index j = 0; j < batch_size; ++j) {
        for (Index i = 0; i < 3; ++i) p.batch.pi(i, j) = 0.3 + 0.4 * uniform01(rng);
        for (Index k = 0; k < 2; ++k) {
            const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
            p.batch.freq_z(k, j) = sign * (0.5 + uniform01(rng));
            for (Index s = 0; s < 4; ++s) p.batch.shapes[static_cast<std::size_t>(k)](s, j) = standard_normal(rng);
        }
    }
    return p;
}

}  // namespace modaltl::nn
