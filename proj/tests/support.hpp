#pragma once

#include <cmath>

#include "modaltl/design/dataset.hpp"
#include "modaltl/design/lhs.hpp"
#include "modaltl/nn/network.hpp"

namespace modaltl::testing_support {

inline nn::NetworkSpec small_spec(Eigen::Index n_in, Eigen::Index n, Eigen::Index m) {
    nn::NetworkSpec s;
    s.input_dim = n_in;
    s.n_modes = n;
    s.m_sensors = m;
    s.trunk = {{16, nn::Activation::tanh, 0.0}, {16, nn::Activation::tanh, 0.0}};
    s.freq_hidden = {{16, nn::Activation::gelu, 0.0}};
    s.shape_hidden.assign(static_cast<std::size_t>(n), {{12, nn::Activation::tanh, 0.0}});
    return s;
}

/// Analytic toy data set: f_r = (r+1) * sum(pi), shape_r = normalized sin pattern depending on pi.
inline design::Dataset toy_dataset(Eigen::Index q, std::uint64_t seed, Eigen::Index n = 2, Eigen::Index m = 4, Eigen::Index dim = 3) {
    design::Dataset d;
    d.meta.n = n;
    d.meta.m = m;
    d.multipliers = design::lhs_sample(q, design::DesignBounds::uniform(dim, 0.7, 1.05), seed);
    d.inputs = d.multipliers;
    d.outputs.resize(q, n * (1 + m));
    for (Eigen::Index j = 0; j < q; ++j) {
        ModalSignature s;
        s.frequencies.resize(n);
        s.shapes.resize(m, n);
        for (Eigen::Index r = 0; r < n; ++r) {
            s.frequencies(r) = static_cast<double>(r + 1) * d.inputs.row(j).sum();
            Eigen::VectorXd v(m);
            for (Eigen::Index i = 0; i < m; ++i) v(i) = std::sin(static_cast<double>((r + 1) * (i + 1)) * 0.7 + d.inputs(j, 0));
            s.shapes.col(r) = normalize_shape(v);
        }
        d.outputs.row(j) = s.flatten().transpose();
    }
    return d;
}

}  // namespace modaltl::testing_support
