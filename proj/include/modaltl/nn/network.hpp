#pragma once

// Modular feedforward surrogate: a shared trunk ("general layers") feeding a
// frequency branch and one independent shape branch per mode ("specialized
// layers"). Inputs are pi vectors; the frequency head predicts z-normalized
// frequencies, each shape branch ends in a tanh layer of m units.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "modaltl/errors.hpp"
#include "modaltl/random.hpp"

namespace modaltl::nn {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { linear, tanh, gelu };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::tanh: return "tanh";
        case Activation::gelu: return "gelu";
    }
    return "?";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "linear") return Activation::linear;
    if (s == "tanh") return Activation::tanh;
    if (s == "gelu") return Activation::gelu;
    throw SpecError("unknown activation '" + s + "'");
}

inline double activate(Activation a, double z) {
    switch (a) {
        case Activation::linear: return z;
        case Activation::tanh: return std::tanh(z);
        case Activation::gelu: return 0.5 * z * (1.0 + std::erf(z * std::numbers::sqrt2 / 2.0));
    }
    return z;
}

/// d activation / dz, given the pre-activation z and the activation value a.
inline double activate_derivative(Activation act, double z, double a) {
    switch (act) {
        case Activation::linear: return 1.0;
        case Activation::tanh: return 1.0 - a * a;
        case Activation::gelu: {
            const double cdf = 0.5 * (1.0 + std::erf(z * std::numbers::sqrt2 / 2.0));
            const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
            return cdf + z * pdf;
        }
    }
    return 1.0;
}

struct LayerSpec {
    Index width = 0;
    Activation activation = Activation::tanh;
    double dropout = 0.0;
};

struct NetworkSpec {
    Index input_dim = 0;
    std::vector<LayerSpec> trunk;
    std::vector<LayerSpec> freq_hidden;                // followed by a linear layer of n units
    std::vector<std::vector<LayerSpec>> shape_hidden;  // per mode, followed by a tanh layer of m units
    Index n_modes = 0;
    Index m_sensors = 0;

    void validate() const {
        if (input_dim <= 0) throw SpecError("network spec: input_dim must be positive");
        if (trunk.empty()) throw SpecError("network spec: trunk must have at least one layer");
        if (n_modes <= 0 || m_sensors <= 0) throw SpecError("network spec: n and m must be positive");
        if (static_cast<Index>(shape_hidden.size()) != n_modes)
            throw SpecError("network spec: one shape branch per mode is required");
        auto check = [](const std::vector<LayerSpec>& layers, const char* where) {
            for (const auto& l : layers) {
                if (l.width <= 0) throw SpecError(std::string("network spec: non-positive width in ") + where);
                if (!(l.dropout >= 0.0 && l.dropout < 1.0))
                    throw SpecError(std::string("network spec: dropout must lie in [0, 1) in ") + where);
            }
        };
        check(trunk, "trunk");
        for (const auto& l : trunk)
            if (l.dropout != 0.0) throw SpecError("network spec: trunk layers carry no dropout");
        check(freq_hidden, "frequency branch");
        for (const auto& b : shape_hidden) check(b, "shape branch");
    }

    /// Beam-case default: trunk 64-128-256-256 tanh, frequency branch 2x128
    /// GELU, each shape branch 2x128 tanh.
    static NetworkSpec beam_default(Index input_dim, Index n, Index m) {
        NetworkSpec s;
        s.input_dim = input_dim;
        s.n_modes = n;
        s.m_sensors = m;
        for (Index w : {64, 128, 256, 256}) s.trunk.push_back({w, Activation::tanh, 0.0});
        s.freq_hidden = {{128, Activation::gelu, 0.0}, {128, Activation::gelu, 0.0}};
        s.shape_hidden.assign(static_cast<std::size_t>(n), {{128, Activation::tanh, 0.0}, {128, Activation::tanh, 0.0}});
        return s;
    }
};

struct DenseLayer {
    MatrixXd weight;  // out x in
    VectorXd bias;
    Activation activation = Activation::tanh;
    double dropout = 0.0;
    bool trainable = true;

    Index in() const { return weight.cols(); }
    Index out() const { return weight.rows(); }
};

/// Per-input and per-frequency-output affine normalization.
struct Normalization {
    VectorXd input_mean, input_scale;
    VectorXd freq_mean, freq_scale;

    void validate() const {
        auto ok = [](const VectorXd& mean, const VectorXd& scale) {
            return mean.size() == scale.size() && mean.allFinite() && scale.allFinite() && (scale.array() > 0.0).all();
        };
        if (!ok(input_mean, input_scale) || !ok(freq_mean, freq_scale))
            throw SpecError("normalization statistics must be finite with positive scales");
    }
};

/// Gradient blocks mirroring the weight layout.
struct LayerGrad {
    MatrixXd weight;
    VectorXd bias;
};

struct Gradients {
    std::vector<LayerGrad> trunk, freq;
    std::vector<std::vector<LayerGrad>> shapes;
};

struct Prediction {
    VectorXd frequencies;          // Hz, one per output slot
    std::vector<VectorXd> shapes;  // per output slot; empty when the slot has no active branch
};

/// Batched forward results (columns are samples).
struct BatchOutput {
    MatrixXd freq_z;                // n_out x B (normalized)
    std::vector<MatrixXd> shapes;   // per slot: m x B, empty when inactive
};

class SurrogateNetwork {
public:
    SurrogateNetwork() = default;

    /// Glorot-uniform weights, zero biases, identity normalization.
    SurrogateNetwork(const NetworkSpec& spec, std::uint64_t seed) : spec_(spec) {
        spec.validate();
        Rng rng(seed);
        Index width = spec.input_dim;
        for (const auto& l : spec.trunk) {
            trunk_.push_back(make_layer(width, l, rng));
            width = l.width;
        }
        const Index trunk_width = width;
        for (const auto& l : spec.freq_hidden) {
            freq_.push_back(make_layer(width, l, rng));
            width = l.width;
        }
        freq_.push_back(make_layer(width, {spec.n_modes, Activation::linear, 0.0}, rng));
        for (const auto& branch : spec.shape_hidden) {
            std::vector<DenseLayer> layers;
            width = trunk_width;
            for (const auto& l : branch) {
                layers.push_back(make_layer(width, l, rng));
                width = l.width;
            }
            layers.push_back(make_layer(width, {spec.m_sensors, Activation::tanh, 0.0}, rng));
            shapes_.push_back(std::move(layers));
        }
        branch_active_.assign(shapes_.size(), true);
        output_branch_.resize(shapes_.size());
        for (std::size_t r = 0; r < shapes_.size(); ++r) output_branch_[r] = static_cast<int>(r);
        norm_.input_mean = VectorXd::Zero(spec.input_dim);
        norm_.input_scale = VectorXd::Ones(spec.input_dim);
        norm_.freq_mean = VectorXd::Zero(spec.n_modes);
        norm_.freq_scale = VectorXd::Ones(spec.n_modes);
    }

    const NetworkSpec& spec() const { return spec_; }
    NetworkSpec& spec() { return spec_; }
    Index input_dim() const { return trunk_.front().in(); }
    Index outputs() const { return freq_.back().out(); }
    Index sensors() const { return shapes_.empty() ? 0 : shapes_.front().back().out(); }
    Index branches() const { return static_cast<Index>(shapes_.size()); }

    std::vector<DenseLayer>& trunk() { return trunk_; }
    const std::vector<DenseLayer>& trunk() const { return trunk_; }
    std::vector<DenseLayer>& freq() { return freq_; }
    const std::vector<DenseLayer>& freq() const { return freq_; }
    std::vector<std::vector<DenseLayer>>& shape_branches() { return shapes_; }
    const std::vector<std::vector<DenseLayer>>& shape_branches() const { return shapes_; }

    Normalization& normalization() { return norm_; }
    const Normalization& normalization() const { return norm_; }

    const std::vector<bool>& branch_active() const { return branch_active_; }
    std::vector<bool>& branch_active() { return branch_active_; }
    /// Output slot k -> shape branch index (-1: slot predicts frequency only).
    const std::vector<int>& output_branch() const { return output_branch_; }
    std::vector<int>& output_branch() { return output_branch_; }

    /// Branch index whose shape slot k uses, or -1 when none/inactive.
    int slot_branch(Index k) const {
        const int b = output_branch_[static_cast<std::size_t>(k)];
        return (b >= 0 && branch_active_[static_cast<std::size_t>(b)]) ? b : -1;
    }

    void set_trunk_trainable(bool on) {
        for (auto& l : trunk_) l.trainable = on;
    }

    template <class F>
    void for_each_layer(F&& f) {
        for (auto& l : trunk_) f(l);
        for (auto& l : freq_) f(l);
        for (auto& b : shapes_)
            for (auto& l : b) f(l);
    }
    template <class F>
    void for_each_layer(F&& f) const {
        for (const auto& l : trunk_) f(l);
        for (const auto& l : freq_) f(l);
        for (const auto& b : shapes_)
            for (const auto& l : b) f(l);
    }

    void validate() const {
        if (trunk_.empty() || freq_.empty()) throw SpecError("network: missing trunk or frequency head");
        auto chain = [](const std::vector<DenseLayer>& layers, Index in, const char* where) {
            for (const auto& l : layers) {
                if (l.in() != in || l.bias.size() != l.out()) throw SpecError(std::string("network: inconsistent shapes in ") + where);
                in = l.out();
            }
            return in;
        };
        const Index tw = chain(trunk_, trunk_.front().in(), "trunk");
        chain(freq_, tw, "frequency branch");
        for (const auto& b : shapes_) chain(b, tw, "shape branch");
        if (output_branch_.size() != static_cast<std::size_t>(outputs()))
            throw SpecError("network: output slot map must cover every frequency output");
        if (branch_active_.size() != shapes_.size()) throw SpecError("network: branch mask must cover every branch");
        for (int b : output_branch_)
            if (b >= static_cast<int>(shapes_.size())) throw SpecError("network: output slot references a nonexistent branch");
        if (norm_.input_mean.size() != input_dim() || norm_.freq_mean.size() != outputs())
            throw SpecError("network: normalization statistics have the wrong size");
        norm_.validate();
    }

    // -- forward ------------------------------------------------------------

    MatrixXd normalize_inputs(const MatrixXd& pi_cols) const {
        if (pi_cols.rows() != input_dim()) {
            std::ostringstream msg;
            msg << "network: input has " << pi_cols.rows() << " components, expected " << input_dim();
            throw SpecError(msg.str());
        }
        return (pi_cols.colwise() - norm_.input_mean).array().colwise() / norm_.input_scale.array();
    }

    /// Evaluation-mode batched forward (dropout off). Columns are samples.
    BatchOutput forward_batch(const MatrixXd& pi_cols) const {
        MatrixXd h = normalize_inputs(pi_cols);
        for (const auto& l : trunk_) h = apply(l, h);
        BatchOutput out;
        MatrixXd f = h;
        for (const auto& l : freq_) f = apply(l, f);
        out.freq_z = std::move(f);
        out.shapes.resize(static_cast<std::size_t>(outputs()));
        std::vector<MatrixXd> branch_cache(shapes_.size());
        for (Index k = 0; k < outputs(); ++k) {
            const int b = slot_branch(k);
            if (b < 0) continue;
            auto& cached = branch_cache[static_cast<std::size_t>(b)];
            if (cached.size() == 0) {
                MatrixXd s = h;
                for (const auto& l : shapes_[static_cast<std::size_t>(b)]) s = apply(l, s);
                cached = std::move(s);
            }
            out.shapes[static_cast<std::size_t>(k)] = cached;
        }
        return out;
    }

    VectorXd denormalize_frequencies(const Eigen::Ref<const VectorXd>& z) const {
        return norm_.freq_mean + norm_.freq_scale.cwiseProduct(z);
    }

    /// Single-sample evaluation-mode prediction with de-normalized frequencies.
    Prediction predict(const Eigen::Ref<const VectorXd>& pi) const {
        const BatchOutput b = forward_batch(pi);
        Prediction p;
        p.frequencies = denormalize_frequencies(b.freq_z.col(0));
        p.shapes.resize(b.shapes.size());
        for (std::size_t k = 0; k < b.shapes.size(); ++k)
            if (b.shapes[k].size() > 0) p.shapes[k] = b.shapes[k].col(0);
        return p;
    }

    static MatrixXd apply(const DenseLayer& l, const MatrixXd& x) {
        MatrixXd z = l.weight * x;
        z.colwise() += l.bias;
        if (l.activation != Activation::linear) z = z.unaryExpr([&](double v) { return activate(l.activation, v); });
        return z;
    }

private:
    static DenseLayer make_layer(Index in, const LayerSpec& s, Rng& rng) {
        DenseLayer l;
        const double limit = std::sqrt(6.0 / static_cast<double>(in + s.width));
        l.weight.resize(s.width, in);
        for (Index j = 0; j < in; ++j)
            for (Index i = 0; i < s.width; ++i) l.weight(i, j) = (2.0 * uniform01(rng) - 1.0) * limit;
        l.bias = VectorXd::Zero(s.width);
        l.activation = s.activation;
        l.dropout = s.dropout;
        return l;
    }

    NetworkSpec spec_;
    std::vector<DenseLayer> trunk_;
    std::vector<DenseLayer> freq_;
    std::vector<std::vector<DenseLayer>> shapes_;
    std::vector<bool> branch_active_;
    std::vector<int> output_branch_;
    Normalization norm_;
};

/// FNV-1a over the raw bytes of every trunk weight and bias.
inline std::uint64_t trunk_checksum(const SurrogateNetwork& net) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](const double* p, Index count) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < static_cast<std::size_t>(count) * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& l : net.trunk()) {
        mix(l.weight.data(), l.weight.size());
        mix(l.bias.data(), l.bias.size());
    }
    return h;
}

}  // namespace modaltl::nn
