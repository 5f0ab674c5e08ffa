#pragma once

// Reverse-mode gradients of the surrogate loss, Adam, the training loop and
// validation metrics.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "modaltl/design/dataset.hpp"
#include "modaltl/errors.hpp"
#include "modaltl/nn/loss.hpp"
#include "modaltl/nn/network.hpp"
#include "modaltl/random.hpp"

namespace modaltl::nn {

/// Columns are samples. Frequencies are already z-normalized with the
/// network's statistics; shapes hold one m x B block per output slot.
struct Batch {
    MatrixXd pi;
    MatrixXd freq_z;
    std::vector<MatrixXd> shapes;

    Index size() const { return pi.cols(); }
};

/// Packs dataset rows into a batch for `net` (slot k <-> dataset mode k).
inline Batch make_batch(const SurrogateNetwork& net, const design::Dataset& data, const std::vector<Index>& rows) {
    const Index n = data.meta.n, m = data.meta.m;
    if (n != net.outputs()) {
        std::ostringstream msg;
        msg << "dataset has " << n << " modes but the network predicts " << net.outputs();
        throw DimensionMismatchError(msg.str());
    }
    if (data.input_dim() != net.input_dim()) throw DimensionMismatchError("dataset input dimension differs from the network's");
    if (net.sensors() != m) throw DimensionMismatchError("dataset sensor count differs from the network's");
    const auto b = static_cast<Index>(rows.size());
    const auto& norm = net.normalization();
    Batch out;
    out.pi.resize(data.input_dim(), b);
    out.freq_z.resize(n, b);
    out.shapes.assign(static_cast<std::size_t>(n), MatrixXd(m, b));
    for (Index j = 0; j < b; ++j) {
        const auto row = data.outputs.row(rows[static_cast<std::size_t>(j)]);
        out.pi.col(j) = data.inputs.row(rows[static_cast<std::size_t>(j)]).transpose();
        for (Index k = 0; k < n; ++k) {
            out.freq_z(k, j) = (row(k) - norm.freq_mean(k)) / norm.freq_scale(k);
            out.shapes[static_cast<std::size_t>(k)].col(j) = row.segment(n + k * m, m).transpose();
        }
    }
    return out;
}

inline Batch make_batch(const SurrogateNetwork& net, const design::Dataset& data) {
    std::vector<Index> rows(static_cast<std::size_t>(data.size()));
    std::iota(rows.begin(), rows.end(), Index{0});
    return make_batch(net, data, rows);
}

namespace detail {

struct LayerCache {
    MatrixXd input;
    MatrixXd z;
    MatrixXd a;
    MatrixXd mask;  // empty without dropout
};

inline MatrixXd forward_layer(const DenseLayer& l, const MatrixXd& x, bool training, Rng* rng, LayerCache& c) {
    c.input = x;
    c.z = l.weight * x;
    c.z.colwise() += l.bias;
    if (l.activation == Activation::linear)
        c.a = c.z;
    else
        c.a = c.z.unaryExpr([&](double v) { return activate(l.activation, v); });
    if (training && l.dropout > 0.0) {
        const double keep = 1.0 - l.dropout;
        c.mask.resize(c.a.rows(), c.a.cols());
        for (Index j = 0; j < c.a.cols(); ++j)
            for (Index i = 0; i < c.a.rows(); ++i) c.mask(i, j) = uniform01(*rng) >= l.dropout ? 1.0 / keep : 0.0;
        return c.a.cwiseProduct(c.mask);
    }
    c.mask.resize(0, 0);
    return c.a;
}

/// Returns d loss / d input when `need_input_grad`, else an empty matrix.
inline MatrixXd backward_layer(const DenseLayer& l, const LayerCache& c, MatrixXd dout, LayerGrad& g, bool need_input_grad) {
    if (c.mask.size() > 0) dout.array() *= c.mask.array();
    if (l.activation != Activation::linear) {
        if (l.activation == Activation::tanh) {
            dout.array() *= 1.0 - c.a.array().square();
        } else {
            for (Index j = 0; j < dout.cols(); ++j)
                for (Index i = 0; i < dout.rows(); ++i) dout(i, j) *= activate_derivative(l.activation, c.z(i, j), c.a(i, j));
        }
    }
    if (l.trainable) {
        g.weight.noalias() = dout * c.input.transpose();
        g.bias = dout.rowwise().sum();
    } else {
        g.weight = MatrixXd::Zero(l.out(), l.in());
        g.bias = VectorXd::Zero(l.out());
    }
    if (!need_input_grad) return {};
    return l.weight.transpose() * dout;
}

inline bool any_trainable(const std::vector<DenseLayer>& layers, std::size_t upto) {
    for (std::size_t i = 0; i < upto; ++i)
        if (layers[i].trainable) return true;
    return false;
}

}  // namespace detail

struct LossAndGradient {
    LossValue loss;  // batch mean
    Gradients grad;  // of the batch-mean total loss
};

/// Mean loss over the batch and its gradient with respect to every weight.
/// Frozen layers get all-zero gradient blocks. Dropout is sampled from
/// `dropout_rng` when `training` is set.
inline LossAndGradient loss_and_gradient(const SurrogateNetwork& net, const Batch& batch, const LossConfig& cfg, bool training,
                                         Rng* dropout_rng = nullptr) {
    cfg.validate(net.outputs());
    const Index bsz = batch.size();
    const double inv_b = 1.0 / static_cast<double>(bsz);
    const auto& trunk = net.trunk();
    const auto& freq = net.freq();
    const auto& branches = net.shape_branches();
    if (training && !dropout_rng) throw SpecError("training-mode forward needs a dropout RNG");

    std::vector<detail::LayerCache> trunk_cache(trunk.size()), freq_cache(freq.size());
    MatrixXd h = net.normalize_inputs(batch.pi);
    for (std::size_t i = 0; i < trunk.size(); ++i) h = detail::forward_layer(trunk[i], h, training, dropout_rng, trunk_cache[i]);
    MatrixXd f = h;
    for (std::size_t i = 0; i < freq.size(); ++i) f = detail::forward_layer(freq[i], f, training, dropout_rng, freq_cache[i]);

    LossAndGradient out;
    out.grad.trunk.resize(trunk.size());
    out.grad.freq.resize(freq.size());
    out.grad.shapes.resize(branches.size());
    for (std::size_t b = 0; b < branches.size(); ++b) out.grad.shapes[b].resize(branches[b].size());

    // frequency loss and its gradient
    MatrixXd d_f(f.rows(), bsz);
    for (Index j = 0; j < bsz; ++j)
        for (Index k = 0; k < f.rows(); ++k) {
            const double delta = f(k, j) - batch.freq_z(k, j);
            out.loss.freq += frequency_term(delta, cfg.c(k), cfg.beta);
            d_f(k, j) = frequency_term_derivative(delta, cfg.c(k), cfg.beta) * inv_b;
        }

    const bool trunk_needs_grad = detail::any_trainable(trunk, trunk.size());
    MatrixXd d_h = MatrixXd::Zero(h.rows(), bsz);
    {
        MatrixXd g = d_f;
        for (std::size_t i = freq.size(); i-- > 0;) {
            const bool need = i > 0 || trunk_needs_grad;
            g = detail::backward_layer(freq[i], freq_cache[i], std::move(g), out.grad.freq[i], need);
        }
        if (trunk_needs_grad) d_h += g;
    }

    // shape branches: each active branch is evaluated once even if mapped to several slots
    std::vector<MatrixXd> d_branch_out(branches.size());
    std::vector<std::vector<detail::LayerCache>> branch_cache(branches.size());
    std::vector<MatrixXd> branch_out(branches.size());
    for (Index k = 0; k < net.outputs(); ++k) {
        const int bi = net.slot_branch(k);
        if (bi < 0) continue;
        const auto b = static_cast<std::size_t>(bi);
        if (branch_cache[b].empty()) {
            branch_cache[b].resize(branches[b].size());
            MatrixXd s = h;
            for (std::size_t i = 0; i < branches[b].size(); ++i)
                s = detail::forward_layer(branches[b][i], s, training, dropout_rng, branch_cache[b][i]);
            branch_out[b] = std::move(s);
            d_branch_out[b] = MatrixXd::Zero(branch_out[b].rows(), bsz);
        }
        const MatrixXd& target = batch.shapes[static_cast<std::size_t>(k)];
        const double dk = cfg.d(k);
        for (Index j = 0; j < bsz; ++j) {
            out.loss.shape += dk * (1.0 - mac_or_zero(branch_out[b].col(j), target.col(j)));
            if (dk != 0.0) d_branch_out[b].col(j) -= (dk * inv_b) * mac_gradient(branch_out[b].col(j), target.col(j));
        }
    }
    for (std::size_t b = 0; b < branches.size(); ++b) {
        if (branch_cache[b].empty()) {
            for (std::size_t i = 0; i < branches[b].size(); ++i) {
                out.grad.shapes[b][i].weight = MatrixXd::Zero(branches[b][i].out(), branches[b][i].in());
                out.grad.shapes[b][i].bias = VectorXd::Zero(branches[b][i].out());
            }
            continue;
        }
        MatrixXd g = std::move(d_branch_out[b]);
        for (std::size_t i = branches[b].size(); i-- > 0;) {
            const bool need = i > 0 || trunk_needs_grad;
            g = detail::backward_layer(branches[b][i], branch_cache[b][i], std::move(g), out.grad.shapes[b][i], need);
        }
        if (trunk_needs_grad) d_h += g;
    }

    // trunk
    {
        MatrixXd g = std::move(d_h);
        for (std::size_t i = trunk.size(); i-- > 0;) {
            if (trunk_needs_grad) {
                g = detail::backward_layer(trunk[i], trunk_cache[i], std::move(g), out.grad.trunk[i], i > 0);
            } else {
                out.grad.trunk[i].weight = MatrixXd::Zero(trunk[i].out(), trunk[i].in());
                out.grad.trunk[i].bias = VectorXd::Zero(trunk[i].out());
            }
        }
    }

    out.loss = out.loss.scaled(inv_b);
    out.loss.total = out.loss.freq + out.loss.shape;
    return out;
}

/// Mean loss over a dataset in evaluation mode.
inline LossValue evaluate_loss(const SurrogateNetwork& net, const design::Dataset& data, const LossConfig& cfg) {
    if (data.size() == 0) return {};
    const Batch batch = make_batch(net, data);
    const BatchOutput pred = net.forward_batch(batch.pi);
    LossValue sum;
    for (Index j = 0; j < batch.size(); ++j) {
        std::vector<VectorXd> sp(pred.shapes.size()), st(pred.shapes.size());
        for (std::size_t k = 0; k < pred.shapes.size(); ++k) {
            if (pred.shapes[k].size() == 0) continue;
            sp[k] = pred.shapes[k].col(j);
            st[k] = batch.shapes[k].col(j);
        }
        sum += sample_loss(pred.freq_z.col(j), batch.freq_z.col(j), sp, st, cfg);
    }
    return sum.scaled(1.0 / static_cast<double>(batch.size()));
}

// ---------------------------------------------------------------------------

/// Adam with bias correction; `beta1` is the "momentum coefficient".
class Adam {
public:
    Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(SurrogateNetwork& net, const Gradients& g) {
        std::vector<DenseLayer*> layers;
        net.for_each_layer([&](DenseLayer& l) { layers.push_back(&l); });
        std::vector<const LayerGrad*> grads;
        for (const auto& x : g.trunk) grads.push_back(&x);
        for (const auto& x : g.freq) grads.push_back(&x);
        for (const auto& b : g.shapes)
            for (const auto& x : b) grads.push_back(&x);
        if (grads.size() != layers.size()) throw SpecError("adam: gradient layout does not match the network");
        if (m_w_.empty()) {
            for (auto* l : layers) {
                m_w_.push_back(MatrixXd::Zero(l->out(), l->in()));
                v_w_.push_back(MatrixXd::Zero(l->out(), l->in()));
                m_b_.push_back(VectorXd::Zero(l->out()));
                v_b_.push_back(VectorXd::Zero(l->out()));
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (!layers[i]->trainable) continue;
            update(layers[i]->weight, grads[i]->weight, m_w_[i], v_w_[i], c1, c2);
            update(layers[i]->bias, grads[i]->bias, m_b_[i], v_b_[i], c1, c2);
        }
    }

    void set_learning_rate(double lr) { lr_ = lr; }
    double learning_rate() const { return lr_; }
    std::uint64_t steps() const { return t_; }

private:
    template <class P>
    void update(P& param, const P& grad, P& m, P& v, double c1, double c2) {
        m = b1_ * m + (1.0 - b1_) * grad;
        v = b2_ * v + (1.0 - b2_) * grad.cwiseProduct(grad);
        param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    }

    double lr_, b1_, b2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<MatrixXd> m_w_, v_w_;
    std::vector<VectorXd> m_b_, v_b_;
};

struct TrainConfig {
    int epochs = 1000;
    Index batch_size = 16;
    double learning_rate = 1e-3;
    double beta1 = 0.98;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t shuffle_seed = 1;
    std::uint64_t dropout_seed = 2;
    double holdout_fraction = 0.2;
    /// Learning rate at the last epoch as a fraction of the initial one
    /// (cosine schedule); 1 keeps it constant.
    double final_lr_fraction = 1.0;

    void validate() const {
        if (epochs < 0) throw SpecError("train config: epochs must be >= 0");
        if (batch_size < 1) throw SpecError("train config: batch_size must be >= 1");
        if (!(learning_rate >= 0.0)) throw SpecError("train config: learning_rate must be >= 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw SpecError("train config: Adam betas must lie in [0, 1)");
        if (!(epsilon > 0.0)) throw SpecError("train config: epsilon must be > 0");
        if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) throw SpecError("train config: holdout_fraction must lie in [0, 1)");
        if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) throw SpecError("train config: final_lr_fraction must lie in (0, 1]");
    }

    double learning_rate_at(int epoch) const {
        if (final_lr_fraction == 1.0 || epochs <= 1) return learning_rate;
        const double t = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
        return learning_rate * (final_lr_fraction + (1.0 - final_lr_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * t)));
    }
};

struct EpochRecord {
    int epoch = 0;
    LossValue train;
    LossValue holdout;
    bool has_holdout = false;
};

using TrainingHistory = std::vector<EpochRecord>;

/// Optional per-epoch hook (progress logging).
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Sets input statistics (mean/std of pi) and/or frequency statistics
/// (mean/std per slot) from `data`. Zero-variance columns get scale 1.
inline void fit_normalization(SurrogateNetwork& net, const design::Dataset& data, bool inputs, bool frequencies) {
    auto stats = [](const MatrixXd& cols, VectorXd& mean, VectorXd& scale) {
        mean = cols.colwise().mean().transpose();
        scale.resize(mean.size());
        for (Index i = 0; i < mean.size(); ++i) {
            const double var = (cols.col(i).array() - mean(i)).square().mean();
            scale(i) = var > 0.0 ? std::sqrt(var) : 1.0;
        }
    };
    if (inputs) stats(data.inputs, net.normalization().input_mean, net.normalization().input_scale);
    if (frequencies) {
        if (data.meta.n != net.outputs()) throw DimensionMismatchError("fit_normalization: dataset modes != network outputs");
        stats(data.outputs.leftCols(data.meta.n), net.normalization().freq_mean, net.normalization().freq_scale);
    }
}

/// Mini-batch Adam on `train_set`; the set is reshuffled every epoch and the
/// holdout (may be empty) is scored in evaluation mode after each epoch.
/// Only layers flagged trainable are updated.
inline TrainingHistory train(SurrogateNetwork& net, const design::Dataset& train_set, const design::Dataset& holdout,
                             const TrainConfig& cfg, const LossConfig& loss_cfg, const EpochCallback& on_epoch = {}) {
    cfg.validate();
    loss_cfg.validate(net.outputs());
    net.validate();
    if (train_set.size() == 0) throw SpecError("train: empty training set");
    Adam adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    Rng dropout_rng(cfg.dropout_seed);
    std::vector<Index> order(static_cast<std::size_t>(train_set.size()));
    TrainingHistory history;
    history.reserve(static_cast<std::size_t>(cfg.epochs));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        adam.set_learning_rate(cfg.learning_rate_at(epoch));
        std::iota(order.begin(), order.end(), Index{0});
        Rng shuffle_rng(derive_seed(cfg.shuffle_seed, static_cast<std::uint64_t>(epoch)));
        shuffle(order.begin(), order.end(), shuffle_rng);
        EpochRecord rec;
        rec.epoch = epoch + 1;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const std::vector<Index> rows(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(stop));
            const Batch batch = make_batch(net, train_set, rows);
            const LossAndGradient lg = loss_and_gradient(net, batch, loss_cfg, true, &dropout_rng);
            if (!std::isfinite(lg.loss.total)) {
                std::ostringstream msg;
                msg << "non-finite training loss at epoch " << epoch + 1 << ", batch starting at " << start
                    << " (L_f = " << lg.loss.freq << ", L_phi = " << lg.loss.shape << ")";
                throw NumericalError(msg.str());
            }
            rec.train += lg.loss.scaled(static_cast<double>(stop - start));
            adam.step(net, lg.grad);
        }
        rec.train = rec.train.scaled(1.0 / static_cast<double>(order.size()));
        if (holdout.size() > 0) {
            rec.holdout = evaluate_loss(net, holdout, loss_cfg);
            rec.has_holdout = true;
        }
        history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return history;
}

/// Fresh network on `data`: split off the holdout, fit normalization on the
/// training part, train.
struct FitResult {
    SurrogateNetwork net;
    TrainingHistory history;
};

inline FitResult fit_surrogate(const NetworkSpec& spec, std::uint64_t init_seed, const design::Dataset& data,
                               const TrainConfig& cfg, const LossConfig& loss_cfg, const EpochCallback& on_epoch = {}) {
    FitResult r{SurrogateNetwork(spec, init_seed), {}};
    design::Dataset train_set = data, holdout;
    if (cfg.holdout_fraction > 0.0) std::tie(train_set, holdout) = design::split(data, cfg.holdout_fraction, cfg.shuffle_seed);
    fit_normalization(r.net, train_set, true, true);
    r.history = train(r.net, train_set, holdout, cfg, loss_cfg, on_epoch);
    return r;
}

// ---------------------------------------------------------------------------

struct ModeValidation {
    double r2 = 0.0;
    bool r2_defined = true;
    double mac_min = 0.0;
    double mac_mean = 0.0;
    bool has_shape = false;
};

struct ValidationReport {
    std::vector<ModeValidation> modes;
    Eigen::MatrixXd mac;          // samples x slots (NaN where a slot has no shape)
    Eigen::MatrixXd predicted_f;  // samples x slots, Hz

    double min_r2() const {
        double v = 1.0;
        for (const auto& m : modes)
            if (m.r2_defined) v = std::min(v, m.r2);
        return v;
    }
    double min_mac() const {
        double v = 1.0;
        for (const auto& m : modes)
            if (m.has_shape) v = std::min(v, m.mac_min);
        return v;
    }
};

/// Per-slot frequency R^2 and per-sample MAC against the dataset targets.
inline ValidationReport validate(const SurrogateNetwork& net, const design::Dataset& data) {
    const Batch batch = make_batch(net, data);
    const BatchOutput pred = net.forward_batch(batch.pi);
    const Index q = data.size(), n = net.outputs();
    ValidationReport rep;
    rep.modes.resize(static_cast<std::size_t>(n));
    rep.mac = MatrixXd::Constant(q, n, std::numeric_limits<double>::quiet_NaN());
    rep.predicted_f.resize(q, n);
    for (Index j = 0; j < q; ++j) rep.predicted_f.row(j) = net.denormalize_frequencies(pred.freq_z.col(j)).transpose();
    for (Index k = 0; k < n; ++k) {
        auto& mv = rep.modes[static_cast<std::size_t>(k)];
        const VectorXd target = data.outputs.col(k);
        const double mean = target.mean();
        const double ss_tot = (target.array() - mean).square().sum();
        const double ss_res = (rep.predicted_f.col(k) - target).squaredNorm();
        if (ss_tot > 0.0) {
            mv.r2 = 1.0 - ss_res / ss_tot;
        } else {
            mv.r2_defined = false;
            mv.r2 = std::numeric_limits<double>::quiet_NaN();
        }
        if (pred.shapes[static_cast<std::size_t>(k)].size() == 0) continue;
        mv.has_shape = true;
        double mn = 1.0, sum = 0.0;
        for (Index j = 0; j < q; ++j) {
            const double v = mac_or_zero(pred.shapes[static_cast<std::size_t>(k)].col(j), batch.shapes[static_cast<std::size_t>(k)].col(j));
            rep.mac(j, k) = v;
            mn = std::min(mn, v);
            sum += v;
        }
        mv.mac_min = mn;
        mv.mac_mean = sum / static_cast<double>(q);
    }
    return rep;
}

}  // namespace modaltl::nn
