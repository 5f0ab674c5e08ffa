#pragma once

// Surrogate-based posterior over stiffness multipliers: truncated Gaussian
// prior, frequency and mode-shape likelihoods, and the MCMC driver for one
// modal observation.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "modaltl/bayes/mcmc.hpp"
#include "modaltl/design/pi.hpp"
#include "modaltl/errors.hpp"
#include "modaltl/fem/signature.hpp"
#include "modaltl/io/json_util.hpp"
#include "modaltl/nn/network.hpp"

namespace modaltl::bayes {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

struct TruncatedGaussianPrior {
    VectorXd mean, sigma, lower, upper;

    static TruncatedGaussianPrior uniform(Index dim, double mean = 1.0, double sigma = 0.04, double lower = 0.70, double upper = 1.05) {
        return {VectorXd::Constant(dim, mean), VectorXd::Constant(dim, sigma), VectorXd::Constant(dim, lower), VectorXd::Constant(dim, upper)};
    }

    Index dim() const { return mean.size(); }

    void validate() const {
        const Index n = mean.size();
        if (sigma.size() != n || lower.size() != n || upper.size() != n) throw DimensionMismatchError("prior: vector sizes differ");
        for (Index i = 0; i < n; ++i) {
            if (!(sigma(i) > 0.0)) throw SpecError("prior: sigma must be > 0");
            if (!(lower(i) <= mean(i) && mean(i) <= upper(i))) throw SpecError("prior: mean must lie inside the bounds");
        }
    }

    bool contains(const VectorXd& k) const { return (k.array() >= lower.array()).all() && (k.array() <= upper.array()).all(); }
};

/// Unnormalized: -sum (k_i - mean_i)^2 / (2 sigma_i^2) inside the box, -inf outside.
inline double log_prior(const VectorXd& k, const TruncatedGaussianPrior& prior) {
    if (k.size() != prior.dim()) throw DimensionMismatchError("log_prior: dimension mismatch");
    if (!prior.contains(k)) return neg_inf;
    return -0.5 * ((k - prior.mean).array() / prior.sigma.array()).square().sum();
}

enum class ShapeLikelihood { mac, full_gaussian, none };

inline const char* to_string(ShapeLikelihood s) {
    switch (s) {
        case ShapeLikelihood::mac: return "mac";
        case ShapeLikelihood::full_gaussian: return "full_gaussian";
        case ShapeLikelihood::none: return "none";
    }
    return "?";
}

inline ShapeLikelihood shape_likelihood_from_string(const std::string& s) {
    if (s == "mac") return ShapeLikelihood::mac;
    if (s == "full_gaussian") return ShapeLikelihood::full_gaussian;
    if (s == "none" || s == "frequency_only") return ShapeLikelihood::none;
    throw SpecError("unknown shape likelihood '" + s + "'");
}

/// sigma_f are relative to the observed frequencies; sigma_phi enter the
/// shape terms directly. `none` drops the shape terms (frequency-only).
struct LikelihoodConfig {
    VectorXd sigma_f;
    VectorXd sigma_phi;
    ShapeLikelihood shape = ShapeLikelihood::mac;

    static LikelihoodConfig uniform(Index n, double sf = 0.02, double sphi = 0.006, ShapeLikelihood s = ShapeLikelihood::mac) {
        return {VectorXd::Constant(n, sf), VectorXd::Constant(n, sphi), s};
    }

    void validate(Index n) const {
        if (sigma_f.size() != n || sigma_phi.size() != n) throw DimensionMismatchError("likelihood: one sigma per mode is required");
        if (!(sigma_f.array() > 0.0).all() || !(sigma_phi.array() > 0.0).all()) throw SpecError("likelihood: sigmas must be > 0");
    }
};

/// sum_r [-log(sqrt(2 pi) s_r) - (f_r - fhat_r)^2 / (2 s_r^2)], s_r = sigma_f[r] f_r.
inline double log_likelihood_freq(const VectorXd& observed, const VectorXd& predicted, const VectorXd& sigma_rel) {
    if (observed.size() != predicted.size() || observed.size() != sigma_rel.size())
        throw DimensionMismatchError("frequency likelihood: size mismatch");
    double v = 0.0;
    for (Index r = 0; r < observed.size(); ++r) {
        const double s = sigma_rel(r) * observed(r);
        const double d = observed(r) - predicted(r);
        v += -std::log(std::sqrt(2.0 * std::numbers::pi) * s) - d * d / (2.0 * s * s);
    }
    return v;
}

/// -log(sqrt(2 pi) sigma) - (1 - MAC) / (2 sigma^2); -inf for a zero shape.
inline double log_likelihood_mac(const VectorXd& observed, const VectorXd& predicted, double sigma) {
    if (observed.size() != predicted.size()) throw DimensionMismatchError("MAC likelihood: size mismatch");
    if (observed.squaredNorm() == 0.0 || predicted.squaredNorm() == 0.0) return neg_inf;
    const double m = mac(observed, predicted);
    return -std::log(std::sqrt(2.0 * std::numbers::pi) * sigma) - (1.0 - m) / (2.0 * sigma * sigma);
}

/// beta_r = phi^T phihat / phihat^T phihat.
inline double shape_scale(const VectorXd& observed, const VectorXd& predicted) {
    return observed.dot(predicted) / predicted.squaredNorm();
}

/// Gaussian log density of phi - beta_r phihat under sigma^2 (phi^T phi / m) I_m.
inline double log_likelihood_full_gaussian(const VectorXd& observed, const VectorXd& predicted, double sigma) {
    if (observed.size() != predicted.size()) throw DimensionMismatchError("shape likelihood: size mismatch");
    if (predicted.squaredNorm() == 0.0 || observed.squaredNorm() == 0.0) return neg_inf;
    const auto m = static_cast<double>(observed.size());
    const double var = sigma * sigma * observed.squaredNorm() / m;
    const VectorXd res = observed - shape_scale(observed, predicted) * predicted;
    return -0.5 * m * std::log(2.0 * std::numbers::pi * var) - res.squaredNorm() / (2.0 * var);
}

/// One modal observation: n frequencies and n shapes (columns), in the
/// surrogate's output-slot order.
struct Observation {
    double timestamp = 0.0;
    VectorXd frequencies;
    MatrixXd shapes;  // m x n
    std::string tag;
};

inline io::json to_json(const Observation& o) {
    io::json shapes = io::json::array();
    for (Index r = 0; r < o.shapes.cols(); ++r) shapes.push_back(io::to_std(o.shapes.col(r)));
    io::json j = {{"timestamp", o.timestamp}, {"frequencies", io::to_std(o.frequencies)}, {"shapes", shapes}};
    if (!o.tag.empty()) j["scenario"] = o.tag;
    return j;
}

inline Observation observation_from_json(const io::json& j, const std::string& path) {
    Observation o;
    o.timestamp = io::get<double>(j, "timestamp", path);
    o.frequencies = io::to_eigen(io::get<std::vector<double>>(j, "frequencies", path));
    const auto shapes = io::get<std::vector<std::vector<double>>>(j, "shapes", path);
    if (static_cast<Index>(shapes.size()) != o.frequencies.size())
        throw ConfigError(path + "/shapes", "expected one shape per frequency");
    const auto m = shapes.empty() ? Index{0} : static_cast<Index>(shapes[0].size());
    o.shapes.resize(m, static_cast<Index>(shapes.size()));
    for (std::size_t r = 0; r < shapes.size(); ++r) {
        if (static_cast<Index>(shapes[r].size()) != m) throw ConfigError(path + "/shapes/" + std::to_string(r), "ragged shape");
        o.shapes.col(static_cast<Index>(r)) = io::to_eigen(shapes[r]);
    }
    o.tag = io::get<std::string>(j, "scenario", path, std::string{});
    for (Index r = 0; r < o.frequencies.size(); ++r)
        if (!(o.frequencies(r) > 0.0)) throw ConfigError(path + "/frequencies", "frequencies must be positive");
    return o;
}

/// Posterior over k for one observation, evaluated through the surrogate
/// after mapping k to pi.
class SurrogatePosterior {
public:
    SurrogatePosterior(const nn::SurrogateNetwork& net, design::PiMapping pi, TruncatedGaussianPrior prior, LikelihoodConfig lik)
        : net_(&net), pi_(pi), prior_(std::move(prior)), lik_(std::move(lik)) {
        prior_.validate();
        lik_.validate(net.outputs());
        if (prior_.dim() != net.input_dim()) throw DimensionMismatchError("posterior: prior dimension differs from the surrogate input");
    }

    void check(const Observation& obs) const {
        if (obs.frequencies.size() != net_->outputs())
            throw DimensionMismatchError("observation has " + std::to_string(obs.frequencies.size()) + " modes, surrogate predicts " +
                                         std::to_string(net_->outputs()));
        if (obs.shapes.rows() != net_->sensors() || obs.shapes.cols() != net_->outputs())
            throw DimensionMismatchError("observation shape block must be m x n = " + std::to_string(net_->sensors()) + " x " +
                                         std::to_string(net_->outputs()));
    }

    double log_likelihood(const VectorXd& k, const Observation& obs) const {
        const nn::Prediction p = net_->predict(pi_.to_pi(k));
        double v = log_likelihood_freq(obs.frequencies, p.frequencies, lik_.sigma_f);
        if (lik_.shape == ShapeLikelihood::none) return v;
        for (Index r = 0; r < net_->outputs(); ++r) {
            const auto& ph = p.shapes[static_cast<std::size_t>(r)];
            if (ph.size() == 0) continue;
            const VectorXd phi = obs.shapes.col(r);
            v += lik_.shape == ShapeLikelihood::mac ? log_likelihood_mac(phi, ph, lik_.sigma_phi(r))
                                                    : log_likelihood_full_gaussian(phi, ph, lik_.sigma_phi(r));
        }
        return v;
    }

    double log_posterior(const VectorXd& k, const Observation& obs) const {
        const double lp = log_prior(k, prior_);
        if (lp == neg_inf) return neg_inf;
        return lp + log_likelihood(k, obs);
    }

    /// Chain started at the prior mean.
    PosteriorSummary sample(const Observation& obs, const McmcConfig& cfg, std::uint64_t seed) const {
        check(obs);
        const auto r = run_mcmc([&](const VectorXd& k) { return log_posterior(k, obs); }, prior_.mean, cfg, seed);
        return summarize(r);
    }

    const TruncatedGaussianPrior& prior() const { return prior_; }
    const LikelihoodConfig& likelihood() const { return lik_; }
    const design::PiMapping& pi() const { return pi_; }
    const nn::SurrogateNetwork& net() const { return *net_; }

private:
    const nn::SurrogateNetwork* net_;
    design::PiMapping pi_;
    TruncatedGaussianPrior prior_;
    LikelihoodConfig lik_;
};

/// Observation equal to the surrogate's own (noiseless) prediction at k.
inline Observation surrogate_observation(const nn::SurrogateNetwork& net, const design::PiMapping& pi, const VectorXd& k) {
    const nn::Prediction p = net.predict(pi.to_pi(k));
    Observation o;
    o.frequencies = p.frequencies;
    o.shapes = MatrixXd::Zero(net.sensors(), net.outputs());
    for (Index r = 0; r < net.outputs(); ++r)
        if (p.shapes[static_cast<std::size_t>(r)].size() > 0) o.shapes.col(r) = p.shapes[static_cast<std::size_t>(r)];
    return o;
}

// ---------------------------------------------------------------------------

inline io::json to_json(const TruncatedGaussianPrior& p) {
    return {{"mean", io::to_std(p.mean)}, {"sigma", io::to_std(p.sigma)}, {"lower", io::to_std(p.lower)}, {"upper", io::to_std(p.upper)}};
}

/// Scalars are broadcast to every multiplier.
inline VectorXd scalar_or_vector(const io::json& j, const char* key, const std::string& path, Index n, double fallback) {
    if (!j.contains(key)) return VectorXd::Constant(n, fallback);
    const auto& v = j[key];
    if (v.is_number()) return VectorXd::Constant(n, v.get<double>());
    const auto list = io::get<std::vector<double>>(j, key, path);
    if (static_cast<Index>(list.size()) != n) throw ConfigError(path + "/" + key, "expected " + std::to_string(n) + " values");
    return io::to_eigen(list);
}

inline TruncatedGaussianPrior prior_from_json(const io::json& j, const std::string& path, Index n) {
    TruncatedGaussianPrior p{scalar_or_vector(j, "mean", path, n, 1.0), scalar_or_vector(j, "sigma", path, n, 0.04),
                             scalar_or_vector(j, "lower", path, n, 0.70), scalar_or_vector(j, "upper", path, n, 1.05)};
    try {
        p.validate();
    } catch (const Error& e) {
        throw ConfigError(path.empty() ? "/" : path, e.what());
    }
    return p;
}

inline LikelihoodConfig likelihood_from_json(const io::json& j, const std::string& path, Index n) {
    LikelihoodConfig c;
    c.sigma_f = scalar_or_vector(j, "sigma_f", path, n, 0.02);
    c.sigma_phi = scalar_or_vector(j, "sigma_phi", path, n, 0.006);
    try {
        c.shape = shape_likelihood_from_string(io::get<std::string>(j, "shape", path, std::string("mac")));
        c.validate(n);
    } catch (const Error& e) {
        throw ConfigError(path.empty() ? "/" : path, e.what());
    }
    return c;
}

inline McmcConfig mcmc_from_json(const io::json& j, const std::string& path) {
    McmcConfig c;
    c.samples = io::get<Index>(j, "samples", path, c.samples);
    c.burn_in = io::get<Index>(j, "burn_in", path, c.burn_in);
    c.initial_variance = io::get<double>(j, "initial_variance", path, c.initial_variance);
    c.jitter = io::get<double>(j, "jitter", path, c.jitter);
    c.adaptation_scale = io::get<double>(j, "adaptation_scale", path, c.adaptation_scale);
    c.scale_initial = io::get<bool>(j, "scale_initial", path, c.scale_initial);
    try {
        c.validate();
    } catch (const Error& e) {
        throw ConfigError(path.empty() ? "/" : path, e.what());
    }
    return c;
}

inline io::json to_json(const LikelihoodConfig& c) {
    return {{"sigma_f", io::to_std(c.sigma_f)}, {"sigma_phi", io::to_std(c.sigma_phi)}, {"shape", to_string(c.shape)}};
}

inline io::json to_json(const McmcConfig& c) {
    return {{"samples", c.samples},
            {"burn_in", c.burn_in},
            {"initial_variance", c.initial_variance},
            {"jitter", c.jitter},
            {"adaptation_scale", c.adaptation_scale},
            {"scale_initial", c.scale_initial}};
}

}  // namespace modaltl::bayes
