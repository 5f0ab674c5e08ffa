#pragma once

// Adaptive Metropolis sampler for an arbitrary log density.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <vector>

#include "modaltl/errors.hpp"
#include "modaltl/random.hpp"

namespace modaltl::bayes {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct McmcConfig {
    Index samples = 5000;   // N_s
    Index burn_in = 2000;   // N_b
    double initial_variance = 3e-4;  // Sigma_0 = diag(initial_variance), times s_N when scale_initial
    bool scale_initial = true;
    double jitter = 1e-10;
    /// s_N; <= 0 selects 2.38^2 / N.
    double adaptation_scale = 0.0;
    bool keep_chain = true;

    double scale_for(Index dim) const { return adaptation_scale > 0.0 ? adaptation_scale : 2.38 * 2.38 / static_cast<double>(dim); }

    void validate() const {
        if (samples < 1) throw SpecError("mcmc: samples must be >= 1");
        if (burn_in < 0 || burn_in >= samples) throw SpecError("mcmc: burn-in must satisfy 0 <= N_b < N_s");
        if (!(initial_variance > 0.0)) throw SpecError("mcmc: initial proposal variance must be > 0");
        if (!(jitter >= 0.0)) throw SpecError("mcmc: jitter must be >= 0");
    }
};

struct McmcStep {
    Index iteration = 0;  // 1-based
    const VectorXd* proposal = nullptr;
    const VectorXd* state = nullptr;
    bool accepted = false;
    bool adapted = false;  // proposal covariance came from the chain history
    const MatrixXd* factor = nullptr;  // lower Cholesky factor of the proposal covariance used
};

using McmcObserver = std::function<void(const McmcStep&)>;

struct McmcResult {
    MatrixXd chain;          // retained samples (rows), N_s - N_b of them
    VectorXd log_density;    // per retained sample
    Index accepted = 0;
    Index proposals = 0;
    double acceptance_rate() const { return proposals ? static_cast<double>(accepted) / static_cast<double>(proposals) : 0.0; }
};

namespace detail {

/// Lower Cholesky factor, adding the jitter (growing tenfold up to 1e-4) when
/// the matrix is not numerically positive definite.
inline MatrixXd proposal_factor(const MatrixXd& cov, double jitter) {
    const Index n = cov.rows();
    double eps = jitter;
    for (int attempt = 0; attempt < 8; ++attempt) {
        Eigen::LLT<MatrixXd> llt(cov + eps * MatrixXd::Identity(n, n));
        if (llt.info() == Eigen::Success) return llt.matrixL();
        eps = std::max(eps * 10.0, 1e-12);
        if (eps > 1e-4) break;
    }
    throw NumericalError("mcmc: proposal covariance is persistently degenerate");
}

}  // namespace detail

/// Random-walk Metropolis with x_p ~ N(x_c, Sigma_p) and
/// alpha = min(1, p(x_p) / p(x_c)). For i <= N_b, Sigma_p = Sigma_0; afterwards
/// Sigma_p = s_N cov(x_1..x_i) + jitter I, where the history holds every chain
/// state so far. The current state is retained after each post-burn-in step.
inline McmcResult run_mcmc(const std::function<double(const VectorXd&)>& log_target, const VectorXd& x0, const McmcConfig& cfg,
                           std::uint64_t seed, const McmcObserver& observer = {}) {
    cfg.validate();
    const Index dim = x0.size();
    if (dim == 0) throw SpecError("mcmc: empty state");
    Rng rng(seed);
    const double s_n = cfg.scale_for(dim);

    VectorXd xc = x0;
    double lc = log_target(xc);
    if (!std::isfinite(lc)) throw NumericalError("mcmc: initial state has zero posterior density");

    const double v0 = cfg.scale_initial ? s_n * cfg.initial_variance : cfg.initial_variance;
    MatrixXd factor = std::sqrt(v0) * MatrixXd::Identity(dim, dim);
    // Welford statistics over the state history
    VectorXd mean = xc;
    MatrixXd m2 = MatrixXd::Zero(dim, dim);
    Index count = 1;

    McmcResult out;
    const Index kept = cfg.samples - cfg.burn_in;
    if (cfg.keep_chain) {
        out.chain.resize(kept, dim);
        out.log_density.resize(kept);
    }
    VectorXd z(dim), xp(dim);
    for (Index i = 1; i <= cfg.samples; ++i) {
        const bool adapted = i > cfg.burn_in && i > 1;
        for (Index d = 0; d < dim; ++d) z(d) = standard_normal(rng);
        xp.noalias() = xc + factor * z;
        const double lp = log_target(xp);
        const double u = uniform01(rng);
        bool accept = false;
        if (lp != -std::numeric_limits<double>::infinity() && !std::isnan(lp)) accept = lp >= lc || std::log(u) < lp - lc;
        ++out.proposals;
        if (accept) {
            xc = xp;
            lc = lp;
            ++out.accepted;
        }
        ++count;
        const VectorXd delta = xc - mean;
        mean += delta / static_cast<double>(count);
        m2.noalias() += delta * (xc - mean).transpose();
        if (observer) observer({i, &xp, &xc, accept, adapted, &factor});
        if (i > cfg.burn_in) {
            if (cfg.keep_chain) {
                out.chain.row(i - cfg.burn_in - 1) = xc.transpose();
                out.log_density(i - cfg.burn_in - 1) = lc;
            }
        }
        if (i >= cfg.burn_in && i < cfg.samples) {
            const MatrixXd cov = m2 / static_cast<double>(count - 1);
            factor = detail::proposal_factor(s_n * cov, cfg.jitter);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

/// Linear-interpolation quantile (numpy's default) of unsorted data.
inline double quantile(std::vector<double> v, double p) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double h = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct PosteriorSummary {
    VectorXd mean, std, median, p25, p75;
    double acceptance = 0.0;
    MatrixXd chain;  // retained samples (rows)

    Index dim() const { return mean.size(); }
};

/// Per-coordinate statistics of the retained chain (std with N - 1).
inline PosteriorSummary summarize(const McmcResult& r) {
    PosteriorSummary s;
    const Index n = r.chain.rows(), dim = r.chain.cols();
    s.acceptance = r.acceptance_rate();
    s.mean = r.chain.colwise().mean().transpose();
    s.std.resize(dim);
    s.median.resize(dim);
    s.p25.resize(dim);
    s.p75.resize(dim);
    for (Index d = 0; d < dim; ++d) {
        const VectorXd c = r.chain.col(d);
        s.std(d) = n > 1 ? std::sqrt((c.array() - s.mean(d)).square().sum() / static_cast<double>(n - 1)) : 0.0;
        std::vector<double> v(c.data(), c.data() + n);
        s.median(d) = quantile(v, 0.5);
        s.p25(d) = quantile(v, 0.25);
        s.p75(d) = quantile(v, 0.75);
    }
    s.chain = r.chain;
    return s;
}

}  // namespace modaltl::bayes
