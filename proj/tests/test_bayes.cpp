#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "modaltl/bayes/mcmc.hpp"
#include "modaltl/bayes/posterior.hpp"
#include "support.hpp"

using namespace modaltl;
using namespace modaltl::bayes;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
    VectorXd out(static_cast<Index>(v.size()));
    Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

/// Moments of N(mu, s) truncated to [a, b] by composite Simpson quadrature.
struct TruncatedMoments {
    double mean, std;
};

TruncatedMoments quadrature_moments(double mu, double s, double a, double b, int intervals = 20000) {
    const double h = (b - a) / intervals;
    double z = 0, m1 = 0, m2 = 0;
    for (int i = 0; i <= intervals; ++i) {
        const double x = a + i * h;
        const double w = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        const double p = std::exp(-0.5 * (x - mu) * (x - mu) / (s * s));
        z += w * p;
        m1 += w * x * p;
        m2 += w * x * x * p;
    }
    const double mean = m1 / z;
    return {mean, std::sqrt(m2 / z - mean * mean)};
}

double truncated_cdf(double x, double mu, double s, double a, double b) {
    auto phi = [&](double t) { return 0.5 * std::erfc(-(t - mu) / (s * std::numbers::sqrt2)); };
    return (phi(x) - phi(a)) / (phi(b) - phi(a));
}

/// Small untrained surrogate with N = 3 inputs, n modes, m = 4 sensors.
nn::SurrogateNetwork toy_net(Index n = 2) {
    nn::SurrogateNetwork net(testing_support::small_spec(3, n, 4), 17);
    Rng rng(5);
    net.for_each_layer([&](nn::DenseLayer& l) {
        for (auto& b : l.bias) b = 0.2 * standard_normal(rng);
        l.weight *= 2.0;
    });
    net.normalization().freq_mean = VectorXd::LinSpaced(n, 10.0, 10.0 + 15.0 * static_cast<double>(n - 1));
    net.normalization().freq_scale = VectorXd::LinSpaced(n, 1.5, 1.5 + 1.5 * static_cast<double>(n - 1));
    return net;
}

}  // namespace

TEST(Prior, ValuesAndTruncation) {
    const auto p = TruncatedGaussianPrior::uniform(3);
    EXPECT_EQ(log_prior(VectorXd::Ones(3), p), 0.0);
    EXPECT_EQ(log_prior(vec({1.0, 0.69, 1.0}), p), -std::numeric_limits<double>::infinity());
    EXPECT_EQ(log_prior(vec({1.0, 1.0, 1.06}), p), -std::numeric_limits<double>::infinity());
    EXPECT_NEAR(log_prior(vec({0.96}), TruncatedGaussianPrior::uniform(1)), -0.5, 1e-12);
    EXPECT_THROW(log_prior(VectorXd::Ones(2), p), DimensionMismatchError);
    auto bad = p;
    bad.mean(0) = 1.2;
    EXPECT_THROW(bad.validate(), SpecError);
}

TEST(Likelihood, Frequency) {
    const VectorXd f = vec({10.0, 20.0});
    const VectorXd s = vec({0.02, 0.01});
    const double norm = -std::log(std::sqrt(2 * std::numbers::pi) * 0.2) - std::log(std::sqrt(2 * std::numbers::pi) * 0.2);
    EXPECT_NEAR(log_likelihood_freq(f, f, s), norm, 1e-12);
    // doubling a residual multiplies its quadratic part by 4, i.e. lowers the value by 3x that part
    const double q1 = norm - log_likelihood_freq(f, vec({10.1, 20.0}), s);
    const double q2 = norm - log_likelihood_freq(f, vec({10.2, 20.0}), s);
    EXPECT_NEAR(q2 - q1, 3.0 * q1, 1e-12);
    EXPECT_NEAR(log_likelihood_freq(vec({10.0}), vec({10.2}), vec({0.02})), 0.19050, 5e-6);
    EXPECT_THROW(log_likelihood_freq(f, vec({1.0}), s), DimensionMismatchError);
}

TEST(Likelihood, Mac) {
    const VectorXd phi = vec({0.3, -0.5, 0.8});
    const double top = -std::log(std::sqrt(2 * std::numbers::pi) * 0.006);
    EXPECT_NEAR(log_likelihood_mac(phi, 2.5 * phi, 0.006), top, 1e-12);
    EXPECT_EQ(log_likelihood_mac(phi, -phi, 0.006), log_likelihood_mac(phi, phi, 0.006));
    EXPECT_NEAR(log_likelihood_mac(vec({1.0, 0.0}), vec({0.0, 1.0}), 0.006), -13884.69, 0.005);
    EXPECT_EQ(log_likelihood_mac(phi, VectorXd::Zero(3), 0.006), -std::numeric_limits<double>::infinity());
}

TEST(Likelihood, FullGaussian) {
    EXPECT_DOUBLE_EQ(shape_scale(vec({2.0, 0.0}), vec({1.0, 0.0})), 2.0);
    const VectorXd phi = vec({0.3, -0.5, 0.8, 0.1});
    const double var = 0.05 * 0.05 * phi.squaredNorm() / 4.0;
    EXPECT_NEAR(log_likelihood_full_gaussian(phi, -3.0 * phi, 0.05), -2.0 * std::log(2 * std::numbers::pi * var), 1e-10);
    EXPECT_NEAR(log_likelihood_full_gaussian(vec({1.0, 0.0}), vec({0.0, 1.0}), 0.1), -96.54, 0.005);
    EXPECT_EQ(log_likelihood_full_gaussian(phi, VectorXd::Zero(4), 0.05), -std::numeric_limits<double>::infinity());
}

TEST(Posterior, OutOfBoundsAndDimensionChecks) {
    const auto net = toy_net();
    const SurrogatePosterior post(net, {1.0}, TruncatedGaussianPrior::uniform(3), LikelihoodConfig::uniform(2));
    const auto obs = surrogate_observation(net, post.pi(), VectorXd::Ones(3));
    EXPECT_EQ(post.log_posterior(vec({0.5, 1.0, 1.0}), obs), -std::numeric_limits<double>::infinity());
    EXPECT_TRUE(std::isfinite(post.log_posterior(VectorXd::Ones(3), obs)));
    Observation wrong = obs;
    wrong.shapes = MatrixXd::Ones(5, 2);
    EXPECT_THROW(post.check(wrong), DimensionMismatchError);
    wrong.frequencies = VectorXd::Ones(3);
    EXPECT_THROW(post.check(wrong), DimensionMismatchError);
    EXPECT_THROW(SurrogatePosterior(net, {1.0}, TruncatedGaussianPrior::uniform(4), LikelihoodConfig::uniform(2)), DimensionMismatchError);
    EXPECT_THROW(SurrogatePosterior(net, {1.0}, TruncatedGaussianPrior::uniform(3), LikelihoodConfig::uniform(3)), DimensionMismatchError);
}

TEST(Posterior, LargeShapeSigmaMatchesFrequencyOnly) {
    const auto net = toy_net();
    const auto prior = TruncatedGaussianPrior::uniform(3);
    auto wide = LikelihoodConfig::uniform(2, 0.02, 1e6);
    auto fonly = wide;
    fonly.shape = ShapeLikelihood::none;
    const SurrogatePosterior a(net, {1.0}, prior, wide), b(net, {1.0}, prior, fonly);
    const auto obs = surrogate_observation(net, a.pi(), vec({0.9, 1.0, 0.8}));
    Rng rng(3);
    std::vector<VectorXd> candidates;
    for (int i = 0; i < 200; ++i) {
        VectorXd k(3);
        for (auto& x : k) x = 0.7 + 0.35 * uniform01(rng);
        candidates.push_back(k);
    }
    auto argmax = [&](const SurrogatePosterior& p) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < candidates.size(); ++i)
            if (p.log_posterior(candidates[i], obs) > p.log_posterior(candidates[best], obs)) best = i;
        return best;
    };
    EXPECT_EQ(argmax(a), argmax(b));
}

TEST(Posterior, TruthIsNearOptimalOnNoiselessData) {
    const auto net = toy_net();
    const SurrogatePosterior post(net, {1.0}, TruncatedGaussianPrior::uniform(3), LikelihoodConfig::uniform(2, 0.005, 0.006));
    const VectorXd truth = vec({0.95, 1.0, 0.97});
    const auto obs = surrogate_observation(net, post.pi(), truth);
    const double at_truth = post.log_posterior(truth, obs);
    Rng rng(11);
    for (int i = 0; i < 100; ++i) {
        VectorXd k(3);
        for (auto& x : k) x = 0.7 + 0.35 * uniform01(rng);
        EXPECT_GE(at_truth, post.log_posterior(k, obs)) << k.transpose();
    }
}

TEST(Posterior, ShrinkingSigmaConcentrates) {
    const auto net = toy_net(4);
    const auto prior = TruncatedGaussianPrior::uniform(3);
    const VectorXd truth = vec({0.9, 1.0, 0.95});
    McmcConfig cfg;
    const auto lik = LikelihoodConfig::uniform(4, 0.02, 0.006, ShapeLikelihood::none);
    auto tight = lik;
    tight.sigma_f /= 4.0;
    const SurrogatePosterior a(net, {1.0}, prior, lik), b(net, {1.0}, prior, tight);
    const auto obs = surrogate_observation(net, a.pi(), truth);
    const auto sa = a.sample(obs, cfg, 42), sb = b.sample(obs, cfg, 42);
    for (Index d = 0; d < 3; ++d) EXPECT_LE(sb.std(d), sa.std(d)) << "multiplier " << d;
}

TEST(Mcmc, TruncatedGaussianOracle) {
    const double mu = 1.0, s = 0.02, a = 0.8, b = 1.05;
    TruncatedGaussianPrior target{vec({mu}), vec({s}), vec({a}), vec({b})};
    McmcConfig cfg;
    cfg.samples = 20000;
    cfg.burn_in = 5000;
    const auto r = run_mcmc([&](const VectorXd& k) { return log_prior(k, target); }, vec({1.0}), cfg, 1);
    const auto sum = summarize(r);
    const auto ref = quadrature_moments(mu, s, a, b);
    EXPECT_NEAR(sum.mean(0), ref.mean, 0.002);
    EXPECT_NEAR(sum.std(0), ref.std, 0.05 * ref.std);

    std::vector<double> x(r.chain.data(), r.chain.data() + r.chain.rows());
    std::sort(x.begin(), x.end());
    const auto n = static_cast<double>(x.size());
    double ks = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = truncated_cdf(x[i], mu, s, a, b);
        ks = std::max({ks, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
    }
    EXPECT_LT(ks, 0.02);
    // the closed-form CDF and the quadrature agree
    EXPECT_NEAR(truncated_cdf(ref.mean, mu, s, a, b), 0.5, 0.05);
}

TEST(Mcmc, FlatTargetAcceptsEveryInBoundsProposal) {
    McmcConfig cfg;
    cfg.samples = 3000;
    cfg.burn_in = 1000;
    cfg.initial_variance = 0.05;
    auto flat = [](const VectorXd& k) {
        return ((k.array() >= 0.0).all() && (k.array() <= 1.0).all()) ? 0.0 : -std::numeric_limits<double>::infinity();
    };
    int inside = 0, outside = 0;
    const auto r = run_mcmc(flat, VectorXd::Constant(2, 0.5), cfg, 9, [&](const McmcStep& st) {
        const bool in = (st.proposal->array() >= 0.0).all() && (st.proposal->array() <= 1.0).all();
        EXPECT_EQ(st.accepted, in) << "iteration " << st.iteration;
        (in ? inside : outside)++;
    });
    EXPECT_GT(inside, 0);
    EXPECT_GT(outside, 0);
    EXPECT_EQ(r.accepted, inside);
    EXPECT_TRUE((r.chain.array() >= 0.0).all() && (r.chain.array() <= 1.0).all());
}

TEST(Mcmc, SupportRespectAndDeterminism) {
    const auto prior = TruncatedGaussianPrior::uniform(4, 1.0, 0.1);
    auto target = [&](const VectorXd& k) { return log_prior(k, prior); };
    McmcConfig cfg;
    const auto a = run_mcmc(target, VectorXd::Ones(4), cfg, 77);
    const auto b = run_mcmc(target, VectorXd::Ones(4), cfg, 77);
    const auto c = run_mcmc(target, VectorXd::Ones(4), cfg, 78);
    EXPECT_EQ(a.chain.rows(), cfg.samples - cfg.burn_in);
    for (Index i = 0; i < a.chain.rows(); ++i) EXPECT_TRUE(prior.contains(a.chain.row(i).transpose())) << "sample " << i;
    EXPECT_EQ(a.chain, b.chain);
    EXPECT_NE(a.chain, c.chain);
    const auto s = summarize(a);
    for (Index d = 0; d < 4; ++d) {
        EXPECT_LE(s.p25(d), s.median(d));
        EXPECT_LE(s.median(d), s.p75(d));
    }
}

TEST(Mcmc, AdaptationTrigger) {
    const auto prior = TruncatedGaussianPrior::uniform(2, 1.0, 0.05);
    McmcConfig cfg;
    cfg.samples = 400;
    cfg.burn_in = 150;
    const double s_n = cfg.scale_for(2);
    const MatrixXd sigma0 = s_n * cfg.initial_variance * MatrixXd::Identity(2, 2);
    std::vector<VectorXd> history{VectorXd::Ones(2)};
    run_mcmc([&](const VectorXd& k) { return log_prior(k, prior); }, VectorXd::Ones(2), cfg, 5, [&](const McmcStep& st) {
        const MatrixXd used = (*st.factor) * st.factor->transpose();
        if (st.iteration <= cfg.burn_in) {
            EXPECT_FALSE(st.adapted);
            EXPECT_LT((used - sigma0).norm(), 1e-15) << "iteration " << st.iteration;
        } else {
            EXPECT_TRUE(st.adapted);
            // covariance of every state up to the previous iteration
            VectorXd mean = VectorXd::Zero(2);
            for (const auto& x : history) mean += x;
            mean /= static_cast<double>(history.size());
            MatrixXd cov = MatrixXd::Zero(2, 2);
            for (const auto& x : history) cov += (x - mean) * (x - mean).transpose();
            cov /= static_cast<double>(history.size() - 1);
            const MatrixXd expected = s_n * cov + cfg.jitter * MatrixXd::Identity(2, 2);
            EXPECT_LT((used - expected).norm(), 1e-9 * expected.norm()) << "iteration " << st.iteration;
        }
        history.push_back(*st.state);
    });
}

TEST(Mcmc, ConfigErrors) {
    McmcConfig cfg;
    cfg.burn_in = cfg.samples;
    EXPECT_THROW(cfg.validate(), SpecError);
    EXPECT_THROW(run_mcmc([](const VectorXd&) { return -std::numeric_limits<double>::infinity(); }, VectorXd::Ones(1), McmcConfig{}, 1),
                 NumericalError);
    EXPECT_THROW(detail::proposal_factor(-MatrixXd::Identity(2, 2), 1e-10), NumericalError);
    const MatrixXd rank1 = VectorXd::Ones(2) * VectorXd::Ones(2).transpose();
    EXPECT_NO_THROW(detail::proposal_factor(rank1, 1e-10));
}

TEST(Quantile, LinearInterpolation) {
    EXPECT_DOUBLE_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 0.25), 1.75);
    EXPECT_DOUBLE_EQ(quantile({7.0}, 0.75), 7.0);
    EXPECT_TRUE(std::isnan(quantile({}, 0.5)));
}

TEST(BayesJson, ConfigsAndObservation) {
    const auto prior = prior_from_json(io::json::parse(R"({"sigma": [0.04, 0.02, 0.04], "lower": 0.6})"), "/prior", 3);
    EXPECT_EQ(prior.sigma(1), 0.02);
    EXPECT_EQ(prior.lower(2), 0.6);
    EXPECT_EQ(prior.upper(0), 1.05);
    try {
        prior_from_json(io::json::parse(R"({"sigma": [0.04, 0.02]})"), "/prior", 3);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("/prior/sigma"), std::string::npos);
    }
    EXPECT_THROW(prior_from_json(io::json::parse(R"({"mean": 1.2})"), "/prior", 3), ConfigError);

    const auto lik = likelihood_from_json(io::json::parse(R"({"sigma_f": 0.015, "shape": "frequency_only"})"), "/lik", 2);
    EXPECT_EQ(lik.shape, ShapeLikelihood::none);
    EXPECT_EQ(lik.sigma_phi(1), 0.006);
    EXPECT_THROW(likelihood_from_json(io::json::parse(R"({"shape": "banana"})"), "/lik", 2), ConfigError);
    const auto back = likelihood_from_json(to_json(lik), "", 2);
    EXPECT_EQ(back.sigma_f, lik.sigma_f);

    const auto mc = mcmc_from_json(io::json::parse(R"({"samples": 100, "burn_in": 10})"), "/mcmc");
    EXPECT_EQ(mc.samples, 100);
    EXPECT_TRUE(mc.scale_initial);
    EXPECT_THROW(mcmc_from_json(io::json::parse(R"({"samples": 10, "burn_in": 10})"), "/mcmc"), ConfigError);

    Observation o;
    o.timestamp = 7;
    o.frequencies = vec({1.5, 2.5});
    o.shapes = MatrixXd::Random(3, 2);
    o.tag = "pair";
    const auto p = observation_from_json(io::json::parse(to_json(o).dump()), "/obs");
    EXPECT_EQ(p.frequencies, o.frequencies);
    EXPECT_EQ(p.shapes, o.shapes);
    EXPECT_EQ(p.tag, "pair");
    EXPECT_THROW(observation_from_json(io::json::parse(R"({"timestamp": 0, "frequencies": [1.0], "shapes": []})"), "/obs"), ConfigError);
}
