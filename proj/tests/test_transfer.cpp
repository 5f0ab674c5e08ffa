#include <gtest/gtest.h>

#include "modaltl/design/dataset.hpp"
#include "modaltl/fem/modal.hpp"
#include "modaltl/nn/training.hpp"
#include "modaltl/transfer/transfer.hpp"
#include "support.hpp"

using namespace modaltl;
using namespace modaltl::transfer;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using testing_support::small_spec;
using testing_support::toy_dataset;

namespace {

ModalSignature random_signature(Index n, Index m, std::uint64_t seed) {
    Rng rng(seed);
    ModalSignature s;
    s.frequencies.resize(n);
    s.shapes.resize(m, n);
    double f = 5.0;
    for (Index r = 0; r < n; ++r) {
        f += 1.0 + 3.0 * uniform01(rng);
        s.frequencies(r) = f;
        VectorXd v(m);
        for (auto& x : v) x = standard_normal(rng);
        s.shapes.col(r) = normalize_shape(v);
    }
    return s;
}

ModePairing pairing_of(std::vector<std::pair<int, int>> pairs, std::size_t source_modes) {
    ModePairing p;
    p.transfer.assign(source_modes, false);
    for (auto [s, t] : pairs) {
        p.pairs.push_back({s, t, 0.0, 1.0, ""});
        p.transfer[static_cast<std::size_t>(s)] = true;
    }
    std::sort(p.pairs.begin(), p.pairs.end(), [](const ModePair& a, const ModePair& b) { return a.target < b.target; });
    return p;
}

nn::SurrogateNetwork trained_source(Index n = 3) {
    auto data = toy_dataset(64, 11, n, 4, 3);
    auto r = nn::fit_surrogate(small_spec(3, n, 4), 5, data, [] {
        nn::TrainConfig c;
        c.epochs = 20;
        c.batch_size = 8;
        return c;
    }(), nn::LossConfig::uniform(n, 3.0));
    return r.net;
}

bool same_weights(const nn::SurrogateNetwork& a, const nn::SurrogateNetwork& b) {
    std::vector<const nn::DenseLayer*> la, lb;
    a.for_each_layer([&](const nn::DenseLayer& l) { la.push_back(&l); });
    b.for_each_layer([&](const nn::DenseLayer& l) { lb.push_back(&l); });
    if (la.size() != lb.size()) return false;
    for (std::size_t i = 0; i < la.size(); ++i)
        if (la[i]->weight != lb[i]->weight || la[i]->bias != lb[i]->bias) return false;
    return true;
}

}  // namespace

TEST(MatchModes, IdenticalSetsGiveIdentity) {
    const auto s = random_signature(6, 9, 3);
    const auto p = match_modes(s, s);
    ASSERT_EQ(p.pairs.size(), 6u);
    for (int r = 0; r < 6; ++r) {
        EXPECT_EQ(p.pairs[static_cast<std::size_t>(r)].source, r);
        EXPECT_EQ(p.pairs[static_cast<std::size_t>(r)].target, r);
        EXPECT_NEAR(p.pairs[static_cast<std::size_t>(r)].mac, 1.0, 1e-12);
        EXPECT_EQ(p.pairs[static_cast<std::size_t>(r)].delta_f, 0.0);
    }
    EXPECT_EQ(std::count(p.transfer.begin(), p.transfer.end(), true), 6);
}

TEST(MatchModes, BeamPairPairsInFrequencyOrder) {
    const fem::ModalAnalyzer src(fem::source_beam(), fem::SensorLayout{}, 10);
    const fem::ModalAnalyzer tgt(fem::target_beam(), fem::SensorLayout{}, 10);
    const auto p = match_modes(src.reference(), tgt.reference());
    ASSERT_EQ(p.pairs.size(), 10u);
    for (int r = 0; r < 10; ++r) {
        const auto& pr = p.pairs[static_cast<std::size_t>(r)];
        EXPECT_EQ(pr.target, r);
        EXPECT_EQ(pr.source, r);
        EXPECT_GT(pr.mac, 0.95) << "mode " << r;
    }
}

TEST(MatchModes, InvariantUnderShapeRescaling) {
    const auto a = random_signature(5, 7, 21);
    auto b = random_signature(5, 7, 22);
    const auto ref = match_modes(a, b);
    auto a2 = a;
    auto b2 = b;
    a2.shapes *= 3.7;
    b2.shapes *= -0.02;
    const auto p = match_modes(a2, b2);
    ASSERT_EQ(p.pairs.size(), ref.pairs.size());
    for (std::size_t i = 0; i < p.pairs.size(); ++i) {
        EXPECT_EQ(p.pairs[i].source, ref.pairs[i].source);
        EXPECT_EQ(p.pairs[i].target, ref.pairs[i].target);
        EXPECT_NEAR(p.pairs[i].mac, ref.pairs[i].mac, 1e-12);
    }
}

TEST(MatchModes, UnequalCountsAndErrors) {
    const auto a = random_signature(6, 5, 1);
    const auto b = a.select({1, 3, 4});
    const auto p = match_modes(a, b);
    ASSERT_EQ(p.pairs.size(), 3u);
    EXPECT_EQ(p.pairs[0].source, 1);
    EXPECT_EQ(p.pairs[1].source, 3);
    EXPECT_EQ(p.pairs[2].source, 4);
    EXPECT_FALSE(p.transfer[0]);
    EXPECT_TRUE(p.transfer[3]);

    ModalSignature empty;
    empty.shapes.resize(5, 0);
    EXPECT_THROW(match_modes(a, empty), RangeError);
    EXPECT_THROW(match_modes(a, random_signature(3, 4, 2)), DimensionMismatchError);
}

TEST(Pairing, JsonRoundTripAndOverride) {
    const auto a = random_signature(4, 5, 9);
    auto p = match_modes(a, a.select({2, 0}));
    p.pairs[0].tag = "manual";
    const auto q = pairing_from_json(to_json(p));
    ASSERT_EQ(q.pairs.size(), p.pairs.size());
    for (std::size_t i = 0; i < p.pairs.size(); ++i) {
        EXPECT_EQ(q.pairs[i].source, p.pairs[i].source);
        EXPECT_EQ(q.pairs[i].target, p.pairs[i].target);
        EXPECT_EQ(q.pairs[i].mac, p.pairs[i].mac);
        EXPECT_EQ(q.pairs[i].tag, p.pairs[i].tag);
    }
    EXPECT_EQ(q.transfer, p.transfer);

    const auto manual = pairing_from_json(io::json::parse(R"({"source_modes": 4, "pairs": [{"source": 3, "target": 1}, {"source": 0, "target": 0}]})"));
    EXPECT_EQ(manual.target_modes(), (std::vector<int>{0, 1}));
    EXPECT_EQ(manual.transfer, (std::vector<bool>{true, false, false, true}));

    EXPECT_THROW(pairing_from_json(io::json::parse(R"({"pairs": [{"source": 0, "target": 0}, {"source": 1, "target": 0}]})")),
                 ConfigError);
    EXPECT_THROW(pairing_from_json(io::json::parse(R"({"pairs": [{"source": 0}]})")), ConfigError);
}

TEST(PrepareTarget, IdentityPairingKeepsPredictions) {
    const auto src = trained_source();
    const auto net = prepare_target_net(src, pairing_of({{0, 0}, {1, 1}, {2, 2}}, 3));
    for (const auto& l : net.trunk()) EXPECT_FALSE(l.trainable);
    for (const auto& l : net.freq()) EXPECT_TRUE(l.trainable);
    EXPECT_EQ(nn::trunk_checksum(net), nn::trunk_checksum(src));
    VectorXd pi(3);
    pi << 0.8, 0.9, 1.0;
    const auto a = src.predict(pi), b = net.predict(pi);
    EXPECT_EQ(a.frequencies, b.frequencies);
    for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(a.shapes[r], b.shapes[r]);
}

TEST(PrepareTarget, ReducedHeadCopiesRowsInSlotOrder) {
    const auto src = trained_source();
    // target mode 0 <- source 2, target mode 1 <- source 0; source 1 unmatched
    const auto net = prepare_target_net(src, pairing_of({{2, 0}, {0, 1}}, 3));
    EXPECT_EQ(net.outputs(), 2);
    EXPECT_EQ(net.freq().back().weight.row(0), src.freq().back().weight.row(2));
    EXPECT_EQ(net.freq().back().weight.row(1), src.freq().back().weight.row(0));
    EXPECT_EQ(net.output_branch(), (std::vector<int>{2, 0}));
    EXPECT_EQ(net.branch_active(), (std::vector<bool>{true, false, true}));
    for (const auto& l : net.shape_branches()[1]) EXPECT_FALSE(l.trainable);

    VectorXd pi(3);
    pi << 0.75, 1.0, 0.9;
    const auto a = src.predict(pi), b = net.predict(pi);
    EXPECT_NEAR(b.frequencies(0), a.frequencies(2), 1e-12);
    EXPECT_NEAR(b.frequencies(1), a.frequencies(0), 1e-12);
    EXPECT_EQ(b.shapes[0], a.shapes[2]);
    EXPECT_EQ(b.shapes[1], a.shapes[0]);
}

TEST(PrepareTarget, DeactivatedBranchHasZeroGradient) {
    const auto src = trained_source();
    const auto pairing = pairing_of({{2, 0}, {0, 1}}, 3);
    const auto target = toy_dataset(16, 4, 3, 4, 3);
    const auto tset = target_dataset_for(target, pairing);
    auto net = prepare_target_net(src, pairing, &tset);
    const auto batch = nn::make_batch(net, tset);
    const auto g = nn::loss_and_gradient(net, batch, nn::LossConfig::uniform(2, 3.0), false);
    for (const auto& lg : g.grad.shapes[1]) {
        EXPECT_EQ(lg.weight.norm(), 0.0);
        EXPECT_EQ(lg.bias.norm(), 0.0);
    }
    for (const auto& lg : g.grad.trunk) EXPECT_EQ(lg.weight.norm(), 0.0);
    EXPECT_GT(g.grad.shapes[0].back().weight.norm(), 0.0);
}

TEST(PrepareTarget, RefitsFrequencyNormalizationOnTarget) {
    const auto src = trained_source();
    const auto pairing = pairing_of({{1, 0}, {2, 1}}, 3);
    auto target = toy_dataset(40, 8, 3, 4, 3);
    target.outputs.leftCols(3) *= 2.0;
    const auto tset = target_dataset_for(target, pairing);
    const auto net = prepare_target_net(src, pairing, &tset);
    for (Index k = 0; k < 2; ++k) {
        const VectorXd f = tset.outputs.col(k);
        const double mean = f.mean();
        const double sd = std::sqrt((f.array() - mean).square().mean());
        EXPECT_NEAR(net.normalization().freq_mean(k), mean, 1e-12);
        EXPECT_NEAR(net.normalization().freq_scale(k), sd, 1e-12);
    }
    EXPECT_EQ(net.normalization().input_mean, src.normalization().input_mean);
}

TEST(PrepareTarget, Errors) {
    const auto src = trained_source();
    EXPECT_THROW(prepare_target_net(src, pairing_of({{0, 0}}, 4)), DimensionMismatchError);
    ModePairing none = pairing_of({{0, 0}}, 3);
    none.transfer[0] = false;
    EXPECT_THROW(prepare_target_net(src, none), RangeError);
    auto fewer = src;
    fewer.shape_branches().pop_back();
    EXPECT_THROW(prepare_target_net(fewer, pairing_of({{2, 0}}, 3)), RangeError);
}

TEST(FineTune, TrunkUnchangedAndHeadsTrained) {
    const auto src = trained_source();
    const auto pairing = pairing_of({{0, 0}, {1, 1}}, 3);
    const auto target = target_dataset_for(toy_dataset(48, 31, 3, 4, 3), pairing);
    auto [tr, ho] = design::split(target, 0.25, 3);
    auto net = prepare_target_net(src, pairing, &tr);
    const auto before = net;
    nn::TrainConfig cfg;
    cfg.epochs = 15;
    cfg.batch_size = 8;
    const auto r = fine_tune(net, tr, ho, cfg, nn::LossConfig::uniform(2, 3.0), 64);
    EXPECT_EQ(r.trunk_checksum_before, r.trunk_checksum_after);
    EXPECT_EQ(nn::trunk_checksum(net), nn::trunk_checksum(src));
    EXPECT_TRUE(r.warnings.empty());
    EXPECT_EQ(r.history.size(), 15u);
    EXPECT_NE(net.freq().back().weight, before.freq().back().weight);
    EXPECT_EQ(net.shape_branches()[2].back().weight, before.shape_branches()[2].back().weight);
    EXPECT_LT(r.history.back().train.total, r.history.front().train.total);
}

TEST(FineTune, ZeroEpochsAndZeroRate) {
    const auto src = trained_source();
    const auto pairing = pairing_of({{0, 0}, {1, 1}, {2, 2}}, 3);
    const auto target = toy_dataset(32, 5, 3, 4, 3);
    auto [tr, ho] = design::split(target, 0.25, 3);
    auto net = prepare_target_net(src, pairing, &tr);
    const auto before = net;
    const auto loss = nn::LossConfig::uniform(3, 3.0);
    nn::TrainConfig cfg;
    cfg.epochs = 0;
    fine_tune(net, tr, ho, cfg, loss);
    EXPECT_TRUE(same_weights(net, before));

    const double pre = nn::evaluate_loss(net, ho, loss).total;
    cfg.epochs = 5;
    cfg.learning_rate = 0.0;
    fine_tune(net, tr, ho, cfg, loss);
    EXPECT_EQ(nn::evaluate_loss(net, ho, loss).total, pre);
}

TEST(FineTune, WarnsWhenTargetNotSmallerAndRejectsTrainableTrunk) {
    const auto src = trained_source();
    const auto pairing = pairing_of({{0, 0}}, 3);
    const auto target = target_dataset_for(toy_dataset(20, 6, 3, 4, 3), pairing);
    auto [tr, ho] = design::split(target, 0.25, 3);
    auto net = prepare_target_net(src, pairing, &tr);
    nn::TrainConfig cfg;
    cfg.epochs = 1;
    const auto r = fine_tune(net, tr, ho, cfg, nn::LossConfig::uniform(1, 3.0), 20);
    ASSERT_EQ(r.warnings.size(), 1u);
    net.set_trunk_trainable(true);
    EXPECT_THROW(fine_tune(net, tr, ho, cfg, nn::LossConfig::uniform(1, 3.0)), SpecError);
}
