#include <gtest/gtest.h>

#include <filesystem>

#include "modaltl/design/dataset.hpp"

using namespace modaltl;
using namespace modaltl::design;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::string temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("modaltl_test_" + name);
    std::filesystem::remove_all(p);
    return p.string();
}

const fem::ModalAnalyzer& analyzer() {
    static const fem::ModalAnalyzer a(fem::source_beam(), fem::SensorLayout{}, 10);
    return a;
}

}  // namespace

TEST(Lhs, OneSamplePerStratumSmallCase) {
    const MatrixXd x = lhs_sample(4, DesignBounds::uniform(1, 0.0, 1.0), 3);
    std::vector<int> hits(4, 0);
    for (Eigen::Index j = 0; j < 4; ++j) ++hits[static_cast<std::size_t>(x(j, 0) * 4.0)];
    for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(Lhs, StratificationRandomized) {
    Rng meta(99);
    for (int trial = 0; trial < 25; ++trial) {
        const auto dim = 1 + static_cast<Eigen::Index>(uniform01(meta) * 8);
        const auto q = 1 + static_cast<Eigen::Index>(uniform01(meta) * 64);
        DesignBounds b{VectorXd(dim), VectorXd(dim)};
        for (Eigen::Index i = 0; i < dim; ++i) {
            b.lower(i) = -1.0 + uniform01(meta);
            b.upper(i) = b.lower(i) + 0.1 + uniform01(meta);
        }
        const MatrixXd x = lhs_sample(q, b, 1000 + static_cast<std::uint64_t>(trial));
        for (Eigen::Index i = 0; i < dim; ++i) {
            std::vector<int> hits(static_cast<std::size_t>(q), 0);
            const double w = (b.upper(i) - b.lower(i)) / static_cast<double>(q);
            for (Eigen::Index j = 0; j < q; ++j) {
                const auto s = std::min<Eigen::Index>(q - 1, static_cast<Eigen::Index>((x(j, i) - b.lower(i)) / w));
                ++hits[static_cast<std::size_t>(s)];
            }
            for (int h : hits) ASSERT_EQ(h, 1);
        }
    }
}

TEST(Lhs, DeterministicAndCoversExtremes) {
    const auto b = DesignBounds::uniform(20, 0.70, 1.05);
    const MatrixXd a = lhs_sample(2048, b, 42);
    const MatrixXd c = lhs_sample(2048, b, 42);
    EXPECT_EQ((a - c).norm(), 0.0);
    for (Eigen::Index i = 0; i < 20; ++i) {
        EXPECT_LT(a.col(i).minCoeff(), 0.7004);
        EXPECT_GT(a.col(i).maxCoeff(), 1.0496);
        EXPECT_GE(a.col(i).minCoeff(), 0.70);
        EXPECT_LE(a.col(i).maxCoeff(), 1.05);
    }
    EXPECT_NE((lhs_sample(16, b, 1) - lhs_sample(16, b, 2)).norm(), 0.0);
}

TEST(Lhs, InvalidInputs) {
    EXPECT_THROW(lhs_sample(0, DesignBounds::uniform(2, 0, 1), 1), RangeError);
    EXPECT_THROW(lhs_sample(3, DesignBounds::uniform(2, 1, 1), 1), RangeError);
}

TEST(Pi, SourceBeamReferenceValue) {
    const auto m = fem::source_beam();
    EXPECT_NEAR(m.flexural_wave_constant(), 534.7, 0.05);
    const auto pi = PiMapping::for_model(m, 13.06);
    const VectorXd v = pi.to_pi(VectorXd::Ones(20));
    for (double x : v) EXPECT_NEAR(x, 0.6397, 1e-4);
    EXPECT_EQ(pi.to_pi(VectorXd::Zero(1))(0), 0.0);
    const VectorXd k = VectorXd::LinSpaced(5, 0.5, 1.0);
    EXPECT_LT((pi.to_pi(0.81 * k) - 0.9 * pi.to_pi(k)).norm(), 1e-15);
}

TEST(Pi, RoundTrip) {
    const auto pi = PiMapping::for_model(fem::target_beam(), 32.13);
    Rng rng(5);
    VectorXd k(20);
    for (auto& v : k) v = 0.7 + 0.35 * uniform01(rng);
    const VectorXd back = pi.to_multipliers(pi.to_pi(k));
    EXPECT_LT(((back - k).array() / k.array()).abs().maxCoeff(), 1e-12);
}

TEST(Dataset, DimensionsAndUndamagedSample) {
    const auto d = generate_dataset(analyzer(), MatrixXd::Ones(1, 20), PiMapping{0.5});
    EXPECT_EQ(d.output_dim(), 160);
    EXPECT_EQ((d.outputs.row(0).transpose() - analyzer().reference().flatten()).norm(), 0.0);
}

TEST(Dataset, RowOrderFollowsDesign) {
    const MatrixXd k = lhs_sample(6, DesignBounds::uniform(20, 0.7, 1.05), 9);
    const auto d = generate_dataset(analyzer(), k, PiMapping{1.0}, 3);
    std::vector<Eigen::Index> perm{5, 2, 0, 1, 4, 3};
    MatrixXd kp(6, 20);
    for (Eigen::Index j = 0; j < 6; ++j) kp.row(j) = k.row(perm[static_cast<std::size_t>(j)]);
    const auto dp = generate_dataset(analyzer(), kp, PiMapping{1.0}, 2);
    for (Eigen::Index j = 0; j < 6; ++j) EXPECT_EQ((dp.outputs.row(j) - d.outputs.row(perm[static_cast<std::size_t>(j)])).norm(), 0.0);
}

TEST(Dataset, FailureNamesSample) {
    MatrixXd k = MatrixXd::Ones(3, 20);
    k(1, 4) = -1.0;
    try {
        generate_dataset(analyzer(), k, PiMapping{1.0});
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("sample 1"), std::string::npos);
    }
}

TEST(Dataset, SplitProperties) {
    const auto d = build_dataset(analyzer(), 10, DesignBounds::uniform(20, 0.7, 1.05), 4);
    const auto [train, hold] = split(d, 0.2, 8);
    EXPECT_EQ(train.size(), 8);
    EXPECT_EQ(hold.size(), 2);
    const auto [train2, hold2] = split(d, 0.2, 8);
    EXPECT_EQ((hold.inputs - hold2.inputs).norm(), 0.0);
    std::vector<double> all;
    for (Eigen::Index j = 0; j < train.size(); ++j) all.push_back(train.multipliers(j, 0));
    for (Eigen::Index j = 0; j < hold.size(); ++j) all.push_back(hold.multipliers(j, 0));
    std::vector<double> orig(d.multipliers.col(0).data(), d.multipliers.col(0).data() + 10);
    std::sort(all.begin(), all.end());
    std::sort(orig.begin(), orig.end());
    EXPECT_EQ(all, orig);
    EXPECT_THROW(split(d, 1.0, 1), RangeError);
}

TEST(Dataset, PersistenceRoundTripAndDeterminism) {
    const auto bounds = DesignBounds::uniform(20, 0.7, 1.05);
    const auto d1 = build_dataset(analyzer(), 5, bounds, 77);
    const auto d2 = build_dataset(analyzer(), 5, bounds, 77, 2);
    const std::string a = temp_dir("ds_a"), b = temp_dir("ds_b");
    save_dataset(d1, a);
    save_dataset(d2, b);
    for (const char* f : {"/meta.jsonl", "/K.csv", "/X.csv", "/Y.csv"}) EXPECT_EQ(io::read_file(a + f), io::read_file(b + f)) << f;
    const auto back = load_dataset(a);
    EXPECT_EQ((back.outputs - d1.outputs).norm(), 0.0);
    EXPECT_EQ((back.inputs - d1.inputs).norm(), 0.0);
    EXPECT_EQ(back.meta.seed, 77u);
    EXPECT_EQ(back.meta.model_hash, d1.meta.model_hash);
    EXPECT_EQ(back.meta.n, 10);
}

TEST(Dataset, SelectModes) {
    const auto d = build_dataset(analyzer(), 3, DesignBounds::uniform(20, 0.7, 1.05), 5);
    const auto s = d.select_modes({2, 0});
    EXPECT_EQ(s.output_dim(), 2 * 16);
    EXPECT_EQ(s.outputs(1, 0), d.outputs(1, 2));
    EXPECT_EQ(s.outputs(1, 2), d.outputs(1, 10 + 2 * 15));
    EXPECT_EQ(s.outputs(1, 2 + 15), d.outputs(1, 10));
}
