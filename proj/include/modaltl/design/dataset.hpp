#pragma once

// Training populations {X, Y}: LHS designs over stiffness multipliers mapped to
// pi, evaluated through the FEM, persisted as meta.jsonl + CSV matrices.

#include <Eigen/Dense>

#include <atomic>
#include <exception>
#include <filesystem>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "modaltl/design/lhs.hpp"
#include "modaltl/design/pi.hpp"
#include "modaltl/errors.hpp"
#include "modaltl/fem/json.hpp"
#include "modaltl/fem/modal.hpp"
#include "modaltl/io/json_util.hpp"
#include "modaltl/io/text.hpp"
#include "modaltl/random.hpp"

namespace modaltl::design {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct DatasetMetadata {
    std::uint64_t seed = 0;
    DesignBounds bounds;
    std::string model_hash;
    Index n = 0;  // modes
    Index m = 0;  // sensors
    double reference_frequency = 0.0;  // undamaged f1 used for pi
    double pi_scale = 0.0;
    std::string label;
    std::string config_hash;
};

/// Row j of `multipliers`/`inputs`/`outputs` is sample j. Outputs are
/// flattened signatures (f_1..f_n, phi_1, .., phi_n), l = n (1 + m).
struct Dataset {
    MatrixXd multipliers;  // q x N
    MatrixXd inputs;       // q x N (pi)
    MatrixXd outputs;      // q x l
    DatasetMetadata meta;

    Index size() const { return inputs.rows(); }
    Index input_dim() const { return inputs.cols(); }
    Index output_dim() const { return outputs.cols(); }

    ModalSignature signature(Index j) const { return ModalSignature::unflatten(outputs.row(j).transpose(), meta.n, meta.m); }

    void validate() const {
        if (inputs.rows() != outputs.rows() || multipliers.rows() != inputs.rows())
            throw DimensionMismatchError("dataset: X and Y sample counts differ");
        if (outputs.cols() != meta.n * (1 + meta.m)) throw DimensionMismatchError("dataset: output width != n(1+m)");
    }

    /// Keeps samples `rows` in the given order.
    Dataset subset(const std::vector<Index>& rows) const {
        Dataset d;
        d.meta = meta;
        d.multipliers.resize(static_cast<Index>(rows.size()), multipliers.cols());
        d.inputs.resize(static_cast<Index>(rows.size()), inputs.cols());
        d.outputs.resize(static_cast<Index>(rows.size()), outputs.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            d.multipliers.row(static_cast<Index>(i)) = multipliers.row(rows[i]);
            d.inputs.row(static_cast<Index>(i)) = inputs.row(rows[i]);
            d.outputs.row(static_cast<Index>(i)) = outputs.row(rows[i]);
        }
        return d;
    }

    /// Keeps only the listed modes (in that order) in every output row.
    Dataset select_modes(const std::vector<int>& modes) const {
        Dataset d = *this;
        const auto count = static_cast<Index>(modes.size());
        d.meta.n = count;
        d.outputs.resize(size(), count * (1 + meta.m));
        for (Index j = 0; j < size(); ++j) d.outputs.row(j) = signature(j).select(modes).flatten().transpose();
        return d;
    }
};

/// FEM evaluation of every design row. Rows are computed by `threads`
/// workers and stored in design order.
inline Dataset generate_dataset(const fem::ModalAnalyzer& analyzer, const MatrixXd& multipliers, const PiMapping& pi,
                                unsigned threads = 1) {
    const Index q = multipliers.rows();
    const Index n = analyzer.modes();
    const Index m = analyzer.sensors();
    Dataset d;
    d.multipliers = multipliers;
    d.inputs = pi.to_pi_rows(multipliers);
    d.outputs.resize(q, n * (1 + m));
    d.meta.n = n;
    d.meta.m = m;
    d.meta.pi_scale = pi.scale;
    d.meta.model_hash = fem::model_hash(analyzer.model());

    std::atomic<Index> next{0};
    std::mutex err_mutex;
    Index failed_row = -1;
    std::string failure;
    auto worker = [&] {
        for (;;) {
            const Index j = next.fetch_add(1);
            if (j >= q) return;
            try {
                d.outputs.row(j) = analyzer.signature(multipliers.row(j).transpose()).flatten().transpose();
            } catch (const std::exception& e) {
                std::lock_guard lock(err_mutex);
                if (failed_row < 0 || j < failed_row) {
                    failed_row = j;
                    failure = e.what();
                }
                next = q;
                return;
            }
        }
    };
    threads = std::max(1u, threads);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (failed_row >= 0)
        throw NumericalError("dataset generation failed at sample " + std::to_string(failed_row) + ": " + failure);
    return d;
}

/// LHS over the multipliers followed by FEM evaluation; pi uses the
/// analyzer's own undamaged fundamental frequency.
inline Dataset build_dataset(const fem::ModalAnalyzer& analyzer, Index q, const DesignBounds& bounds, std::uint64_t seed,
                             unsigned threads = 1) {
    const double f1 = analyzer.reference().frequencies(0);
    const PiMapping pi = PiMapping::for_model(analyzer.model(), f1);
    Dataset d = generate_dataset(analyzer, lhs_sample(q, bounds, seed), pi, threads);
    d.meta.seed = seed;
    d.meta.bounds = bounds;
    d.meta.reference_frequency = f1;
    return d;
}

/// Random disjoint (train, holdout) partition; holdout size round(q * fraction).
inline std::pair<Dataset, Dataset> split(const Dataset& d, double holdout_fraction, std::uint64_t seed) {
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw RangeError("split: holdout fraction must be in (0, 1)");
    std::vector<Index> idx(static_cast<std::size_t>(d.size()));
    std::iota(idx.begin(), idx.end(), Index{0});
    Rng rng(seed);
    shuffle(idx.begin(), idx.end(), rng);
    const auto n_hold = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(d.size())));
    std::vector<Index> hold(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_hold));
    std::vector<Index> train(idx.begin() + static_cast<std::ptrdiff_t>(n_hold), idx.end());
    std::sort(hold.begin(), hold.end());
    std::sort(train.begin(), train.end());
    return {d.subset(train), d.subset(hold)};
}

// ---------------------------------------------------------------------------
// Persistence: <dir>/meta.jsonl (one JSON line), K.csv, X.csv, Y.csv

inline io::json metadata_to_json(const DatasetMetadata& m, Index q, Index input_dim) {
    return {{"format", "modaltl-dataset"},
            {"version", 1},
            {"label", m.label},
            {"q", q},
            {"N", input_dim},
            {"n", m.n},
            {"m", m.m},
            {"l", m.n * (1 + m.m)},
            {"seed", m.seed},
            {"bounds", {{"lower", io::to_std(m.bounds.lower)}, {"upper", io::to_std(m.bounds.upper)}}},
            {"model_hash", m.model_hash},
            {"reference_frequency", m.reference_frequency},
            {"pi_scale", m.pi_scale},
            {"config_hash", m.config_hash}};
}

inline std::vector<std::string> output_header(Index n, Index m) {
    std::vector<std::string> h;
    for (Index r = 1; r <= n; ++r) h.push_back("f" + std::to_string(r));
    for (Index r = 1; r <= n; ++r)
        for (Index s = 1; s <= m; ++s) h.push_back("phi" + std::to_string(r) + "_" + std::to_string(s));
    return h;
}

inline void save_dataset(const Dataset& d, const std::string& dir) {
    d.validate();
    std::filesystem::create_directories(dir);
    io::write_file(dir + "/meta.jsonl", metadata_to_json(d.meta, d.size(), d.input_dim()).dump() + "\n");
    std::vector<std::string> in_header;
    for (Index i = 1; i <= d.input_dim(); ++i) in_header.push_back("x" + std::to_string(i));
    std::vector<std::string> prov;
    if (!d.meta.config_hash.empty()) prov.push_back("config_hash " + d.meta.config_hash);
    prov.push_back("seed " + std::to_string(d.meta.seed));
    io::write_csv(dir + "/K.csv", d.multipliers, in_header, prov);
    io::write_csv(dir + "/X.csv", d.inputs, in_header, prov);
    io::write_csv(dir + "/Y.csv", d.outputs, output_header(d.meta.n, d.meta.m), prov);
}

inline Dataset load_dataset(const std::string& dir) {
    const std::string meta_path = dir + "/meta.jsonl";
    std::string text = io::read_file(meta_path);
    const auto nl = text.find('\n');
    const io::json j = io::parse(text.substr(0, nl), meta_path + ":1");
    Dataset d;
    d.meta.label = io::get<std::string>(j, "label", "", std::string{});
    d.meta.n = io::get<Index>(j, "n", "");
    d.meta.m = io::get<Index>(j, "m", "");
    d.meta.seed = io::get<std::uint64_t>(j, "seed", "", 0);
    d.meta.model_hash = io::get<std::string>(j, "model_hash", "", std::string{});
    d.meta.reference_frequency = io::get<double>(j, "reference_frequency", "", 0.0);
    d.meta.pi_scale = io::get<double>(j, "pi_scale", "", 0.0);
    d.meta.config_hash = io::get<std::string>(j, "config_hash", "", std::string{});
    if (j.contains("bounds")) {
        d.meta.bounds.lower = io::to_eigen(io::get<std::vector<double>>(j["bounds"], "lower", "/bounds"));
        d.meta.bounds.upper = io::to_eigen(io::get<std::vector<double>>(j["bounds"], "upper", "/bounds"));
    }
    d.multipliers = io::read_csv(dir + "/K.csv");
    d.inputs = io::read_csv(dir + "/X.csv");
    d.outputs = io::read_csv(dir + "/Y.csv");
    const auto q = io::get<Index>(j, "q", "");
    if (d.inputs.rows() != q || d.outputs.rows() != q)
        throw DimensionMismatchError("dataset " + dir + ": row count disagrees with meta.jsonl q = " + std::to_string(q));
    d.validate();
    return d;
}

}  // namespace modaltl::design
