#pragma once

// Source -> target transfer of a trained surrogate: mode pairing, head
// resizing with branch deactivation, and fine-tuning with a frozen trunk.

#include <Eigen/Dense>

#include <algorithm>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "modaltl/design/dataset.hpp"
#include "modaltl/errors.hpp"
#include "modaltl/fem/signature.hpp"
#include "modaltl/io/json_util.hpp"
#include "modaltl/io/text.hpp"
#include "modaltl/nn/network.hpp"
#include "modaltl/nn/training.hpp"

namespace modaltl::transfer {

using Eigen::Index;

struct ModePair {
    int source = 0;
    int target = 0;
    double delta_f = 0.0;  // f_source - f_target, Hz
    double mac = 0.0;
    std::string tag;
};

/// Pairs are kept in target-mode order; that order defines the output slots
/// of the transferred network. `transfer[s]` says whether source mode s is
/// carried over (a paired mode can still be switched off).
struct ModePairing {
    std::vector<ModePair> pairs;
    std::vector<bool> transfer;

    std::vector<ModePair> selected() const {
        std::vector<ModePair> out;
        for (const auto& p : pairs)
            if (p.source >= 0 && static_cast<std::size_t>(p.source) < transfer.size() && transfer[static_cast<std::size_t>(p.source)])
                out.push_back(p);
        return out;
    }

    /// Target mode indices of the selected pairs, in slot order.
    std::vector<int> target_modes() const {
        std::vector<int> out;
        for (const auto& p : selected()) out.push_back(p.target);
        return out;
    }

    void validate() const {
        std::vector<int> seen;
        for (const auto& p : pairs) {
            if (p.source < 0 || static_cast<std::size_t>(p.source) >= transfer.size())
                throw RangeError("pairing: source mode " + std::to_string(p.source) + " out of range");
            if (p.target < 0) throw RangeError("pairing: negative target mode index");
            if (!(p.mac >= 0.0 && p.mac <= 1.0)) throw RangeError("pairing: MAC outside [0, 1]");
            if (std::find(seen.begin(), seen.end(), p.target) != seen.end())
                throw RangeError("pairing: target mode " + std::to_string(p.target) + " paired twice");
            seen.push_back(p.target);
        }
        std::vector<int> sources;
        for (const auto& p : pairs) {
            if (std::find(sources.begin(), sources.end(), p.source) != sources.end())
                throw RangeError("pairing: source mode " + std::to_string(p.source) + " paired twice");
            sources.push_back(p.source);
        }
    }
};

struct MatchWeights {
    double frequency = 0.1;
    double shape = 1.0;
};

/// Greedy one-to-one matching: the cheapest remaining (source, target) pair
/// by w_f |f_s - f_t| / f_s + w_phi (1 - MAC) is fixed first. Ties go to the
/// lower source, then lower target index.
inline ModePairing match_modes(const ModalSignature& source, const ModalSignature& target, MatchWeights w = {}) {
    const Index ns = source.modes(), nt = target.modes();
    if (ns == 0 || nt == 0) throw RangeError("match_modes: empty signature set");
    if (source.sensors() != target.sensors())
        throw DimensionMismatchError("match_modes: source and target shapes are sampled at different sensor counts");
    Eigen::MatrixXd cost(ns, nt), macs(ns, nt);
    for (Index s = 0; s < ns; ++s)
        for (Index t = 0; t < nt; ++t) {
            macs(s, t) = mac(source.shapes.col(s), target.shapes.col(t));
            cost(s, t) = w.frequency * std::abs(source.frequencies(s) - target.frequencies(t)) / source.frequencies(s) +
                         w.shape * (1.0 - macs(s, t));
        }
    std::vector<bool> used_s(static_cast<std::size_t>(ns), false), used_t(static_cast<std::size_t>(nt), false);
    ModePairing out;
    out.transfer.assign(static_cast<std::size_t>(ns), false);
    for (Index round = 0; round < std::min(ns, nt); ++round) {
        double best = std::numeric_limits<double>::infinity();
        Index bs = -1, bt = -1;
        for (Index s = 0; s < ns; ++s) {
            if (used_s[static_cast<std::size_t>(s)]) continue;
            for (Index t = 0; t < nt; ++t) {
                if (used_t[static_cast<std::size_t>(t)]) continue;
                if (cost(s, t) < best) {
                    best = cost(s, t);
                    bs = s;
                    bt = t;
                }
            }
        }
        used_s[static_cast<std::size_t>(bs)] = used_t[static_cast<std::size_t>(bt)] = true;
        out.transfer[static_cast<std::size_t>(bs)] = true;
        out.pairs.push_back({static_cast<int>(bs), static_cast<int>(bt), source.frequencies(bs) - target.frequencies(bt),
                             macs(bs, bt), ""});
    }
    std::sort(out.pairs.begin(), out.pairs.end(), [](const ModePair& a, const ModePair& b) { return a.target < b.target; });
    return out;
}

inline io::json to_json(const ModePairing& p) {
    io::json pairs = io::json::array();
    for (const auto& x : p.pairs)
        pairs.push_back({{"source", x.source}, {"target", x.target}, {"delta_f", x.delta_f}, {"mac", x.mac}, {"tag", x.tag}});
    std::vector<int> flags;
    for (bool b : p.transfer) flags.push_back(b ? 1 : 0);
    return {{"format", "modaltl-pairing"}, {"version", 1}, {"pairs", pairs}, {"transfer", flags}};
}

/// Indices are 0-based. "transfer" may be omitted (every paired source mode
/// is transferred; its length is then taken from "source_modes" or the
/// largest source index).
inline ModePairing pairing_from_json(const io::json& j, const std::string& path = "") {
    ModePairing p;
    if (!j.contains("pairs") || !j["pairs"].is_array()) throw ConfigError(path + "/pairs", "expected an array of pairs");
    int max_source = -1;
    for (std::size_t i = 0; i < j["pairs"].size(); ++i) {
        const auto& x = j["pairs"][i];
        const std::string where = path + "/pairs/" + std::to_string(i);
        ModePair mp;
        mp.source = io::get<int>(x, "source", where);
        mp.target = io::get<int>(x, "target", where);
        mp.delta_f = io::get<double>(x, "delta_f", where, 0.0);
        mp.mac = io::get<double>(x, "mac", where, 0.0);
        mp.tag = io::get<std::string>(x, "tag", where, std::string{});
        max_source = std::max(max_source, mp.source);
        p.pairs.push_back(mp);
    }
    if (j.contains("transfer")) {
        for (int f : io::get<std::vector<int>>(j, "transfer", path)) p.transfer.push_back(f != 0);
    } else {
        const int n = io::get<int>(j, "source_modes", path, max_source + 1);
        p.transfer.assign(static_cast<std::size_t>(std::max(n, 0)), false);
        for (const auto& x : p.pairs)
            if (x.source >= 0 && x.source < n) p.transfer[static_cast<std::size_t>(x.source)] = true;
    }
    std::sort(p.pairs.begin(), p.pairs.end(), [](const ModePair& a, const ModePair& b) { return a.target < b.target; });
    try {
        p.validate();
    } catch (const RangeError& e) {
        throw ConfigError(path.empty() ? "/" : path, e.what());
    }
    return p;
}

// ---------------------------------------------------------------------------

/// Source network re-headed for the target: trunk copied and frozen, the
/// frequency head reduced to the selected pairs (rows copied in slot order),
/// every slot wired to its source mode's shape branch and all other branches
/// deactivated. With a target data set (slot order, see
/// `target_dataset_for`) the frequency normalization is refitted on it;
/// input normalization stays that of the source.
inline nn::SurrogateNetwork prepare_target_net(const nn::SurrogateNetwork& source, const ModePairing& pairing,
                                               const design::Dataset* target_train = nullptr) {
    pairing.validate();
    const auto sel = pairing.selected();
    if (sel.empty()) throw RangeError("prepare_target_net: no mode selected for transfer");
    if (pairing.transfer.size() != static_cast<std::size_t>(source.outputs()))
        throw DimensionMismatchError("prepare_target_net: pairing covers " + std::to_string(pairing.transfer.size()) +
                                     " source modes, the network predicts " + std::to_string(source.outputs()));
    for (const auto& p : sel)
        if (p.source >= source.branches())
            throw RangeError("prepare_target_net: pairing references nonexistent branch " + std::to_string(p.source));

    nn::SurrogateNetwork net = source;
    net.set_trunk_trainable(false);
    for (auto& l : net.freq()) l.trainable = true;
    const auto k = static_cast<Index>(sel.size());
    auto& head = net.freq().back();
    const auto& src_head = source.freq().back();
    head.weight.resize(k, src_head.in());
    head.bias.resize(k);
    auto& norm = net.normalization();
    norm.freq_mean.resize(k);
    norm.freq_scale.resize(k);
    net.output_branch().assign(static_cast<std::size_t>(k), -1);
    std::fill(net.branch_active().begin(), net.branch_active().end(), false);
    for (Index slot = 0; slot < k; ++slot) {
        const int s = sel[static_cast<std::size_t>(slot)].source;
        head.weight.row(slot) = src_head.weight.row(s);
        head.bias(slot) = src_head.bias(s);
        norm.freq_mean(slot) = source.normalization().freq_mean(s);
        norm.freq_scale(slot) = source.normalization().freq_scale(s);
        net.output_branch()[static_cast<std::size_t>(slot)] = s;
        net.branch_active()[static_cast<std::size_t>(s)] = true;
    }
    for (std::size_t b = 0; b < net.shape_branches().size(); ++b)
        for (auto& l : net.shape_branches()[b]) l.trainable = net.branch_active()[b];
    if (target_train) {
        if (target_train->meta.n != k) throw DimensionMismatchError("prepare_target_net: target data set must hold the selected modes in slot order");
        nn::fit_normalization(net, *target_train, false, true);
    }
    net.validate();
    return net;
}

/// Target data set restricted and reordered to the pairing's slot order.
inline design::Dataset target_dataset_for(const design::Dataset& target, const ModePairing& pairing) {
    return target.select_modes(pairing.target_modes());
}

struct FineTuneResult {
    nn::TrainingHistory history;
    std::uint64_t trunk_checksum_before = 0;
    std::uint64_t trunk_checksum_after = 0;
    std::vector<std::string> warnings;
};

/// Retrains the trainable (non-trunk) layers on the target population.
/// `source_size` is q_s; q_t >= q_s only raises a warning. Normalization is
/// not refitted here (prepare_target_net does that).
inline FineTuneResult fine_tune(nn::SurrogateNetwork& net, const design::Dataset& target_train, const design::Dataset& holdout,
                                const nn::TrainConfig& cfg, const nn::LossConfig& loss, Index source_size = 0,
                                const nn::EpochCallback& on_epoch = {}) {
    FineTuneResult r;
    const Index q_t = target_train.size() + holdout.size();
    if (source_size > 0 && q_t >= source_size) {
        std::ostringstream msg;
        msg << "target population (" << q_t << ") is not smaller than the source population (" << source_size << ")";
        r.warnings.push_back(msg.str());
    }
    for (const auto& l : net.trunk())
        if (l.trainable) throw SpecError("fine_tune: trunk layers must be frozen");
    r.trunk_checksum_before = nn::trunk_checksum(net);
    r.history = nn::train(net, target_train, holdout, cfg, loss, on_epoch);
    r.trunk_checksum_after = nn::trunk_checksum(net);
    if (r.trunk_checksum_after != r.trunk_checksum_before) throw NumericalError("fine_tune: trunk weights changed");
    return r;
}

}  // namespace modaltl::transfer
