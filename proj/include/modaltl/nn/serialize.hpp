#pragma once

// JSON persistence for surrogate networks, training configs and loss
// settings, plus the training-history CSV.

#include <string>
#include <vector>

#include "modaltl/errors.hpp"
#include "modaltl/io/json_util.hpp"
#include "modaltl/io/text.hpp"
#include "modaltl/nn/loss.hpp"
#include "modaltl/nn/network.hpp"
#include "modaltl/nn/training.hpp"

namespace modaltl::nn {

inline io::json to_json(const LayerSpec& l) {
    return {{"width", l.width}, {"activation", to_string(l.activation)}, {"dropout", l.dropout}};
}

inline LayerSpec layer_spec_from_json(const io::json& j, const std::string& path) {
    LayerSpec l;
    l.width = io::get<Index>(j, "width", path);
    try {
        l.activation = activation_from_string(io::get<std::string>(j, "activation", path, std::string("tanh")));
    } catch (const SpecError& e) {
        throw ConfigError(path + "/activation", e.what());
    }
    l.dropout = io::get<double>(j, "dropout", path, 0.0);
    return l;
}

inline io::json layers_to_json(const std::vector<LayerSpec>& layers) {
    io::json a = io::json::array();
    for (const auto& l : layers) a.push_back(to_json(l));
    return a;
}

inline std::vector<LayerSpec> layers_from_json(const io::json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path, "expected an array of layers");
    std::vector<LayerSpec> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(layer_spec_from_json(j[i], path + "/" + std::to_string(i)));
    return out;
}

inline io::json to_json(const NetworkSpec& s) {
    io::json branches = io::json::array();
    for (const auto& b : s.shape_hidden) branches.push_back(layers_to_json(b));
    return {{"input_dim", s.input_dim},
            {"n_modes", s.n_modes},
            {"m_sensors", s.m_sensors},
            {"trunk", layers_to_json(s.trunk)},
            {"freq_hidden", layers_to_json(s.freq_hidden)},
            {"shape_hidden", branches}};
}

/// Missing layer lists default to the beam architecture; a single
/// "shape_hidden" list (not a list of lists) is replicated for every mode.
inline NetworkSpec network_spec_from_json(const io::json& j, const std::string& path, Index input_dim, Index n, Index m) {
    NetworkSpec s = NetworkSpec::beam_default(io::get<Index>(j, "input_dim", path, input_dim), io::get<Index>(j, "n_modes", path, n),
                                              io::get<Index>(j, "m_sensors", path, m));
    if (j.contains("trunk")) s.trunk = layers_from_json(j["trunk"], path + "/trunk");
    if (j.contains("freq_hidden")) s.freq_hidden = layers_from_json(j["freq_hidden"], path + "/freq_hidden");
    if (j.contains("shape_hidden")) {
        const auto& sh = j["shape_hidden"];
        if (!sh.is_array()) throw ConfigError(path + "/shape_hidden", "expected an array");
        if (!sh.empty() && sh[0].is_array()) {
            s.shape_hidden.clear();
            for (std::size_t i = 0; i < sh.size(); ++i)
                s.shape_hidden.push_back(layers_from_json(sh[i], path + "/shape_hidden/" + std::to_string(i)));
        } else {
            s.shape_hidden.assign(static_cast<std::size_t>(s.n_modes), layers_from_json(sh, path + "/shape_hidden"));
        }
    }
    try {
        s.validate();
    } catch (const SpecError& e) {
        throw ConfigError(path.empty() ? "/" : path, e.what());
    }
    return s;
}

namespace detail {

inline io::json layer_to_json(const DenseLayer& l) {
    return {{"activation", to_string(l.activation)},
            {"dropout", l.dropout},
            {"trainable", l.trainable},
            {"weight", io::matrix_to_json(l.weight)},
            {"bias", io::to_std(l.bias)}};
}

inline DenseLayer layer_from_json(const io::json& j, const std::string& path) {
    DenseLayer l;
    try {
        l.activation = activation_from_string(io::get<std::string>(j, "activation", path));
    } catch (const SpecError& e) {
        throw ConfigError(path + "/activation", e.what());
    }
    l.dropout = io::get<double>(j, "dropout", path, 0.0);
    l.trainable = io::get<bool>(j, "trainable", path, true);
    if (!j.contains("weight")) throw ConfigError(path + "/weight", "required field is missing");
    l.weight = io::matrix_from_json(j["weight"], path + "/weight");
    l.bias = io::to_eigen(io::get<std::vector<double>>(j, "bias", path));
    return l;
}

inline io::json layer_list(const std::vector<DenseLayer>& layers) {
    io::json a = io::json::array();
    for (const auto& l : layers) a.push_back(layer_to_json(l));
    return a;
}

inline std::vector<DenseLayer> layer_list_from_json(const io::json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path, "expected an array of layers");
    std::vector<DenseLayer> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(layer_from_json(j[i], path + "/" + std::to_string(i)));
    return out;
}

}  // namespace detail

inline io::json to_json(const SurrogateNetwork& net) {
    io::json branches = io::json::array();
    for (const auto& b : net.shape_branches()) branches.push_back(detail::layer_list(b));
    std::vector<int> active;
    for (bool a : net.branch_active()) active.push_back(a ? 1 : 0);
    const auto& n = net.normalization();
    return {{"format", "modaltl-network"},
            {"version", 1},
            {"spec", to_json(net.spec())},
            {"normalization",
             {{"input_mean", io::to_std(n.input_mean)},
              {"input_scale", io::to_std(n.input_scale)},
              {"freq_mean", io::to_std(n.freq_mean)},
              {"freq_scale", io::to_std(n.freq_scale)}}},
            {"trunk", detail::layer_list(net.trunk())},
            {"freq", detail::layer_list(net.freq())},
            {"shape_branches", branches},
            {"branch_active", active},
            {"output_branch", net.output_branch()},
            {"trunk_checksum", io::hex64(trunk_checksum(net))}};
}

inline SurrogateNetwork network_from_json(const io::json& j, const std::string& path = "") {
    if (io::get<std::string>(j, "format", path, std::string("modaltl-network")) != "modaltl-network")
        throw ConfigError(path + "/format", "not a modaltl network file");
    SurrogateNetwork net;
    if (!j.contains("spec")) throw ConfigError(path + "/spec", "required field is missing");
    const auto& js = j["spec"];
    net.spec() = network_spec_from_json(js, path + "/spec", 0, 0, 0);
    if (!j.contains("trunk") || !j.contains("freq") || !j.contains("shape_branches"))
        throw ConfigError(path.empty() ? "/" : path, "network file lacks layer weights");
    net.trunk() = detail::layer_list_from_json(j["trunk"], path + "/trunk");
    net.freq() = detail::layer_list_from_json(j["freq"], path + "/freq");
    const auto& sb = j["shape_branches"];
    if (!sb.is_array()) throw ConfigError(path + "/shape_branches", "expected an array");
    for (std::size_t b = 0; b < sb.size(); ++b)
        net.shape_branches().push_back(detail::layer_list_from_json(sb[b], path + "/shape_branches/" + std::to_string(b)));
    const auto active = io::get<std::vector<int>>(j, "branch_active", path, std::vector<int>(sb.size(), 1));
    net.branch_active().assign(active.begin(), active.end());
    for (std::size_t b = 0; b < active.size(); ++b) net.branch_active()[b] = active[b] != 0;
    std::vector<int> slots(net.freq().empty() ? 0 : static_cast<std::size_t>(net.freq().back().out()));
    for (std::size_t k = 0; k < slots.size(); ++k) slots[k] = k < sb.size() ? static_cast<int>(k) : -1;
    net.output_branch() = io::get<std::vector<int>>(j, "output_branch", path, slots);
    const std::string np = path + "/normalization";
    if (!j.contains("normalization")) throw ConfigError(np, "required field is missing");
    const auto& jn = j["normalization"];
    auto& n = net.normalization();
    n.input_mean = io::to_eigen(io::get<std::vector<double>>(jn, "input_mean", np));
    n.input_scale = io::to_eigen(io::get<std::vector<double>>(jn, "input_scale", np));
    n.freq_mean = io::to_eigen(io::get<std::vector<double>>(jn, "freq_mean", np));
    n.freq_scale = io::to_eigen(io::get<std::vector<double>>(jn, "freq_scale", np));
    try {
        net.validate();
    } catch (const SpecError& e) {
        throw ConfigError(path.empty() ? "/" : path, e.what());
    }
    return net;
}

inline void save_network(const SurrogateNetwork& net, const std::string& file, const io::json& provenance = {}) {
    io::json j = to_json(net);
    if (!provenance.is_null()) j["provenance"] = provenance;
    io::write_file(file, j.dump() + "\n");
}

inline SurrogateNetwork load_network(const std::string& file) { return network_from_json(io::parse(io::read_file(file), file), ""); }

// ---------------------------------------------------------------------------

inline io::json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"epsilon", c.epsilon},
            {"shuffle_seed", c.shuffle_seed},
            {"dropout_seed", c.dropout_seed},
            {"holdout_fraction", c.holdout_fraction},
            {"final_lr_fraction", c.final_lr_fraction}};
}

inline TrainConfig train_config_from_json(const io::json& j, const std::string& path, TrainConfig d = {}) {
    TrainConfig c;
    c.epochs = io::get<int>(j, "epochs", path, d.epochs);
    c.batch_size = io::get<Index>(j, "batch_size", path, d.batch_size);
    c.learning_rate = io::get<double>(j, "learning_rate", path, d.learning_rate);
    c.beta1 = io::get<double>(j, "beta1", path, d.beta1);
    c.beta2 = io::get<double>(j, "beta2", path, d.beta2);
    c.epsilon = io::get<double>(j, "epsilon", path, d.epsilon);
    c.shuffle_seed = io::get<std::uint64_t>(j, "shuffle_seed", path, d.shuffle_seed);
    c.dropout_seed = io::get<std::uint64_t>(j, "dropout_seed", path, d.dropout_seed);
    c.holdout_fraction = io::get<double>(j, "holdout_fraction", path, d.holdout_fraction);
    c.final_lr_fraction = io::get<double>(j, "final_lr_fraction", path, d.final_lr_fraction);
    try {
        c.validate();
    } catch (const SpecError& e) {
        throw ConfigError(path.empty() ? "/" : path, e.what());
    }
    return c;
}

/// {"beta": 100, "c": 1 | [..], "d": 1 | [..]}
inline LossConfig loss_config_from_json(const io::json& j, const std::string& path, Index n) {
    LossConfig c = LossConfig::uniform(n, io::get<double>(j, "beta", path, 100.0));
    auto weights = [&](const char* key, VectorXd& w) {
        if (!j.contains(key)) return;
        const auto& v = j[key];
        if (v.is_number()) {
            w.setConstant(v.get<double>());
        } else {
            const auto list = io::get<std::vector<double>>(j, key, path);
            if (static_cast<Index>(list.size()) != n)
                throw ConfigError(path + "/" + key, "expected " + std::to_string(n) + " weights");
            w = io::to_eigen(list);
        }
    };
    weights("c", c.c);
    weights("d", c.d);
    try {
        c.validate(n);
    } catch (const SpecError& e) {
        throw ConfigError(path.empty() ? "/" : path, e.what());
    }
    return c;
}

inline io::json to_json(const LossConfig& c) {
    return {{"beta", c.beta}, {"c", io::to_std(c.c)}, {"d", io::to_std(c.d)}};
}

/// Columns: epoch, train_total, train_freq, train_shape, holdout_total,
/// holdout_freq, holdout_shape (holdout columns NaN when there is none).
inline void write_history(const std::string& file, const TrainingHistory& h, const std::vector<std::string>& comments = {}) {
    Eigen::MatrixXd a(static_cast<Index>(h.size()), 7);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < h.size(); ++i) {
        const auto& r = h[i];
        a.row(static_cast<Index>(i)) << r.epoch, r.train.total, r.train.freq, r.train.shape, r.has_holdout ? r.holdout.total : nan,
            r.has_holdout ? r.holdout.freq : nan, r.has_holdout ? r.holdout.shape : nan;
    }
    io::write_csv(file, a, {"epoch", "train_total", "train_freq", "train_shape", "holdout_total", "holdout_freq", "holdout_shape"},
                  comments);
}

}  // namespace modaltl::nn
