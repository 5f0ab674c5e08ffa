#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "modaltl/errors.hpp"

namespace modaltl::io {

using json = nlohmann::json;

/// Reads `j[key]` as T; missing keys fall back to `fallback` when given,
/// otherwise raise ConfigError naming the JSON path.
template <class T>
T get(const json& j, const std::string& key, const std::string& path, std::optional<T> fallback = std::nullopt) {
    const std::string where = path + "/" + key;
    if (!j.is_object()) throw ConfigError(path.empty() ? "/" : path, "expected an object");
    auto it = j.find(key);
    if (it == j.end()) {
        if (fallback) return *fallback;
        throw ConfigError(where, "required field is missing");
    }
    try {
        return it->template get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where, std::string("wrong type: ") + e.what());
    }
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline Eigen::VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json matrix_to_json(const Eigen::MatrixXd& a) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(a.cols()));
        for (Eigen::Index j = 0; j < a.cols(); ++j) r[static_cast<std::size_t>(j)] = a(i, j);
        rows.push_back(r);
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path, "expected an array of rows");
    const auto rows = static_cast<Eigen::Index>(j.size());
    Eigen::Index cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Eigen::MatrixXd a(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& r = j[static_cast<std::size_t>(i)];
        if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols)
            throw ConfigError(path + "/" + std::to_string(i), "ragged matrix row");
        for (Eigen::Index c = 0; c < cols; ++c) a(i, c) = r[static_cast<std::size_t>(c)].get<double>();
    }
    return a;
}

inline json parse(const std::string& text, const std::string& source) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(source, std::string("invalid JSON: ") + e.what());
    }
}

}  // namespace modaltl::io
