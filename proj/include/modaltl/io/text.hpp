#pragma once

// Small text helpers shared by the artifact writers: full-precision number
// formatting, CSV matrices, FNV-1a hashing.

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "modaltl/errors.hpp"

namespace modaltl::io {

/// Shortest-safe round-trip representation (17 significant digits).
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string hash_hex(std::string_view bytes) { return hex64(fnv1a(bytes)); }

/// Writes a matrix as CSV. Lines in `comments` are emitted first, prefixed by '#'.
inline void write_csv(const std::string& path, const Eigen::MatrixXd& a, const std::vector<std::string>& header = {},
                      const std::vector<std::string>& comments = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError(path, "cannot open for writing");
    for (const auto& c : comments) out << "# " << c << '\n';
    if (!header.empty()) {
        for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
        out << '\n';
    }
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) out << (j ? "," : "") << format_double(a(i, j));
        out << '\n';
    }
    if (!out) throw ConfigError(path, "write failed");
}

/// Reads a numeric CSV. '#' lines are skipped; a first row containing
/// non-numeric tokens is treated as a header.
inline Eigen::MatrixXd read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, "cannot open for reading");
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    bool first_data = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string tok;
        bool numeric = true;
        while (std::getline(ss, tok, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(tok, &used));
                if (used != tok.size() && tok.find_first_not_of(" \t", used) != std::string::npos) numeric = false;
            } catch (const std::exception&) {
                numeric = false;
            }
        }
        if (!numeric) {
            if (first_data) {
                first_data = false;
                continue;
            }
            throw ConfigError(path + ":" + std::to_string(lineno), "non-numeric CSV field");
        }
        first_data = false;
        if (!rows.empty() && row.size() != rows.front().size())
            throw ConfigError(path + ":" + std::to_string(lineno), "ragged CSV row");
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd a(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return a;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path, "cannot open for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError(path, "cannot open for writing");
    out << text;
    if (!out) throw ConfigError(path, "write failed");
}

}  // namespace modaltl::io
