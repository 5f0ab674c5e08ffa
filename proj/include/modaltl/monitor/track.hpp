#pragma once

// Posterior tracking over a monitoring stream: one MCMC run per record,
// records processed in parallel with per-record seeds.

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "modaltl/bayes/mcmc.hpp"
#include "modaltl/bayes/posterior.hpp"
#include "modaltl/io/text.hpp"
#include "modaltl/monitor/stream.hpp"

namespace modaltl::monitor {

struct TraceEntry {
    double timestamp = 0.0;
    std::string tag;
    bool ok = false;
    std::string error;  // set for gaps
    VectorXd median, p25, p75, mean, std;
    double acceptance = 0.0;
};

struct PosteriorTrace {
    Index dim = 0;
    std::vector<TraceEntry> entries;  // in stream order

    std::size_t gaps() const {
        std::size_t g = 0;
        for (const auto& e : entries) g += e.ok ? 0 : 1;
        return g;
    }
};

/// (record index, entry) after each record finishes; called under a lock.
using TrackProgress = std::function<void(std::size_t, const TraceEntry&)>;

/// Record i is sampled with seed derive_seed(seed, i), so the trace does not
/// depend on the thread count. A failing record becomes a gap entry.
inline PosteriorTrace track(const std::vector<MonitoringRecord>& stream, const bayes::SurrogatePosterior& posterior,
                            const bayes::McmcConfig& cfg, std::uint64_t seed, unsigned threads = 1, const TrackProgress& progress = {}) {
    cfg.validate();
    PosteriorTrace trace;
    trace.dim = posterior.prior().dim();
    trace.entries.resize(stream.size());
    std::atomic<std::size_t> next{0};
    std::mutex lock;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= stream.size()) return;
            TraceEntry e;
            e.timestamp = stream[i].timestamp;
            e.tag = stream[i].tag;
            try {
                const auto s = posterior.sample(stream[i], cfg, derive_seed(seed, i));
                e.ok = true;
                e.median = s.median;
                e.p25 = s.p25;
                e.p75 = s.p75;
                e.mean = s.mean;
                e.std = s.std;
                e.acceptance = s.acceptance;
            } catch (const std::exception& ex) {
                e.ok = false;
                e.error = ex.what();
            }
            std::lock_guard g(lock);
            trace.entries[i] = std::move(e);
            if (progress) progress(i, trace.entries[i]);
        }
    };
    threads = std::max(1u, threads);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Trace CSV: timestamp,multiplier,median,p25,p75,mean,std,acceptance,status
// (one row per multiplier per record; gaps have NaN statistics and status
// "gap").

inline void write_trace(const std::string& path, const PosteriorTrace& trace, const std::vector<std::string>& comments = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError(path, "cannot open for writing");
    for (const auto& c : comments) out << "# " << c << '\n';
    out << "timestamp,multiplier,median,p25,p75,mean,std,acceptance,status\n";
    const auto f = [](double v) { return io::format_double(v); };
    for (const auto& e : trace.entries) {
        if (!e.ok) out << "# gap at " << f(e.timestamp) << ": " << e.error << '\n';
        for (Index d = 0; d < trace.dim; ++d) {
            out << f(e.timestamp) << ',' << d << ',';
            if (e.ok)
                out << f(e.median(d)) << ',' << f(e.p25(d)) << ',' << f(e.p75(d)) << ',' << f(e.mean(d)) << ',' << f(e.std(d)) << ','
                    << f(e.acceptance) << ",ok";
            else
                out << "nan,nan,nan,nan,nan,nan,gap";
            out << '\n';
        }
    }
    if (!out) throw ConfigError(path, "write failed");
}

inline PosteriorTrace read_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, "cannot open for reading");
    PosteriorTrace t;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    struct Row {
        double ts;
        Index d;
        double v[6];
        bool ok;
    };
    std::vector<Row> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            header = true;
            continue;
        }
        std::stringstream ss(line);
        std::string tok;
        std::vector<std::string> cells;
        while (std::getline(ss, tok, ',')) cells.push_back(tok);
        if (cells.size() != 9) throw ConfigError(path + ":" + std::to_string(lineno), "expected 9 columns");
        Row r{};
        try {
            r.ts = std::stod(cells[0]);
            r.d = std::stol(cells[1]);
            for (int k = 0; k < 6; ++k) r.v[k] = std::stod(cells[static_cast<std::size_t>(2 + k)]);
        } catch (const std::exception&) {
            throw ConfigError(path + ":" + std::to_string(lineno), "malformed number");
        }
        r.ok = cells[8] == "ok";
        rows.push_back(r);
    }
    for (const auto& r : rows) t.dim = std::max(t.dim, r.d + 1);
    for (const auto& r : rows) {
        if (r.d == 0) {
            TraceEntry e;
            e.timestamp = r.ts;
            e.ok = r.ok;
            for (auto* v : {&e.median, &e.p25, &e.p75, &e.mean, &e.std}) v->setConstant(t.dim, std::numeric_limits<double>::quiet_NaN());
            t.entries.push_back(std::move(e));
        }
        if (t.entries.empty() || t.entries.back().timestamp != r.ts)
            throw ConfigError(path, "trace rows must be grouped by timestamp with multiplier 0 first");
        auto& e = t.entries.back();
        e.median(r.d) = r.v[0];
        e.p25(r.d) = r.v[1];
        e.p75(r.d) = r.v[2];
        e.mean(r.d) = r.v[3];
        e.std(r.d) = r.v[4];
        e.acceptance = r.v[5];
    }
    return t;
}

}  // namespace modaltl::monitor
