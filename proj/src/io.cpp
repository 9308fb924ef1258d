#include "mmdiag/io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace mmdiag {

namespace {

using nlohmann::json;

// Per-file line reader with the shared skip accounting. parse_line returns
// false to reject the current line (msg explains which field).
template <typename Record, typename ParseLine>
std::vector<Record> load_jsonl(const std::string& path, LoadStats& stats, ParseLine parse_line) {
    stats = LoadStats{};
    std::vector<Record> records;
    if (path.empty() || !std::filesystem::exists(path)) {
        stats.missing = true;
        return records;
    }
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);

    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> diagnostics;
    while (std::getline(in, line)) {
        ++line_no;
        ++stats.total_lines;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;  // blank
        Record rec;
        std::string err;
        bool ok = false;
        try {
            json j = json::parse(line);
            ok = parse_line(j, rec, err);
        } catch (const json::exception& e) {
            err = e.what();
        }
        if (!ok) {
            ++stats.skipped;
            if (diagnostics.size() < 5) {
                diagnostics.push_back(path + ":" + std::to_string(line_no) + ": " + err);
            }
            continue;
        }
        records.push_back(std::move(rec));
    }
    for (const auto& d : diagnostics) std::cerr << "[warn] skipped line " << d << "\n";
    if (stats.total_lines > 0 &&
        stats.skipped * 100 > stats.total_lines) {  // strict > 1%
        std::ostringstream msg;
        msg << path << ": " << stats.skipped << " of " << stats.total_lines
            << " lines unusable (over 1%)";
        if (!diagnostics.empty()) msg << "; first: " << diagnostics.front();
        throw DataError(msg.str());
    }
    stats.records = records.size();
    if (stats.records == 0) stats.missing = true;
    std::stable_sort(records.begin(), records.end(),
                     [](const Record& a, const Record& b) { return a.ts < b.ts; });
    return records;
}

bool get_ts(const json& j, const char* key, TimestampMs& out, std::string& err) {
    if (!j.contains(key) || !j[key].is_number_integer()) {
        err = std::string("field '") + key + "' missing or not an integer";
        return false;
    }
    out = j[key].get<TimestampMs>();
    return true;
}

bool get_str(const json& j, const char* key, std::string& out, std::string& err,
             bool allow_empty = false) {
    if (!j.contains(key) || !j[key].is_string()) {
        err = std::string("field '") + key + "' missing or not a string";
        return false;
    }
    out = j[key].get<std::string>();
    if (out.empty() && !allow_empty) {
        err = std::string("field '") + key + "' is empty";
        return false;
    }
    return true;
}

bool get_num(const json& j, const char* key, double& out, std::string& err) {
    if (!j.contains(key) || !j[key].is_number()) {
        err = std::string("field '") + key + "' missing or not a number";
        return false;
    }
    out = j[key].get<double>();
    if (!std::isfinite(out)) {
        err = std::string("field '") + key + "' is not finite";
        return false;
    }
    return true;
}

}  // namespace

std::vector<TraceSpan> load_traces(const std::string& path, LoadStats& stats) {
    return load_jsonl<TraceSpan>(path, stats, [](const json& j, TraceSpan& s, std::string& err) {
        if (!get_ts(j, "ts", s.ts, err)) return false;
        if (!get_str(j, "caller", s.caller, err)) return false;
        if (!get_str(j, "callee", s.callee, err)) return false;
        if (!get_num(j, "rt_ms", s.rt_ms, err)) return false;
        if (s.rt_ms < 0) {
            err = "field 'rt_ms' is negative";
            return false;
        }
        if (!get_str(j, "status", s.status, err)) return false;
        return true;
    });
}

std::vector<LogLine> load_logs(const std::string& path, LoadStats& stats) {
    return load_jsonl<LogLine>(path, stats, [](const json& j, LogLine& l, std::string& err) {
        if (!get_ts(j, "ts", l.ts, err)) return false;
        if (!get_str(j, "instance", l.instance, err)) return false;
        std::string level;
        if (!get_str(j, "level", level, err)) return false;
        try {
            l.level = parse_log_level(level);
        } catch (const DataError& e) {
            err = e.what();
            return false;
        }
        if (!get_str(j, "msg", l.message, err, /*allow_empty=*/true)) return false;
        return true;
    });
}

std::vector<MetricSample> load_metrics(const std::string& path, LoadStats& stats) {
    auto records =
        load_jsonl<MetricSample>(path, stats, [](const json& j, MetricSample& m, std::string& err) {
            if (!get_ts(j, "ts", m.ts, err)) return false;
            if (!get_str(j, "instance", m.instance, err)) return false;
            if (!get_str(j, "metric", m.metric, err)) return false;
            if (!get_num(j, "value", m.value, err)) return false;
            return true;
        });
    // Per-series timestamps must be strictly increasing; drop exact
    // duplicates so downstream series slicing can rely on it.
    std::map<std::pair<std::string, std::string>, TimestampMs> last_ts;
    std::vector<MetricSample> out;
    out.reserve(records.size());
    std::size_t dropped = 0;
    for (auto& m : records) {
        auto key = std::make_pair(m.instance, m.metric);
        auto it = last_ts.find(key);
        if (it != last_ts.end() && m.ts <= it->second) {
            ++dropped;
            continue;
        }
        last_ts[key] = m.ts;
        out.push_back(std::move(m));
    }
    if (dropped > 0) {
        std::cerr << "[warn] " << path << ": dropped " << dropped
                  << " metric samples with non-increasing timestamps\n";
        stats.skipped += dropped;
        stats.records = out.size();
    }
    return out;
}

TelemetryBundle load_telemetry(const std::string& trace_path, const std::string& log_path,
                               const std::string& metric_path) {
    TelemetryBundle b;
    b.spans = load_traces(trace_path, b.span_stats);
    b.logs = load_logs(log_path, b.log_stats);
    b.metrics = load_metrics(metric_path, b.metric_stats);
    return b;
}

DeploymentMap load_deployment(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open deployment file " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    if (!j.contains("instances") || !j["instances"].is_array()) {
        throw DataError(path + ": missing 'instances' array");
    }
    DeploymentMap map;
    std::vector<std::string> groupless;
    for (const auto& entry : j["instances"]) {
        std::string id = entry.value("id", "");
        if (id.empty()) throw DataError(path + ": instance with missing id");
        std::string host = entry.value("host", "");
        std::string group = entry.value("group", "");
        if (group.empty()) {
            groupless.push_back(id);
            continue;
        }
        map.add(id, host, group);
    }
    if (!groupless.empty()) {
        std::string ids;
        for (const auto& id : groupless) ids += (ids.empty() ? "" : ", ") + id;
        throw DataError(path + ": instances without a service group: " + ids);
    }
    return map;
}

std::vector<FailureCase> load_labels(const std::string& path, const DeploymentMap& deployment) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open labels file " + path);
    std::vector<FailureCase> cases;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        FailureCase c;
        std::string err;
        if (!get_str(j, "case_id", c.case_id, err) || !get_ts(j, "start", c.start, err) ||
            !get_ts(j, "end", c.end, err) || !get_str(j, "root_instance", c.root_instance, err) ||
            !get_str(j, "failure_type", c.failure_type, err)) {
            throw DataError(path + ":" + std::to_string(line_no) + ": " + err);
        }
        if (c.start >= c.end) {
            throw DataError(path + ":" + std::to_string(line_no) + ": case " + c.case_id +
                            " has start >= end");
        }
        if (!deployment.has(c.root_instance)) {
            throw DataError(path + ":" + std::to_string(line_no) + ": root instance '" +
                            c.root_instance + "' not in deployment");
        }
        cases.push_back(std::move(c));
    }
    std::stable_sort(cases.begin(), cases.end(),
                     [](const FailureCase& a, const FailureCase& b) { return a.start < b.start; });
    for (std::size_t i = 1; i < cases.size(); ++i) {
        if (cases[i].start < cases[i - 1].end) {
            std::cerr << "[warn] cases " << cases[i - 1].case_id << " and " << cases[i].case_id
                      << " overlap in time\n";
        }
    }
    return cases;
}

}  // namespace mmdiag
