#pragma once

#include <string>
#include <vector>

#include "mmdiag/types.hpp"

namespace mmdiag {

struct LoadStats {
    std::size_t total_lines = 0;
    std::size_t records = 0;
    std::size_t skipped = 0;
    bool missing = false;  // path absent or no records
};

struct TelemetryBundle {
    std::vector<TraceSpan> spans;
    std::vector<LogLine> logs;
    std::vector<MetricSample> metrics;
    LoadStats span_stats;
    LoadStats log_stats;
    LoadStats metric_stats;
};

// JSONL loaders. Records come back sorted by timestamp (stable, so ties keep
// file order). Malformed lines are skipped with a warning naming the file,
// line number and offending field; more than 1% skipped lines aborts the
// load. An empty path or a missing file yields an empty list with the
// missing flag set, not an error.
std::vector<TraceSpan> load_traces(const std::string& path, LoadStats& stats);
std::vector<LogLine> load_logs(const std::string& path, LoadStats& stats);
std::vector<MetricSample> load_metrics(const std::string& path, LoadStats& stats);

TelemetryBundle load_telemetry(const std::string& trace_path, const std::string& log_path,
                               const std::string& metric_path);

DeploymentMap load_deployment(const std::string& path);

// Labels are strict: any malformed line, inverted window or unknown root
// instance is an error. Cases come back sorted by start time; overlapping
// windows only warn.
std::vector<FailureCase> load_labels(const std::string& path, const DeploymentMap& deployment);

}  // namespace mmdiag
