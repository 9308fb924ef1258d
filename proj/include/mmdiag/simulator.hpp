#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "mmdiag/types.hpp"

namespace mmdiag::sim {

struct GroupSpec {
    std::string name;
    int instances = 1;
};

struct MetricSpec {
    std::string name;
    double mean = 0.0;
    double sigma = 1.0;
};

struct MetricShift {
    std::string metric;
    Direction direction = Direction::Up;
    double sigmas = 8.0;   // shift magnitude in units of the metric's sigma
    bool propagate = true;  // damped copy on direct downstream callees
};

struct LogBurst {
    std::string template_text;  // "{group}" and "{param}" are substituted
    double rate_per_min = 24.0;
    LogLevel level = LogLevel::Error;
};

struct TraceEffect {
    double rt_multiplier = 1.0;
    double status_flip_p = 0.0;
    std::string status_value = "500";
};

struct FailureSignature {
    std::string type;
    std::vector<MetricShift> metric_shifts;
    std::vector<LogBurst> log_bursts;
    TraceEffect trace;

    bool has_effect() const;
};

struct CasePlan {
    int count = 300;
    TimestampMs duration_ms = 60'000;
    TimestampMs gap_ms = 60'000;
    std::vector<std::pair<std::string, double>> mix;  // type -> weight
};

struct TopologyEdge {
    std::string from;
    std::string to;
    double rate_per_min = -1.0;  // <0: derive from span_interval_ms; 0: silent edge
};

struct SimConfig {
    std::uint64_t seed = 42;
    TimestampMs start_ms = 1'700'000'000'000;  // arbitrary fixed epoch anchor
    TimestampMs warmup_ms = 1'800'000;         // detector history before the first case
    TimestampMs metric_interval_ms = 30'000;
    TimestampMs span_interval_ms = 5'000;
    TimestampMs log_interval_ms = 8'000;
    int hosts = 5;
    double rt_mean_ms = 20.0;
    double rt_sigma_ms = 2.0;
    double status_error_rate = 0.002;
    double propagation_damping = 0.5;
    std::vector<GroupSpec> groups;
    std::vector<TopologyEdge> topology;  // group-level DAG edges
    std::vector<MetricSpec> metrics;
    std::vector<std::string> baseline_log_templates;  // "{group}"/"{param}" substituted
    std::vector<FailureSignature> failure_types;
    CasePlan cases;

    TimestampMs horizon_ms() const;  // warmup + case schedule + tail
    void validate() const;           // throws ConfigError

    static SimConfig defaults();
    static SimConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    static SimConfig load(const std::string& path);
};

struct Dataset {
    std::vector<TraceSpan> spans;
    std::vector<LogLine> logs;
    std::vector<MetricSample> metrics;
    DeploymentMap deployment;
    std::vector<FailureCase> labels;
};

// Failure-free telemetry over the configured horizon; all randomness is
// derived from the seed per stream, so output is reproducible and
// insensitive to generation order.
Dataset generate_baseline(const SimConfig& config);

// Applies each planned case's signature to a chosen root instance inside
// its window (metric shifts, log bursts, trace effects, one-hop damped
// propagation) and emits the matching labels. Telemetry outside the
// windows is untouched. Throws ConfigError on overlapping windows.
Dataset inject_failures(const SimConfig& config, const Dataset& baseline);

// Writes traces.jsonl, logs.jsonl, metrics.jsonl, deployment.json and
// labels.jsonl under dir.
void write_dataset(const Dataset& data, const std::string& dir);

}  // namespace mmdiag::sim
