#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmdiag/drain.hpp"
#include "mmdiag/types.hpp"

namespace mmdiag {

inline constexpr const char* kNonRootLabel = "non-root-cause";

enum class EventKind { Trace, Log, Metric };  // rank order used for tie-breaking

std::string to_string(EventKind kind);

// A unified anomaly event from one of the three modalities. Payload fields
// are populated per kind: caller/callee for Trace, template_id for Log,
// metric/direction for Metric.
struct Event {
    EventKind kind = EventKind::Trace;
    TimestampMs ts = 0;
    std::string instance;
    std::string caller;
    std::string callee;
    std::uint64_t template_id = 0;
    std::string metric;
    Direction direction = Direction::Up;

    bool same_payload(const Event& other) const;
};

// Canonical vocabulary form of an event. Trace endpoints are canonicalized
// to service groups so the token survives instance churn.
std::string event_token(const Event& e, const DeploymentMap& deployment);

struct EventSequence {
    std::string instance;
    std::string case_id;
    std::vector<Event> events;
    std::string label = kNonRootLabel;
};

// Inclusive time window.
struct Window {
    TimestampMs start = 0;
    TimestampMs end = 0;

    bool contains(TimestampMs ts) const { return ts >= start && ts <= end; }
};

struct DetectorParams {
    int baseline_window = 60;       // samples preceding each tested point
    double k_sigma = 3.0;
    double sigma_floor = 1e-9;
    TimestampMs surge_subwindow_ms = 30'000;
    int surge_min_history = 5;
    int surge_min_count = 5;
    TimestampMs log_dedup_ms = 1'000;
};

// Points flagged against the rolling mean/sigma of the `baseline_window`
// points strictly before them; points with fewer predecessors never flag.
std::vector<std::pair<TimestampMs, Direction>> detect_numeric_anomalies(
    const std::vector<std::pair<TimestampMs, double>>& series, int baseline_window, double k_sigma,
    double sigma_floor = 1e-9);

// Values whose count in the current window exceeds mean + 3 sigma of their
// per-window history counts and reaches min_count. Fewer than min_history
// history windows yields the empty set.
std::set<std::string> detect_categorical_surge(const std::map<std::string, int>& window_counts,
                                               const std::vector<std::map<std::string, int>>& history,
                                               int min_history = 5, int min_count = 5);

// Per (caller, callee) group: response times are 3-sigma scanned, status
// codes are surge-checked on fixed sub-windows tiled over the case window
// (history comes from the baseline period). One Trace event per anomalous
// group per anomalous sub-window, stamped at the sub-window start.
std::vector<Event> extract_trace_events(std::span<const TraceSpan> spans, const Window& window,
                                        const Window& baseline, const DetectorParams& params);

// One Log event per line in the window; consecutive identical
// (instance, template) events within the dedup interval collapse to one.
std::vector<Event> extract_log_events(std::span<const LogLine> logs, const Window& window,
                                      const ParseTree& tree, const DetectorParams& params);

std::vector<Event> extract_metric_events(std::span<const MetricSample> metrics,
                                         const Window& window, const DetectorParams& params);

// Exactly one sequence per deployed instance (possibly empty). Trace events
// are appended to both endpoints' sequences. Order within a sequence:
// timestamp, then kind (Trace < Log < Metric), then token.
std::vector<EventSequence> build_event_sequences(std::span<const Event> events,
                                                 const FailureCase& c,
                                                 const DeploymentMap& deployment);

// The root instance's sequence gets the case's failure type, everyone else
// the non-root sentinel. Throws if the root instance has no sequence.
void relabel(std::vector<EventSequence>& sequences, const FailureCase& c);

nlohmann::json event_to_json(const Event& e);
Event event_from_json(const nlohmann::json& j);

}  // namespace mmdiag
