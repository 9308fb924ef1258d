#include "mmdiag/events.hpp"

#include <algorithm>
#include <cmath>

#include "mmdiag/kernels.hpp"
#include "mmdiag/util.hpp"

namespace mmdiag {

std::string to_string(EventKind kind) {
    switch (kind) {
        case EventKind::Trace: return "T";
        case EventKind::Log: return "L";
        case EventKind::Metric: return "M";
    }
    return "T";
}

bool Event::same_payload(const Event& other) const {
    if (kind != other.kind) return false;
    switch (kind) {
        case EventKind::Trace: return caller == other.caller && callee == other.callee;
        case EventKind::Log: return template_id == other.template_id;
        case EventKind::Metric: return metric == other.metric && direction == other.direction;
    }
    return false;
}

std::string event_token(const Event& e, const DeploymentMap& deployment) {
    switch (e.kind) {
        case EventKind::Trace:
            return "T:" + deployment.group_or_self(e.caller) + "->" +
                   deployment.group_or_self(e.callee);
        case EventKind::Log: return "L:" + to_hex(e.template_id);
        case EventKind::Metric: return "M:" + e.metric + ":" + to_string(e.direction);
    }
    return {};
}

std::vector<std::pair<TimestampMs, Direction>> detect_numeric_anomalies(
    const std::vector<std::pair<TimestampMs, double>>& series, int baseline_window, double k_sigma,
    double sigma_floor) {
    std::vector<double> values;
    values.reserve(series.size());
    for (const auto& [ts, v] : series) values.push_back(v);
    auto flags = kernels::scan_series(values, baseline_window, k_sigma, sigma_floor);
    std::vector<std::pair<TimestampMs, Direction>> out;
    out.reserve(flags.size());
    for (const auto& f : flags) out.emplace_back(series[f.index].first, f.direction);
    return out;
}

std::set<std::string> detect_categorical_surge(const std::map<std::string, int>& window_counts,
                                               const std::vector<std::map<std::string, int>>& history,
                                               int min_history, int min_count) {
    std::set<std::string> anomalous;
    if (history.size() < static_cast<std::size_t>(min_history)) return anomalous;
    const double n = static_cast<double>(history.size());
    for (const auto& [value, count] : window_counts) {
        if (count < min_count) continue;
        double sum = 0.0;
        double sumsq = 0.0;
        for (const auto& h : history) {
            auto it = h.find(value);
            const double c = it == h.end() ? 0.0 : static_cast<double>(it->second);
            sum += c;
            sumsq += c * c;
        }
        const double mean = sum / n;
        const double var = std::max(0.0, sumsq / n - mean * mean);
        if (static_cast<double>(count) > mean + 3.0 * std::sqrt(var)) anomalous.insert(value);
    }
    return anomalous;
}

namespace {

// Bucket index of ts in the 30s-style tiling anchored at window.start.
// Negative indices land in the baseline period.
std::int64_t bucket_of(TimestampMs ts, TimestampMs anchor, TimestampMs width) {
    TimestampMs delta = ts - anchor;
    std::int64_t b = delta / width;
    if (delta < 0 && delta % width != 0) --b;
    return b;
}

}  // namespace

std::vector<Event> extract_trace_events(std::span<const TraceSpan> spans, const Window& window,
                                        const Window& baseline, const DetectorParams& params) {
    struct GroupData {
        std::vector<std::pair<TimestampMs, double>> rt;
        std::map<std::int64_t, std::map<std::string, int>> status_buckets;
    };
    std::map<std::pair<std::string, std::string>, GroupData> groups;
    const TimestampMs width = params.surge_subwindow_ms;
    for (const auto& s : spans) {
        if (s.ts < baseline.start || s.ts > window.end) continue;
        auto& g = groups[{s.caller, s.callee}];
        g.rt.emplace_back(s.ts, s.rt_ms);
        g.status_buckets[bucket_of(s.ts, window.start, width)][s.status] += 1;
    }

    const std::int64_t first_bucket = 0;
    const std::int64_t last_bucket = bucket_of(window.end, window.start, width);
    const std::int64_t baseline_from = bucket_of(baseline.start, window.start, width);

    std::vector<Event> events;
    for (auto& [key, g] : groups) {
        std::set<std::int64_t> anomalous_buckets;

        for (const auto& [ts, dir] :
             detect_numeric_anomalies(g.rt, params.baseline_window, params.k_sigma,
                                      params.sigma_floor)) {
            if (window.contains(ts)) anomalous_buckets.insert(bucket_of(ts, window.start, width));
        }

        // Status surge: history is the baseline-period tiling, constant for
        // every in-window sub-window.
        std::vector<std::map<std::string, int>> history;
        for (std::int64_t b = baseline_from; b < first_bucket; ++b) {
            auto it = g.status_buckets.find(b);
            history.push_back(it == g.status_buckets.end() ? std::map<std::string, int>{}
                                                           : it->second);
        }
        for (std::int64_t b = first_bucket; b <= last_bucket; ++b) {
            auto it = g.status_buckets.find(b);
            if (it == g.status_buckets.end()) continue;
            if (!detect_categorical_surge(it->second, history, params.surge_min_history,
                                          params.surge_min_count)
                     .empty()) {
                anomalous_buckets.insert(b);
            }
        }

        for (std::int64_t b : anomalous_buckets) {
            if (b < first_bucket || b > last_bucket) continue;
            Event e;
            e.kind = EventKind::Trace;
            e.ts = window.start + b * width;
            e.instance = key.first;
            e.caller = key.first;
            e.callee = key.second;
            events.push_back(std::move(e));
        }
    }
    return events;
}

std::vector<Event> extract_log_events(std::span<const LogLine> logs, const Window& window,
                                      const ParseTree& tree, const DetectorParams& params) {
    std::vector<Event> events;
    // last emitted timestamp per (instance, template)
    std::map<std::pair<std::string, std::uint64_t>, TimestampMs> last_emitted;
    for (const auto& line : logs) {
        if (!window.contains(line.ts)) continue;
        const std::uint64_t tid = tree.lookup_or_zero(line.message);
        auto key = std::make_pair(line.instance, tid);
        auto it = last_emitted.find(key);
        if (it != last_emitted.end() && line.ts - it->second <= params.log_dedup_ms) continue;
        last_emitted[key] = line.ts;
        Event e;
        e.kind = EventKind::Log;
        e.ts = line.ts;
        e.instance = line.instance;
        e.template_id = tid;
        events.push_back(std::move(e));
    }
    return events;
}

std::vector<Event> extract_metric_events(std::span<const MetricSample> metrics,
                                         const Window& window, const DetectorParams& params) {
    std::map<std::pair<std::string, std::string>, std::vector<std::pair<TimestampMs, double>>>
        series;
    for (const auto& m : metrics) {
        if (m.ts > window.end) continue;
        series[{m.instance, m.metric}].emplace_back(m.ts, m.value);
    }
    std::vector<Event> events;
    for (const auto& [key, points] : series) {
        for (const auto& [ts, dir] : detect_numeric_anomalies(points, params.baseline_window,
                                                              params.k_sigma, params.sigma_floor)) {
            if (!window.contains(ts)) continue;
            Event e;
            e.kind = EventKind::Metric;
            e.ts = ts;
            e.instance = key.first;
            e.metric = key.second;
            e.direction = dir;
            events.push_back(std::move(e));
        }
    }
    return events;
}

std::vector<EventSequence> build_event_sequences(std::span<const Event> events,
                                                 const FailureCase& c,
                                                 const DeploymentMap& deployment) {
    std::map<std::string, std::vector<Event>> per_instance;
    for (const auto& id : deployment.instances()) per_instance[id];  // ensure presence
    for (const auto& e : events) {
        if (e.kind == EventKind::Trace) {
            if (per_instance.count(e.caller)) {
                Event copy = e;
                copy.instance = e.caller;
                per_instance[e.caller].push_back(std::move(copy));
            }
            if (e.callee != e.caller && per_instance.count(e.callee)) {
                Event copy = e;
                copy.instance = e.callee;
                per_instance[e.callee].push_back(std::move(copy));
            }
        } else if (per_instance.count(e.instance)) {
            per_instance[e.instance].push_back(e);
        }
    }
    std::vector<EventSequence> sequences;
    sequences.reserve(per_instance.size());
    for (auto& [id, evs] : per_instance) {
        std::stable_sort(evs.begin(), evs.end(), [&](const Event& a, const Event& b) {
            if (a.ts != b.ts) return a.ts < b.ts;
            if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
            return event_token(a, deployment) < event_token(b, deployment);
        });
        EventSequence seq;
        seq.instance = id;
        seq.case_id = c.case_id;
        seq.events = std::move(evs);
        sequences.push_back(std::move(seq));
    }
    return sequences;
}

void relabel(std::vector<EventSequence>& sequences, const FailureCase& c) {
    bool found = false;
    for (auto& seq : sequences) {
        if (seq.instance == c.root_instance) {
            seq.label = c.failure_type;
            found = true;
        } else {
            seq.label = kNonRootLabel;
        }
    }
    if (!found) {
        throw DataError("case " + c.case_id + ": root instance '" + c.root_instance +
                        "' has no event sequence");
    }
}

nlohmann::json event_to_json(const Event& e) {
    nlohmann::json payload;
    switch (e.kind) {
        case EventKind::Trace:
            payload = {{"caller", e.caller}, {"callee", e.callee}};
            break;
        case EventKind::Log:
            payload = {{"template", to_hex(e.template_id)}};
            break;
        case EventKind::Metric:
            payload = {{"metric", e.metric}, {"direction", to_string(e.direction)}};
            break;
    }
    return {{"ts", e.ts}, {"kind", to_string(e.kind)}, {"instance", e.instance},
            {"payload", std::move(payload)}};
}

Event event_from_json(const nlohmann::json& j) {
    Event e;
    e.ts = j.at("ts").get<TimestampMs>();
    e.instance = j.at("instance").get<std::string>();
    const std::string kind = j.at("kind").get<std::string>();
    const auto& payload = j.at("payload");
    if (kind == "T") {
        e.kind = EventKind::Trace;
        e.caller = payload.at("caller").get<std::string>();
        e.callee = payload.at("callee").get<std::string>();
    } else if (kind == "L") {
        e.kind = EventKind::Log;
        e.template_id = std::stoull(payload.at("template").get<std::string>(), nullptr, 16);
    } else if (kind == "M") {
        e.kind = EventKind::Metric;
        e.metric = payload.at("metric").get<std::string>();
        e.direction = parse_direction(payload.at("direction").get<std::string>());
    } else {
        throw DataError("unknown event kind: " + kind);
    }
    return e;
}

}  // namespace mmdiag
