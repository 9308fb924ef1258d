#include "mmdiag/simulator.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "mmdiag/rng.hpp"
#include "mmdiag/util.hpp"

namespace mmdiag::sim {

bool FailureSignature::has_effect() const {
    return !metric_shifts.empty() || !log_bursts.empty() || trace.rt_multiplier != 1.0 ||
           trace.status_flip_p > 0.0;
}

TimestampMs SimConfig::horizon_ms() const {
    TimestampMs horizon = warmup_ms;
    if (cases.count > 0) {
        horizon += static_cast<TimestampMs>(cases.count) * (cases.duration_ms + cases.gap_ms) +
                   cases.duration_ms;
    }
    return horizon;
}

namespace {

std::vector<std::string> instance_ids(const GroupSpec& g) {
    std::vector<std::string> ids;
    for (int i = 0; i < g.instances; ++i) ids.push_back(g.name + "-" + std::to_string(i));
    return ids;
}

std::string substitute(std::string text, const std::string& group, const std::string& param) {
    auto replace_all = [&](const std::string& from, const std::string& to) {
        std::size_t pos = 0;
        while ((pos = text.find(from, pos)) != std::string::npos) {
            text.replace(pos, from.size(), to);
            pos += to.size();
        }
    };
    replace_all("{group}", group);
    replace_all("{param}", param);
    return text;
}

std::string random_param(Rng& rng) {
    return "r" + std::to_string(10000 + rng.next_index(90000));
}

const MetricSpec& metric_spec(const SimConfig& config, const std::string& name) {
    for (const auto& m : config.metrics) {
        if (m.name == name) return m;
    }
    throw ConfigError("signature references unknown metric: " + name);
}

const FailureSignature& signature_of(const SimConfig& config, const std::string& type) {
    for (const auto& s : config.failure_types) {
        if (s.type == type) return s;
    }
    throw ConfigError("case mix references unknown failure type: " + type);
}

// Deterministic case schedule: grid windows, seeded type and root draws.
std::vector<FailureCase> plan_cases(const SimConfig& config,
                                    const std::vector<std::string>& instances) {
    std::vector<FailureCase> plan;
    Rng rng = Rng::stream(config.seed, "case-plan");
    double mix_total = 0.0;
    for (const auto& [_, w] : config.cases.mix) mix_total += w;
    for (int i = 0; i < config.cases.count; ++i) {
        FailureCase c;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "case-%04d", i);
        c.case_id = buf;
        c.start = config.start_ms + config.warmup_ms +
                  static_cast<TimestampMs>(i) * (config.cases.duration_ms + config.cases.gap_ms);
        c.end = c.start + config.cases.duration_ms;
        double draw = rng.next_double() * mix_total;
        c.failure_type = config.cases.mix.back().first;
        for (const auto& [type, w] : config.cases.mix) {
            if (draw < w) {
                c.failure_type = type;
                break;
            }
            draw -= w;
        }
        c.root_instance = instances[rng.next_index(instances.size())];
        plan.push_back(std::move(c));
    }
    return plan;
}

}  // namespace

void SimConfig::validate() const {
    if (groups.empty()) throw ConfigError("config needs at least one group");
    std::set<std::string> names;
    for (const auto& g : groups) {
        if (g.instances < 1) throw ConfigError("group " + g.name + " needs at least one instance");
        if (!names.insert(g.name).second) throw ConfigError("duplicate group name: " + g.name);
    }
    if (hosts < 1) throw ConfigError("config needs at least one host");
    if (metric_interval_ms <= 0 || log_interval_ms <= 0 || span_interval_ms <= 0) {
        throw ConfigError("intervals must be positive");
    }
    for (const auto& e : topology) {
        if (!names.count(e.from) || !names.count(e.to)) {
            throw ConfigError("topology edge references unknown group: " + e.from + ">" + e.to);
        }
    }
    // Cycle check via repeated removal of zero-in-degree groups.
    std::map<std::string, int> indegree;
    for (const auto& g : groups) indegree[g.name] = 0;
    for (const auto& e : topology) indegree[e.to] += 1;
    std::vector<std::string> frontier;
    for (const auto& [g, d] : indegree) {
        if (d == 0) frontier.push_back(g);
    }
    std::size_t removed = 0;
    while (!frontier.empty()) {
        const std::string g = frontier.back();
        frontier.pop_back();
        ++removed;
        for (const auto& e : topology) {
            if (e.from == g && --indegree[e.to] == 0) frontier.push_back(e.to);
        }
    }
    if (removed != groups.size()) throw ConfigError("group topology has a cycle");

    for (const auto& m : metrics) {
        if (m.sigma <= 0) throw ConfigError("metric " + m.name + " needs sigma > 0");
    }
    for (const auto& sig : failure_types) {
        if (!sig.has_effect()) throw ConfigError("failure type " + sig.type + " has no effect");
        for (const auto& shift : sig.metric_shifts) metric_spec(*this, shift.metric);
        for (const auto& burst : sig.log_bursts) {
            if (burst.template_text.empty() || burst.rate_per_min <= 0) {
                throw ConfigError("failure type " + sig.type + " has an invalid log burst");
            }
        }
    }
    if (cases.count > 0) {
        if (cases.duration_ms <= 0) throw ConfigError("case duration must be positive");
        if (cases.gap_ms < 0) throw ConfigError("case windows overlap (negative gap)");
        if (cases.mix.empty()) throw ConfigError("case mix is empty");
        for (const auto& [type, w] : cases.mix) {
            signature_of(*this, type);
            if (w <= 0) throw ConfigError("case mix weight for " + type + " must be positive");
        }
    }
}

SimConfig SimConfig::defaults() {
    SimConfig c;
    c.groups = {{"frontend", 2}, {"auth", 2}, {"catalog", 2}, {"billing", 2}, {"storage", 2}};
    c.topology = {{"frontend", "auth"},
                  {"frontend", "catalog"},
                  {"auth", "storage"},
                  {"catalog", "billing"},
                  {"billing", "storage"}};
    c.metrics = {{"cpu_util", 50.0, 5.0}, {"mem_util", 60.0, 4.0}, {"net_out", 300.0, 20.0}};
    c.baseline_log_templates = {"{group} request completed in {param} ms",
                                "{group} heartbeat ok seq {param}",
                                "{group} cache refresh finished job {param}"};

    FailureSignature memory_up;
    memory_up.type = "memory_up";
    memory_up.metric_shifts = {{"mem_util", Direction::Up, 8.0, true}};
    FailureSignature memory_free;
    memory_free.type = "memory_free";
    memory_free.metric_shifts = {{"mem_util", Direction::Down, 8.0, true}};
    FailureSignature login_error;
    login_error.type = "login_error";
    login_error.log_bursts = {{"{group} login token expired for user {param}", 24.0,
                               LogLevel::Error}};
    FailureSignature access_denied;
    access_denied.type = "access_denied";
    access_denied.log_bursts = {{"{group} access denied for request {param}", 24.0,
                                 LogLevel::Error}};
    access_denied.trace = {1.0, 0.9, "500"};
    FailureSignature file_not_found;
    file_not_found.type = "file_not_found";
    file_not_found.log_bursts = {{"{group} file not found path {param}", 24.0, LogLevel::Error}};
    file_not_found.metric_shifts = {{"net_out", Direction::Down, 8.0, true}};

    c.failure_types = {memory_up, memory_free, login_error, access_denied, file_not_found};
    c.cases.count = 300;
    c.cases.duration_ms = 60'000;
    c.cases.gap_ms = 60'000;
    for (const auto& sig : c.failure_types) c.cases.mix.emplace_back(sig.type, 1.0);
    return c;
}

Dataset generate_baseline(const SimConfig& config) {
    config.validate();
    Dataset data;

    std::vector<std::string> all_instances;
    for (const auto& g : config.groups) {
        for (const auto& id : instance_ids(g)) all_instances.push_back(id);
    }
    for (std::size_t i = 0; i < all_instances.size(); ++i) {
        const std::string host = "host-" + std::to_string(i % config.hosts);
        const std::string group = all_instances[i].substr(0, all_instances[i].rfind('-'));
        data.deployment.add(all_instances[i], host, group);
    }

    const TimestampMs t0 = config.start_ms;
    const TimestampMs horizon = config.horizon_ms();

    for (const auto& id : all_instances) {
        for (const auto& m : config.metrics) {
            Rng rng = Rng::stream(config.seed, "metric/" + id + "/" + m.name);
            for (TimestampMs t = t0; t < t0 + horizon; t += config.metric_interval_ms) {
                data.metrics.push_back({t, id, m.name, m.mean + m.sigma * rng.next_gaussian()});
            }
        }
    }

    std::map<std::string, std::vector<std::string>> members;
    for (const auto& g : config.groups) members[g.name] = instance_ids(g);
    for (const auto& edge : config.topology) {
        if (edge.rate_per_min == 0.0) continue;
        const TimestampMs period = edge.rate_per_min < 0
                                       ? config.span_interval_ms
                                       : static_cast<TimestampMs>(60'000.0 / edge.rate_per_min);
        for (const auto& caller : members[edge.from]) {
            for (const auto& callee : members[edge.to]) {
                Rng rng = Rng::stream(config.seed, "span/" + caller + ">" + callee);
                const TimestampMs offset = static_cast<TimestampMs>(rng.next_index(period));
                for (TimestampMs t = t0 + offset; t < t0 + horizon; t += period) {
                    TraceSpan s;
                    s.ts = t;
                    s.caller = caller;
                    s.callee = callee;
                    s.rt_ms = std::max(0.01, config.rt_mean_ms + config.rt_sigma_ms * rng.next_gaussian());
                    s.status = rng.next_bernoulli(config.status_error_rate) ? "500" : "200";
                    data.spans.push_back(std::move(s));
                }
            }
        }
    }

    for (const auto& id : all_instances) {
        const std::string group = data.deployment.group_of(id);
        Rng rng = Rng::stream(config.seed, "log/" + id);
        const TimestampMs offset = static_cast<TimestampMs>(rng.next_index(config.log_interval_ms));
        for (TimestampMs t = t0 + offset; t < t0 + horizon; t += config.log_interval_ms) {
            const auto& tmpl = config.baseline_log_templates[rng.next_index(
                config.baseline_log_templates.size())];
            data.logs.push_back({t, id, LogLevel::Info, substitute(tmpl, group, random_param(rng))});
        }
    }

    auto by_ts = [](const auto& a, const auto& b) { return a.ts < b.ts; };
    std::stable_sort(data.spans.begin(), data.spans.end(), by_ts);
    std::stable_sort(data.logs.begin(), data.logs.end(), by_ts);
    std::stable_sort(data.metrics.begin(), data.metrics.end(), by_ts);
    return data;
}

Dataset inject_failures(const SimConfig& config, const Dataset& baseline) {
    config.validate();
    Dataset data = baseline;
    const auto instances = data.deployment.instances();
    auto plan = plan_cases(config, instances);

    for (std::size_t i = 1; i < plan.size(); ++i) {
        if (plan[i].start < plan[i - 1].end) {
            throw ConfigError("case windows overlap: " + plan[i - 1].case_id + " and " +
                              plan[i].case_id);
        }
    }

    // Per-series and per-instance indexes; vectors are ts-sorted, so the
    // per-key index lists are too.
    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> metric_index;
    for (std::size_t i = 0; i < data.metrics.size(); ++i) {
        metric_index[{data.metrics[i].instance, data.metrics[i].metric}].push_back(i);
    }
    std::map<std::string, std::vector<std::size_t>> span_index;
    for (std::size_t i = 0; i < data.spans.size(); ++i) {
        span_index[data.spans[i].caller].push_back(i);
        if (data.spans[i].callee != data.spans[i].caller) {
            span_index[data.spans[i].callee].push_back(i);
        }
    }

    std::map<std::string, std::vector<std::string>> downstream;  // group -> callee groups
    for (const auto& e : config.topology) {
        if (e.rate_per_min != 0.0) downstream[e.from].push_back(e.to);
    }

    auto shift_series = [&](const std::string& instance, const std::string& metric, double delta,
                            TimestampMs start, TimestampMs end) {
        auto it = metric_index.find({instance, metric});
        if (it == metric_index.end()) return;
        for (std::size_t idx : it->second) {
            auto& sample = data.metrics[idx];
            if (sample.ts >= start && sample.ts <= end) sample.value += delta;
        }
    };

    for (const auto& c : plan) {
        const auto& sig = signature_of(config, c.failure_type);
        const std::string root_group = data.deployment.group_of(c.root_instance);
        Rng rng = Rng::stream(config.seed, "inject/" + c.case_id);

        for (const auto& shift : sig.metric_shifts) {
            const double sigma = metric_spec(config, shift.metric).sigma;
            const double delta =
                (shift.direction == Direction::Up ? 1.0 : -1.0) * shift.sigmas * sigma;
            shift_series(c.root_instance, shift.metric, delta, c.start, c.end);
            if (shift.propagate) {
                for (const auto& child_group : downstream[root_group]) {
                    for (const auto& child : data.deployment.instances_in(child_group)) {
                        shift_series(child, shift.metric, delta * config.propagation_damping,
                                     c.start, c.end);
                    }
                }
            }
        }

        for (const auto& burst : sig.log_bursts) {
            const TimestampMs period = static_cast<TimestampMs>(60'000.0 / burst.rate_per_min);
            for (TimestampMs t = c.start; t <= c.end; t += period) {
                data.logs.push_back({t, c.root_instance, burst.level,
                                     substitute(burst.template_text, root_group, random_param(rng))});
            }
        }

        if (sig.trace.rt_multiplier != 1.0 || sig.trace.status_flip_p > 0.0) {
            auto it = span_index.find(c.root_instance);
            if (it != span_index.end()) {
                for (std::size_t idx : it->second) {
                    auto& span = data.spans[idx];
                    if (span.ts < c.start || span.ts > c.end) continue;
                    span.rt_ms *= sig.trace.rt_multiplier;
                    if (sig.trace.status_flip_p > 0.0 &&
                        rng.next_bernoulli(sig.trace.status_flip_p)) {
                        span.status = sig.trace.status_value;
                    }
                }
            }
        }

        data.labels.push_back(c);
    }

    std::stable_sort(data.logs.begin(), data.logs.end(),
                     [](const LogLine& a, const LogLine& b) { return a.ts < b.ts; });
    return data;
}

void write_dataset(const Dataset& data, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream out(fs::path(dir) / "traces.jsonl");
        for (const auto& s : data.spans) {
            nlohmann::json j = {{"ts", s.ts}, {"caller", s.caller}, {"callee", s.callee},
                                {"rt_ms", s.rt_ms}, {"status", s.status}};
            out << j.dump() << "\n";
        }
    }
    {
        std::ofstream out(fs::path(dir) / "logs.jsonl");
        for (const auto& l : data.logs) {
            nlohmann::json j = {{"ts", l.ts}, {"instance", l.instance},
                                {"level", to_string(l.level)}, {"msg", l.message}};
            out << j.dump() << "\n";
        }
    }
    {
        std::ofstream out(fs::path(dir) / "metrics.jsonl");
        for (const auto& m : data.metrics) {
            nlohmann::json j = {{"ts", m.ts}, {"instance", m.instance}, {"metric", m.metric},
                                {"value", m.value}};
            out << j.dump() << "\n";
        }
    }
    {
        nlohmann::json instances = nlohmann::json::array();
        for (const auto& [id, group] : data.deployment.groups_by_instance()) {
            instances.push_back({{"id", id}, {"host", data.deployment.host_of(id)},
                                 {"group", group}});
        }
        std::ofstream out(fs::path(dir) / "deployment.json");
        out << nlohmann::json{{"instances", std::move(instances)}}.dump(2) << "\n";
    }
    {
        std::ofstream out(fs::path(dir) / "labels.jsonl");
        for (const auto& c : data.labels) {
            nlohmann::json j = {{"case_id", c.case_id}, {"start", c.start}, {"end", c.end},
                                {"root_instance", c.root_instance},
                                {"failure_type", c.failure_type}};
            out << j.dump() << "\n";
        }
    }
}

nlohmann::json SimConfig::to_json() const {
    nlohmann::json groups_json = nlohmann::json::array();
    for (const auto& g : groups) groups_json.push_back({{"name", g.name}, {"instances", g.instances}});
    nlohmann::json topo = nlohmann::json::array();
    for (const auto& e : topology) {
        nlohmann::json edge = {{"from", e.from}, {"to", e.to}};
        if (e.rate_per_min >= 0) edge["rate_per_min"] = e.rate_per_min;
        topo.push_back(std::move(edge));
    }
    nlohmann::json metrics_json = nlohmann::json::array();
    for (const auto& m : metrics) {
        metrics_json.push_back({{"name", m.name}, {"mean", m.mean}, {"sigma", m.sigma}});
    }
    nlohmann::json sigs = nlohmann::json::array();
    for (const auto& s : failure_types) {
        nlohmann::json shifts = nlohmann::json::array();
        for (const auto& sh : s.metric_shifts) {
            shifts.push_back({{"metric", sh.metric}, {"direction", to_string(sh.direction)},
                              {"sigmas", sh.sigmas}, {"propagate", sh.propagate}});
        }
        nlohmann::json bursts = nlohmann::json::array();
        for (const auto& b : s.log_bursts) {
            bursts.push_back({{"template", b.template_text}, {"rate_per_min", b.rate_per_min},
                              {"level", to_string(b.level)}});
        }
        sigs.push_back({{"type", s.type}, {"metric_shifts", std::move(shifts)},
                        {"log_bursts", std::move(bursts)},
                        {"trace", {{"rt_multiplier", s.trace.rt_multiplier},
                                   {"status_flip_p", s.trace.status_flip_p},
                                   {"status_value", s.trace.status_value}}}});
    }
    nlohmann::json mix = nlohmann::json::object();
    for (const auto& [type, w] : cases.mix) mix[type] = w;
    return {{"seed", seed},
            {"start_ms", start_ms},
            {"warmup_ms", warmup_ms},
            {"metric_interval_ms", metric_interval_ms},
            {"span_interval_ms", span_interval_ms},
            {"log_interval_ms", log_interval_ms},
            {"hosts", hosts},
            {"rt_mean_ms", rt_mean_ms},
            {"rt_sigma_ms", rt_sigma_ms},
            {"status_error_rate", status_error_rate},
            {"propagation_damping", propagation_damping},
            {"groups", std::move(groups_json)},
            {"topology", std::move(topo)},
            {"metrics", std::move(metrics_json)},
            {"baseline_log_templates", baseline_log_templates},
            {"failure_types", std::move(sigs)},
            {"cases", {{"count", cases.count}, {"duration_ms", cases.duration_ms},
                       {"gap_ms", cases.gap_ms}, {"mix", std::move(mix)}}}};
}

SimConfig SimConfig::from_json(const nlohmann::json& j) {
    SimConfig c = defaults();
    c.seed = j.value("seed", c.seed);
    c.start_ms = j.value("start_ms", c.start_ms);
    c.warmup_ms = j.value("warmup_ms", c.warmup_ms);
    c.metric_interval_ms = j.value("metric_interval_ms", c.metric_interval_ms);
    c.span_interval_ms = j.value("span_interval_ms", c.span_interval_ms);
    c.log_interval_ms = j.value("log_interval_ms", c.log_interval_ms);
    c.hosts = j.value("hosts", c.hosts);
    c.rt_mean_ms = j.value("rt_mean_ms", c.rt_mean_ms);
    c.rt_sigma_ms = j.value("rt_sigma_ms", c.rt_sigma_ms);
    c.status_error_rate = j.value("status_error_rate", c.status_error_rate);
    c.propagation_damping = j.value("propagation_damping", c.propagation_damping);
    if (j.contains("groups")) {
        c.groups.clear();
        for (const auto& g : j.at("groups")) {
            c.groups.push_back({g.at("name").get<std::string>(), g.value("instances", 1)});
        }
    }
    if (j.contains("topology")) {
        c.topology.clear();
        for (const auto& e : j.at("topology")) {
            c.topology.push_back({e.at("from").get<std::string>(), e.at("to").get<std::string>(),
                                  e.value("rate_per_min", -1.0)});
        }
    }
    if (j.contains("metrics")) {
        c.metrics.clear();
        for (const auto& m : j.at("metrics")) {
            c.metrics.push_back({m.at("name").get<std::string>(), m.at("mean").get<double>(),
                                 m.at("sigma").get<double>()});
        }
    }
    if (j.contains("baseline_log_templates")) {
        c.baseline_log_templates = j.at("baseline_log_templates").get<std::vector<std::string>>();
    }
    if (j.contains("failure_types")) {
        c.failure_types.clear();
        for (const auto& s : j.at("failure_types")) {
            FailureSignature sig;
            sig.type = s.at("type").get<std::string>();
            for (const auto& sh : s.value("metric_shifts", nlohmann::json::array())) {
                sig.metric_shifts.push_back({sh.at("metric").get<std::string>(),
                                             parse_direction(sh.at("direction").get<std::string>()),
                                             sh.value("sigmas", 8.0), sh.value("propagate", true)});
            }
            for (const auto& b : s.value("log_bursts", nlohmann::json::array())) {
                sig.log_bursts.push_back({b.at("template").get<std::string>(),
                                          b.value("rate_per_min", 24.0),
                                          parse_log_level(b.value("level", "ERROR"))});
            }
            if (s.contains("trace")) {
                const auto& t = s.at("trace");
                sig.trace = {t.value("rt_multiplier", 1.0), t.value("status_flip_p", 0.0),
                             t.value("status_value", std::string("500"))};
            }
            c.failure_types.push_back(std::move(sig));
        }
    }
    if (j.contains("cases")) {
        const auto& cj = j.at("cases");
        c.cases.count = cj.value("count", c.cases.count);
        c.cases.duration_ms = cj.value("duration_ms", c.cases.duration_ms);
        c.cases.gap_ms = cj.value("gap_ms", c.cases.gap_ms);
        if (cj.contains("mix")) {
            c.cases.mix.clear();
            const auto& mix = cj.at("mix");
            for (auto it = mix.begin(); it != mix.end(); ++it) {
                c.cases.mix.emplace_back(it.key(), it.value().get<double>());
            }
        }
    }
    return c;
}

SimConfig SimConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open simulator config " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    try {
        return from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    } catch (const DataError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

}  // namespace mmdiag::sim
