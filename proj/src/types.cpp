#include "mmdiag/types.hpp"

#include <algorithm>
#include <cstdio>

#include "mmdiag/util.hpp"

namespace mmdiag {

std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

std::string to_string(LogLevel level) {
    switch (level) {
        case LogLevel::Info: return "INFO";
        case LogLevel::Warn: return "WARN";
        case LogLevel::Debug: return "DEBUG";
        case LogLevel::Error: return "ERROR";
    }
    return "INFO";
}

std::string to_string(Direction dir) { return dir == Direction::Up ? "up" : "down"; }

LogLevel parse_log_level(const std::string& s) {
    if (s == "INFO") return LogLevel::Info;
    if (s == "WARN") return LogLevel::Warn;
    if (s == "DEBUG") return LogLevel::Debug;
    if (s == "ERROR") return LogLevel::Error;
    throw DataError("unknown log level: " + s);
}

Direction parse_direction(const std::string& s) {
    if (s == "up") return Direction::Up;
    if (s == "down") return Direction::Down;
    throw DataError("unknown anomaly direction: " + s);
}

void DeploymentMap::add(const std::string& instance, const std::string& host,
                        const std::string& group) {
    if (group_of_.count(instance)) throw DataError("duplicate instance in deployment: " + instance);
    host_of_[instance] = host;
    group_of_[instance] = group;
}

const std::string& DeploymentMap::host_of(const std::string& instance) const {
    auto it = host_of_.find(instance);
    if (it == host_of_.end()) throw DataError("unknown instance: " + instance);
    return it->second;
}

const std::string& DeploymentMap::group_of(const std::string& instance) const {
    auto it = group_of_.find(instance);
    if (it == group_of_.end()) throw DataError("unknown instance: " + instance);
    return it->second;
}

std::string DeploymentMap::group_or_self(const std::string& instance) const {
    auto it = group_of_.find(instance);
    return it == group_of_.end() ? instance : it->second;
}

std::vector<std::string> DeploymentMap::instances() const {
    std::vector<std::string> out;
    out.reserve(group_of_.size());
    for (const auto& [id, _] : group_of_) out.push_back(id);
    return out;  // std::map iteration order is already sorted
}

std::vector<std::string> DeploymentMap::groups() const {
    std::set<std::string> uniq;
    for (const auto& [_, g] : group_of_) uniq.insert(g);
    return {uniq.begin(), uniq.end()};
}

std::vector<std::string> DeploymentMap::instances_in(const std::string& group) const {
    std::vector<std::string> out;
    for (const auto& [id, g] : group_of_) {
        if (g == group) out.push_back(id);
    }
    return out;
}

}  // namespace mmdiag
