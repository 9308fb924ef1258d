#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmdiag {

using TimestampMs = std::int64_t;

enum class LogLevel { Info, Warn, Debug, Error };
enum class Direction { Up, Down };

std::string to_string(LogLevel level);
std::string to_string(Direction dir);
LogLevel parse_log_level(const std::string& s);  // throws DataError on unknown level
Direction parse_direction(const std::string& s);

// One caller->callee invocation.
struct TraceSpan {
    TimestampMs ts = 0;
    std::string caller;
    std::string callee;
    double rt_ms = 0.0;
    std::string status;
};

struct LogLine {
    TimestampMs ts = 0;
    std::string instance;
    LogLevel level = LogLevel::Info;
    std::string message;
};

struct MetricSample {
    TimestampMs ts = 0;
    std::string instance;
    std::string metric;
    double value = 0.0;
};

// Which host an instance runs on and which service group it belongs to.
class DeploymentMap {
public:
    void add(const std::string& instance, const std::string& host, const std::string& group);

    bool has(const std::string& instance) const { return group_of_.count(instance) != 0; }
    const std::string& host_of(const std::string& instance) const;
    const std::string& group_of(const std::string& instance) const;
    // Group of an instance, or the instance id itself if unknown.
    std::string group_or_self(const std::string& instance) const;

    std::size_t size() const { return group_of_.size(); }
    const std::map<std::string, std::string>& hosts() const { return host_of_; }
    const std::map<std::string, std::string>& groups_by_instance() const { return group_of_; }

    std::vector<std::string> instances() const;                       // sorted
    std::vector<std::string> groups() const;                          // sorted distinct
    std::vector<std::string> instances_in(const std::string& group) const;  // sorted

private:
    std::map<std::string, std::string> host_of_;
    std::map<std::string, std::string> group_of_;
};

struct FailureCase {
    std::string case_id;
    TimestampMs start = 0;
    TimestampMs end = 0;
    std::string root_instance;
    std::string failure_type;
};

// Error taxonomy, mapped to CLI exit codes (2/3/4).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mmdiag
