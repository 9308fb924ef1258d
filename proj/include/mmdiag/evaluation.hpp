#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace mmdiag {

struct RankedCase {
    std::vector<std::string> ranked_instances;
    std::string truth;
};

// Fraction of cases whose true root instance appears in the first k ranked
// entries (lists shorter than k count only what they have).
double a_at_k(std::span<const RankedCase> results, int k);

// Exact mean of A@1..A@5, accumulated in that order.
double avg_at_5(std::span<const RankedCase> results);

struct ClassCounts {
    std::string label;
    int tp = 0;
    int fp = 0;
    int fn = 0;

    int support() const { return tp + fn; }
};

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::vector<ClassCounts> per_class;
};

// Support-weighted precision/recall/F1 over the union of predicted and true
// labels; metrics with a zero denominator contribute 0.
Prf weighted_prf(std::span<const std::string> predicted, std::span<const std::string> truth);

struct EvalReport {
    std::map<int, double> a_at_k;  // k in 1..5
    double avg_at_5 = 0.0;
    Prf prf;
};

EvalReport evaluate(std::span<const RankedCase> ranking, std::span<const std::string> predicted,
                    std::span<const std::string> truth);

nlohmann::json report_to_json(const EvalReport& report);

}  // namespace mmdiag
