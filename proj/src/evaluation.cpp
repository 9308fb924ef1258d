#include "mmdiag/evaluation.hpp"

#include <algorithm>
#include <iostream>
#include <set>

#include "mmdiag/types.hpp"

namespace mmdiag {

double a_at_k(std::span<const RankedCase> results, int k) {
    if (results.empty()) throw DataError("a_at_k: empty result set");
    if (k < 1) throw DataError("a_at_k: k must be positive");
    std::size_t hits = 0;
    for (const auto& r : results) {
        const std::size_t upto = std::min<std::size_t>(k, r.ranked_instances.size());
        for (std::size_t i = 0; i < upto; ++i) {
            if (r.ranked_instances[i] == r.truth) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(results.size());
}

double avg_at_5(std::span<const RankedCase> results) {
    double sum = 0.0;
    for (int k = 1; k <= 5; ++k) sum += a_at_k(results, k);
    return sum / 5.0;
}

Prf weighted_prf(std::span<const std::string> predicted, std::span<const std::string> truth) {
    if (predicted.empty() || predicted.size() != truth.size()) {
        throw DataError("weighted_prf: empty or mismatched inputs");
    }
    std::set<std::string> labels(truth.begin(), truth.end());
    labels.insert(predicted.begin(), predicted.end());

    Prf out;
    double total_support = 0.0;
    bool warned = false;
    for (const auto& label : labels) {
        ClassCounts c;
        c.label = label;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            const bool is_true = truth[i] == label;
            const bool is_pred = predicted[i] == label;
            if (is_true && is_pred) ++c.tp;
            if (!is_true && is_pred) ++c.fp;
            if (is_true && !is_pred) ++c.fn;
        }
        double precision = 0.0;
        double recall = 0.0;
        if (c.tp + c.fp > 0) {
            precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
        } else if (!warned) {
            std::cerr << "[warn] class '" << label << "' never predicted; precision counted as 0\n";
            warned = true;
        }
        if (c.tp + c.fn > 0) recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
        const double f1 =
            precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        const double support = static_cast<double>(c.support());
        out.precision += support * precision;
        out.recall += support * recall;
        out.f1 += support * f1;
        total_support += support;
        out.per_class.push_back(c);
    }
    if (total_support > 0) {
        out.precision /= total_support;
        out.recall /= total_support;
        out.f1 /= total_support;
    }
    return out;
}

EvalReport evaluate(std::span<const RankedCase> ranking, std::span<const std::string> predicted,
                    std::span<const std::string> truth) {
    EvalReport report;
    for (int k = 1; k <= 5; ++k) report.a_at_k[k] = a_at_k(ranking, k);
    report.avg_at_5 = avg_at_5(ranking);
    report.prf = weighted_prf(predicted, truth);
    return report;
}

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json at_k = nlohmann::json::object();
    for (const auto& [k, v] : report.a_at_k) at_k[std::to_string(k)] = v;
    nlohmann::json per_class = nlohmann::json::array();
    for (const auto& c : report.prf.per_class) {
        per_class.push_back({{"type", c.label}, {"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn},
                             {"support", c.support()}});
    }
    return {{"a_at_k", std::move(at_k)},
            {"avg_at_5", report.avg_at_5},
            {"precision", report.prf.precision},
            {"recall", report.prf.recall},
            {"f1", report.prf.f1},
            {"per_class", std::move(per_class)}};
}

}  // namespace mmdiag
