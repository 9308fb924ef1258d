#pragma once

#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmdiag/drain.hpp"
#include "mmdiag/embedding.hpp"
#include "mmdiag/evaluation.hpp"
#include "mmdiag/events.hpp"
#include "mmdiag/graph.hpp"
#include "mmdiag/io.hpp"
#include "mmdiag/types.hpp"

namespace mmdiag {

// Everything a command run needs. Flags override the JSON config file;
// the extended training knobs are config-file only.
struct RunConfig {
    std::string traces_path;
    std::string logs_path;
    std::string metrics_path;
    std::string deployment_path;
    std::string labels_path;
    std::string out_dir;
    std::string models_dir;

    int dim = 100;
    std::size_t target_size = 1000;
    int k_hops = 2;
    double lead_minutes = 10.0;
    std::uint64_t seed = 1;
    bool augment = true;
    std::set<std::string> disabled_modalities;  // subset of {trace, log, metric}
    int max_cases = 0;   // train: first N cases by start time (0 = all)
    int skip_cases = 0;  // evaluate: skip the first N cases
    int repeat = 1;
    bool reuse_events = false;

    int embed_epochs = 50;
    double embed_lr = 0.1;
    int embed_batch = 32;
    int embed_min_count = 1;
    int hidden = 64;
    int gnn_epochs = 100;
    double gnn_lr = 1e-2;
    double history_minutes = 35.0;  // detector history pulled in before each window
    DetectorParams detectors;

    void validate() const;  // throws ConfigError
    void merge_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& path);

    TimestampMs lead_ms() const { return static_cast<TimestampMs>(lead_minutes * 60'000.0); }
    TimestampMs history_ms() const { return static_cast<TimestampMs>(history_minutes * 60'000.0); }
};

struct ModelSet {
    EmbeddingModel embedding;
    GnnModel gnn;
    DependencyGraph graph;
    ParseTree tree;

    ModelSet() : tree(ParseTree::Params{}) {}
};

ModelSet load_models(const std::string& models_dir);

// Fits the parse tree and dependency graph on the training period, extracts
// and relabels per-case sequences, runs two-phase embedding training and
// GNN training, and writes all artifacts (plus manifest and events cache)
// into out_dir.
void train_pipeline(const RunConfig& cfg);

// Extraction + forward pass over an explicit window. Throws DataError when
// the window holds no telemetry at all.
DiagnosisResult diagnose_pipeline(const RunConfig& cfg, TimestampMs window_start,
                                  TimestampMs window_end);

// Diagnoses every test case (after skip_cases) and scores the ranking and
// type predictions; writes report.json and per_case.csv into out_dir.
EvalReport evaluate_pipeline(const RunConfig& cfg);

// Extraction for one case window against pre-loaded telemetry; exposed for
// the end-to-end tests.
std::vector<EventSequence> extract_case_sequences(const TelemetryBundle& telemetry,
                                                  const DeploymentMap& deployment,
                                                  const ParseTree& tree, const FailureCase& c,
                                                  const RunConfig& cfg);

}  // namespace mmdiag
