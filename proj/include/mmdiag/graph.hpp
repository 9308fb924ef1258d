#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmdiag/embedding.hpp"
#include "mmdiag/events.hpp"
#include "mmdiag/matrix.hpp"
#include "mmdiag/types.hpp"

namespace mmdiag {

// Instance graph: two directed edges per observed caller/callee pair plus
// symmetric edges between co-deployed instances, no self loops. Node order
// is the sorted instance id list.
struct DependencyGraph {
    std::vector<std::string> nodes;
    Matrix adjacency;  // n x n, 0/1, zero diagonal

    int node_index(const std::string& instance) const;  // -1 when unknown
    // D^{-1/2} A D^{-1/2}, with zero rows/columns for zero-degree nodes.
    Matrix normalized() const;
};

DependencyGraph build_dependency_graph(std::span<const TraceSpan> spans,
                                       const DeploymentMap& deployment);

void save_graph(const DependencyGraph& graph, const std::string& path);
DependencyGraph load_graph(const std::string& path);

// K-hop graph convolution trunk with two softmax heads (service group and
// failure type) over a column-max readout.
struct GnnModel {
    int version = 1;
    int k_hops = 2;
    int dim = 0;     // input feature width
    int hidden = 0;  // trunk output width
    std::vector<Matrix> theta;  // k_hops + 1 matrices, dim x hidden
    Matrix w_group;             // hidden x S
    std::vector<double> b_group;
    Matrix w_type;  // hidden x T
    std::vector<double> b_type;
    std::vector<std::string> groups;  // sorted
    std::vector<std::string> types;   // sorted
};

// Mean of the embedded event tokens of one sequence; empty sequences give
// the zero vector.
std::vector<double> instance_representation(const EventSequence& seq, const EmbeddingModel& model,
                                            const DeploymentMap& deployment);

// Stacks instance representations into the graph's node order. Sequences
// must cover every node exactly once.
Matrix instance_features(std::span<const EventSequence> sequences, const EmbeddingModel& model,
                         const DeploymentMap& deployment, const DependencyGraph& graph);

// ReLU( sum_k (normalized adjacency)^k X theta_k ).
Matrix tagconv_forward(const DependencyGraph& graph, const Matrix& x, const GnnModel& model);

struct HeadProbs {
    std::vector<double> group;
    std::vector<double> type;
};

HeadProbs forward(const DependencyGraph& graph, const Matrix& x, const GnnModel& model);

// Cross-entropy of both heads for one case, clamping logs at 1e-12.
double case_loss(const HeadProbs& pred, int group_label, int type_label);
// Eq-style joint objective: mean over cases of the summed head losses.
double joint_loss(std::span<const HeadProbs> preds, std::span<const std::pair<int, int>> labels);

struct TrainCase {
    Matrix x;  // n x dim node features
    int group_label = 0;
    int type_label = 0;
};

struct GnnTrainConfig {
    int k_hops = 2;
    int hidden = 64;
    double lr = 1e-2;
    int epochs = 100;
    std::uint64_t seed = 1;
};

struct GnnGradients {
    std::vector<Matrix> theta;
    Matrix w_group;
    std::vector<double> b_group;
    Matrix w_type;
    std::vector<double> b_type;
};

// Mean-loss gradients over the cases; MaxPool backward sends the gradient
// to the winning node only (ties to the lowest node index).
GnnGradients gnn_gradients(const DependencyGraph& graph, const GnnModel& model,
                           std::span<const TrainCase> cases);

// Full-batch gradient descent on the joint loss. Deterministic per seed;
// throws NumericError if the loss goes non-finite.
GnnModel train_gnn(const DependencyGraph& graph, std::span<const TrainCase> cases,
                   std::vector<std::string> groups, std::vector<std::string> types, int dim,
                   const GnnTrainConfig& cfg);

struct DiagnosisResult {
    std::string case_id;
    std::vector<std::pair<std::string, double>> ranked_groups;  // descending probability
    std::vector<std::string> ranked_instances;                  // at most 5
    std::vector<std::pair<std::string, double>> failure_type;   // descending probability
};

// Ranking rule: groups by descending probability (ties lexicographic);
// within each group instances by event-sequence length descending (ties
// lexicographic); concatenated and truncated to five.
DiagnosisResult rank_diagnosis(const HeadProbs& probs, const GnnModel& model,
                               const DeploymentMap& deployment,
                               std::span<const EventSequence> sequences,
                               const std::string& case_id);

nlohmann::json diagnosis_to_json(const DiagnosisResult& result);

void save_gnn(const GnnModel& model, const std::string& path);
GnnModel load_gnn(const std::string& path);

}  // namespace mmdiag
