#include "mmdiag/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "mmdiag/kernels.hpp"
#include "mmdiag/rng.hpp"

namespace mmdiag {

int DependencyGraph::node_index(const std::string& instance) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), instance);
    if (it == nodes.end() || *it != instance) return -1;
    return static_cast<int>(it - nodes.begin());
}

Matrix DependencyGraph::normalized() const {
    const std::size_t n = nodes.size();
    std::vector<double> inv_sqrt(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double degree = 0.0;
        for (std::size_t j = 0; j < n; ++j) degree += adjacency(i, j);
        if (degree > 0.0) inv_sqrt[i] = 1.0 / std::sqrt(degree);
    }
    Matrix norm(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            norm(i, j) = adjacency(i, j) * inv_sqrt[i] * inv_sqrt[j];
        }
    }
    return norm;
}

DependencyGraph build_dependency_graph(std::span<const TraceSpan> spans,
                                       const DeploymentMap& deployment) {
    DependencyGraph graph;
    graph.nodes = deployment.instances();
    const std::size_t n = graph.nodes.size();
    graph.adjacency = Matrix(n, n);

    auto connect = [&](int a, int b) {
        if (a < 0 || b < 0 || a == b) return;
        graph.adjacency(a, b) = 1.0;
        graph.adjacency(b, a) = 1.0;
    };
    for (const auto& s : spans) {
        connect(graph.node_index(s.caller), graph.node_index(s.callee));
    }
    // Co-deployment: every pair of instances sharing a host.
    std::map<std::string, std::vector<int>> by_host;
    for (const auto& [instance, host] : deployment.hosts()) {
        by_host[host].push_back(graph.node_index(instance));
    }
    for (const auto& [_, members] : by_host) {
        for (std::size_t i = 0; i < members.size(); ++i) {
            for (std::size_t j = i + 1; j < members.size(); ++j) connect(members[i], members[j]);
        }
    }
    return graph;
}

void save_graph(const DependencyGraph& graph, const std::string& path) {
    nlohmann::json edges = nlohmann::json::array();
    const std::size_t n = graph.nodes.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (graph.adjacency(i, j) != 0.0) edges.push_back({i, j});
        }
    }
    nlohmann::json j = {{"version", 1}, {"nodes", graph.nodes}, {"edges", std::move(edges)}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << "\n";
}

DependencyGraph load_graph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open graph file " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    if (j.value("version", 0) != 1) {
        throw DataError(path + ": unsupported graph version " + std::to_string(j.value("version", 0)));
    }
    DependencyGraph graph;
    graph.nodes = j.at("nodes").get<std::vector<std::string>>();
    graph.adjacency = Matrix(graph.nodes.size(), graph.nodes.size());
    for (const auto& e : j.at("edges")) {
        graph.adjacency(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>()) = 1.0;
    }
    return graph;
}

std::vector<double> instance_representation(const EventSequence& seq, const EmbeddingModel& model,
                                            const DeploymentMap& deployment) {
    std::vector<double> h(model.dim, 0.0);
    if (seq.events.empty()) return h;
    for (const auto& e : seq.events) {
        auto row = embed_event(model, event_token(e, deployment));
        for (int j = 0; j < model.dim; ++j) h[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(seq.events.size());
    for (double& v : h) v *= inv;
    return h;
}

Matrix instance_features(std::span<const EventSequence> sequences, const EmbeddingModel& model,
                         const DeploymentMap& deployment, const DependencyGraph& graph) {
    Matrix x(graph.nodes.size(), model.dim);
    std::vector<bool> seen(graph.nodes.size(), false);
    for (const auto& seq : sequences) {
        const int idx = graph.node_index(seq.instance);
        if (idx < 0) throw DataError("sequence instance not in graph: " + seq.instance);
        if (seen[idx]) throw DataError("duplicate sequence for instance " + seq.instance);
        seen[idx] = true;
        const auto h = instance_representation(seq, model, deployment);
        std::copy(h.begin(), h.end(), x.row(idx).begin());
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (!seen[i]) throw DataError("no sequence for instance " + graph.nodes[i]);
    }
    return x;
}

namespace {

std::vector<double> softmax_vec(std::vector<double> z) {
    double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - m);
        sum += v;
    }
    for (double& v : z) v /= sum;
    return z;
}

// Forward state reused by the backward pass.
struct ForwardWork {
    std::vector<Matrix> hop_features;  // Â^k X for k = 0..K
    Matrix pre_relu;                   // n x hidden
    std::vector<int> winner;           // per hidden column, node index of the max
    std::vector<double> readout;       // hidden
    HeadProbs probs;
};

ForwardWork run_forward(const Matrix& normalized, const Matrix& x, const GnnModel& model) {
    ForwardWork work;
    work.hop_features.reserve(model.k_hops + 1);
    work.hop_features.push_back(x);
    for (int k = 1; k <= model.k_hops; ++k) {
        work.hop_features.push_back(kernels::matmul(normalized, work.hop_features.back()));
    }
    work.pre_relu = Matrix(x.rows(), model.hidden);
    for (int k = 0; k <= model.k_hops; ++k) {
        const Matrix term = kernels::matmul(work.hop_features[k], model.theta[k]);
        for (std::size_t i = 0; i < work.pre_relu.data().size(); ++i) {
            work.pre_relu.data()[i] += term.data()[i];
        }
    }
    const std::size_t n = x.rows();
    work.winner.assign(model.hidden, 0);
    work.readout.assign(model.hidden, 0.0);
    for (int j = 0; j < model.hidden; ++j) {
        double best = -std::numeric_limits<double>::infinity();
        int best_i = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = std::max(0.0, work.pre_relu(i, j));
            if (v > best) {
                best = v;
                best_i = static_cast<int>(i);
            }
        }
        work.winner[j] = best_i;
        work.readout[j] = best;
    }

    auto head = [&](const Matrix& w, const std::vector<double>& b) {
        std::vector<double> z(b);
        for (int j = 0; j < model.hidden; ++j) {
            const double rv = work.readout[j];
            if (rv == 0.0) continue;
            auto row = w.row(j);
            for (std::size_t c = 0; c < z.size(); ++c) z[c] += rv * row[c];
        }
        return softmax_vec(std::move(z));
    };
    work.probs.group = head(model.w_group, model.b_group);
    work.probs.type = head(model.w_type, model.b_type);
    return work;
}

void check_dims(const DependencyGraph& graph, const Matrix& x, const GnnModel& model) {
    if (x.rows() != graph.nodes.size()) {
        throw DataError("feature rows (" + std::to_string(x.rows()) +
                        ") do not match graph nodes (" + std::to_string(graph.nodes.size()) + ")");
    }
    if (static_cast<int>(x.cols()) != model.dim) {
        throw DataError("feature width " + std::to_string(x.cols()) + " does not match model dim " +
                        std::to_string(model.dim));
    }
}

}  // namespace

Matrix tagconv_forward(const DependencyGraph& graph, const Matrix& x, const GnnModel& model) {
    check_dims(graph, x, model);
    ForwardWork work = run_forward(graph.normalized(), x, model);
    Matrix h = std::move(work.pre_relu);
    for (double& v : h.data()) v = std::max(0.0, v);
    return h;
}

HeadProbs forward(const DependencyGraph& graph, const Matrix& x, const GnnModel& model) {
    check_dims(graph, x, model);
    return run_forward(graph.normalized(), x, model).probs;
}

double case_loss(const HeadProbs& pred, int group_label, int type_label) {
    const double lg = std::log(std::max(pred.group.at(group_label), 1e-12));
    const double lt = std::log(std::max(pred.type.at(type_label), 1e-12));
    return -(lg + lt);
}

double joint_loss(std::span<const HeadProbs> preds, std::span<const std::pair<int, int>> labels) {
    if (preds.size() != labels.size() || preds.empty()) {
        throw DataError("joint_loss: prediction/label count mismatch or empty");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        total += case_loss(preds[i], labels[i].first, labels[i].second);
    }
    return total / static_cast<double>(preds.size());
}

namespace {

GnnGradients zero_gradients(const GnnModel& model) {
    GnnGradients g;
    g.theta.assign(model.theta.size(), Matrix(model.dim, model.hidden));
    g.w_group = Matrix(model.hidden, model.groups.size());
    g.b_group.assign(model.groups.size(), 0.0);
    g.w_type = Matrix(model.hidden, model.types.size());
    g.b_type.assign(model.types.size(), 0.0);
    return g;
}

// Gradient contribution of one case, scaled by `scale`; returns its loss.
double accumulate_case(const Matrix& normalized, const GnnModel& model, const TrainCase& c,
                       double scale, GnnGradients& g) {
    ForwardWork work = run_forward(normalized, c.x, model);
    const double loss = case_loss(work.probs, c.group_label, c.type_label);

    std::vector<double> dg = work.probs.group;
    dg[c.group_label] -= 1.0;
    std::vector<double> dt = work.probs.type;
    dt[c.type_label] -= 1.0;

    std::vector<double> dr(model.hidden, 0.0);
    for (int j = 0; j < model.hidden; ++j) {
        const double rv = work.readout[j];
        auto gw = g.w_group.row(j);
        auto wg = model.w_group.row(j);
        double acc = 0.0;
        for (std::size_t s = 0; s < dg.size(); ++s) {
            gw[s] += scale * rv * dg[s];
            acc += wg[s] * dg[s];
        }
        auto tw = g.w_type.row(j);
        auto wt = model.w_type.row(j);
        for (std::size_t t = 0; t < dt.size(); ++t) {
            tw[t] += scale * rv * dt[t];
            acc += wt[t] * dt[t];
        }
        dr[j] = acc;
    }
    for (std::size_t s = 0; s < dg.size(); ++s) g.b_group[s] += scale * dg[s];
    for (std::size_t t = 0; t < dt.size(); ++t) g.b_type[t] += scale * dt[t];

    // MaxPool: the winning node takes the gradient; ReLU masks non-positive
    // pre-activations.
    for (int j = 0; j < model.hidden; ++j) {
        const int w = work.winner[j];
        if (work.pre_relu(w, j) <= 0.0) continue;
        const double dz = dr[j] * scale;
        for (int k = 0; k <= model.k_hops; ++k) {
            auto p_row = work.hop_features[k].row(w);
            for (int d = 0; d < model.dim; ++d) g.theta[k](d, j) += p_row[d] * dz;
        }
    }
    return loss;
}

}  // namespace

GnnGradients gnn_gradients(const DependencyGraph& graph, const GnnModel& model,
                           std::span<const TrainCase> cases) {
    const Matrix normalized = graph.normalized();
    GnnGradients g = zero_gradients(model);
    const double scale = 1.0 / static_cast<double>(cases.size());
    for (const auto& c : cases) accumulate_case(normalized, model, c, scale, g);
    return g;
}

GnnModel train_gnn(const DependencyGraph& graph, std::span<const TrainCase> cases,
                   std::vector<std::string> groups, std::vector<std::string> types, int dim,
                   const GnnTrainConfig& cfg) {
    if (cases.empty()) throw DataError("no cases to train on");
    if (types.size() < 2) throw DataError("GNN training needs at least two failure types");

    GnnModel model;
    model.k_hops = cfg.k_hops;
    model.dim = dim;
    model.hidden = cfg.hidden;
    model.groups = std::move(groups);
    model.types = std::move(types);

    Rng rng = Rng::stream(cfg.seed, "gnn-init");
    const double bound = 0.1;
    model.theta.assign(cfg.k_hops + 1, Matrix(dim, cfg.hidden));
    for (auto& th : model.theta) {
        for (double& v : th.data()) v = rng.next_uniform(-bound, bound);
    }
    model.w_group = Matrix(cfg.hidden, model.groups.size());
    for (double& v : model.w_group.data()) v = rng.next_uniform(-bound, bound);
    model.b_group.assign(model.groups.size(), 0.0);
    model.w_type = Matrix(cfg.hidden, model.types.size());
    for (double& v : model.w_type.data()) v = rng.next_uniform(-bound, bound);
    model.b_type.assign(model.types.size(), 0.0);

    for (const auto& c : cases) {
        if (c.group_label < 0 || c.group_label >= static_cast<int>(model.groups.size()) ||
            c.type_label < 0 || c.type_label >= static_cast<int>(model.types.size())) {
            throw DataError("training case with out-of-range label");
        }
    }

    const Matrix normalized = graph.normalized();
    const double scale = 1.0 / static_cast<double>(cases.size());
    std::vector<GnnGradients> slots(cases.size());
    std::vector<double> losses(cases.size(), 0.0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Per-case gradients land in private slots and are reduced in case
        // order, keeping the update bit-deterministic under OpenMP.
#ifdef _OPENMP
        const std::int64_t n_cases = static_cast<std::int64_t>(cases.size());
#pragma omp parallel for schedule(dynamic) if (kernels::parallel_enabled())
        for (std::int64_t i = 0; i < n_cases; ++i) {
            slots[i] = zero_gradients(model);
            losses[i] = accumulate_case(normalized, model, cases[i], scale, slots[i]);
        }
#else
        for (std::size_t i = 0; i < cases.size(); ++i) {
            slots[i] = zero_gradients(model);
            losses[i] = accumulate_case(normalized, model, cases[i], scale, slots[i]);
        }
#endif
        GnnGradients g = zero_gradients(model);
        double loss = 0.0;
        for (std::size_t i = 0; i < slots.size(); ++i) {
            loss += losses[i] * scale;
            for (std::size_t k = 0; k < g.theta.size(); ++k) {
                for (std::size_t j = 0; j < g.theta[k].data().size(); ++j) {
                    g.theta[k].data()[j] += slots[i].theta[k].data()[j];
                }
            }
            for (std::size_t j = 0; j < g.w_group.data().size(); ++j) {
                g.w_group.data()[j] += slots[i].w_group.data()[j];
            }
            for (std::size_t j = 0; j < g.b_group.size(); ++j) g.b_group[j] += slots[i].b_group[j];
            for (std::size_t j = 0; j < g.w_type.data().size(); ++j) {
                g.w_type.data()[j] += slots[i].w_type.data()[j];
            }
            for (std::size_t j = 0; j < g.b_type.size(); ++j) g.b_type[j] += slots[i].b_type[j];
        }
        if (!std::isfinite(loss)) {
            throw NumericError("GNN training diverged at epoch " + std::to_string(epoch));
        }
        for (std::size_t k = 0; k < model.theta.size(); ++k) {
            for (std::size_t j = 0; j < model.theta[k].data().size(); ++j) {
                model.theta[k].data()[j] -= cfg.lr * g.theta[k].data()[j];
            }
        }
        for (std::size_t j = 0; j < model.w_group.data().size(); ++j) {
            model.w_group.data()[j] -= cfg.lr * g.w_group.data()[j];
        }
        for (std::size_t j = 0; j < model.b_group.size(); ++j) {
            model.b_group[j] -= cfg.lr * g.b_group[j];
        }
        for (std::size_t j = 0; j < model.w_type.data().size(); ++j) {
            model.w_type.data()[j] -= cfg.lr * g.w_type.data()[j];
        }
        for (std::size_t j = 0; j < model.b_type.size(); ++j) {
            model.b_type[j] -= cfg.lr * g.b_type[j];
        }
    }
    return model;
}

DiagnosisResult rank_diagnosis(const HeadProbs& probs, const GnnModel& model,
                               const DeploymentMap& deployment,
                               std::span<const EventSequence> sequences,
                               const std::string& case_id) {
    DiagnosisResult result;
    result.case_id = case_id;

    for (std::size_t s = 0; s < model.groups.size(); ++s) {
        result.ranked_groups.emplace_back(model.groups[s], probs.group[s]);
    }
    std::stable_sort(result.ranked_groups.begin(), result.ranked_groups.end(),
                     [](const auto& a, const auto& b) {
                         if (a.second != b.second) return a.second > b.second;
                         return a.first < b.first;
                     });

    std::map<std::string, std::size_t> seq_length;
    for (const auto& seq : sequences) seq_length[seq.instance] = seq.events.size();

    for (const auto& [group, _] : result.ranked_groups) {
        auto members = deployment.instances_in(group);
        std::stable_sort(members.begin(), members.end(),
                         [&](const std::string& a, const std::string& b) {
                             const std::size_t la = seq_length.count(a) ? seq_length.at(a) : 0;
                             const std::size_t lb = seq_length.count(b) ? seq_length.at(b) : 0;
                             if (la != lb) return la > lb;
                             return a < b;
                         });
        for (const auto& m : members) {
            if (result.ranked_instances.size() < 5) result.ranked_instances.push_back(m);
        }
        if (result.ranked_instances.size() >= 5) break;
    }

    for (std::size_t t = 0; t < model.types.size(); ++t) {
        result.failure_type.emplace_back(model.types[t], probs.type[t]);
    }
    std::stable_sort(result.failure_type.begin(), result.failure_type.end(),
                     [](const auto& a, const auto& b) {
                         if (a.second != b.second) return a.second > b.second;
                         return a.first < b.first;
                     });
    return result;
}

nlohmann::json diagnosis_to_json(const DiagnosisResult& result) {
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& [g, p] : result.ranked_groups) groups.push_back({{"group", g}, {"p", p}});
    nlohmann::json types = nlohmann::json::array();
    for (const auto& [t, p] : result.failure_type) types.push_back({{"type", t}, {"p", p}});
    return {{"case_id", result.case_id}, {"ranked_groups", std::move(groups)},
            {"ranked_instances", result.ranked_instances}, {"failure_type", std::move(types)}};
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols,
                        const std::string& what) {
    const auto data = j.get<std::vector<std::vector<double>>>();
    if (data.size() != rows) throw DataError(what + ": wrong row count");
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (data[r].size() != cols) throw DataError(what + ": wrong column count");
        std::copy(data[r].begin(), data[r].end(), m.row(r).begin());
    }
    return m;
}

}  // namespace

void save_gnn(const GnnModel& model, const std::string& path) {
    nlohmann::json theta = nlohmann::json::array();
    for (const auto& th : model.theta) theta.push_back(matrix_to_json(th));
    nlohmann::json j = {{"version", model.version},
                        {"k_hops", model.k_hops},
                        {"dim", model.dim},
                        {"hidden", model.hidden},
                        {"groups", model.groups},
                        {"types", model.types},
                        {"theta", std::move(theta)},
                        {"w_group", matrix_to_json(model.w_group)},
                        {"b_group", model.b_group},
                        {"w_type", matrix_to_json(model.w_type)},
                        {"b_type", model.b_type}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << j.dump(2) << "\n";
}

GnnModel load_gnn(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model file " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    const int version = j.value("version", 0);
    if (version != 1) {
        throw DataError(path + ": unsupported model version " + std::to_string(version) +
                        " (expected 1)");
    }
    GnnModel model;
    model.version = version;
    model.k_hops = j.at("k_hops").get<int>();
    model.dim = j.at("dim").get<int>();
    model.hidden = j.at("hidden").get<int>();
    model.groups = j.at("groups").get<std::vector<std::string>>();
    model.types = j.at("types").get<std::vector<std::string>>();
    const auto& theta = j.at("theta");
    if (theta.size() != static_cast<std::size_t>(model.k_hops) + 1) {
        throw DataError(path + ": theta count does not match k_hops");
    }
    for (const auto& th : theta) {
        model.theta.push_back(matrix_from_json(th, model.dim, model.hidden, path + ": theta"));
    }
    model.w_group =
        matrix_from_json(j.at("w_group"), model.hidden, model.groups.size(), path + ": w_group");
    model.b_group = j.at("b_group").get<std::vector<double>>();
    model.w_type =
        matrix_from_json(j.at("w_type"), model.hidden, model.types.size(), path + ": w_type");
    model.b_type = j.at("b_type").get<std::vector<double>>();
    if (model.b_group.size() != model.groups.size() || model.b_type.size() != model.types.size()) {
        throw DataError(path + ": bias sizes disagree with head sizes");
    }
    return model;
}

}  // namespace mmdiag
