#include "mmdiag/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <json.hpp>

#include "mmdiag/kernels.hpp"
#include "mmdiag/rng.hpp"

namespace mmdiag {

TokenizedSequence tokenize_sequence(const EventSequence& seq, const DeploymentMap& deployment) {
    TokenizedSequence out;
    out.label = seq.label;
    out.tokens.reserve(seq.events.size());
    for (const auto& e : seq.events) out.tokens.push_back(event_token(e, deployment));
    return out;
}

std::vector<TokenizedSequence> tokenize_sequences(std::span<const EventSequence> seqs,
                                                  const DeploymentMap& deployment) {
    std::vector<TokenizedSequence> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) out.push_back(tokenize_sequence(s, deployment));
    return out;
}

std::string bigram_token(const std::string& a, const std::string& b) {
    return a + kBigramSep + b;
}

bool is_bigram_token(const std::string& token) {
    return token.find(kBigramSep) != std::string::npos;
}

Vocabulary::Vocabulary() { add(kUnknownToken); }

int Vocabulary::add(const std::string& token) {
    auto [it, inserted] = index_.try_emplace(token, static_cast<int>(tokens_.size()));
    if (inserted) tokens_.push_back(token);
    return it->second;
}

int Vocabulary::lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnknown : it->second;
}

Vocabulary build_vocabulary(std::span<const TokenizedSequence> sequences, int min_count) {
    // Counting pass, then insertion in first-appearance order so indices are
    // deterministic regardless of the map's iteration order.
    std::unordered_map<std::string, int> counts;
    auto count_all = [&](const TokenizedSequence& seq) {
        for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
            counts[seq.tokens[i]] += 1;
            if (i + 1 < seq.tokens.size()) counts[bigram_token(seq.tokens[i], seq.tokens[i + 1])] += 1;
        }
    };
    for (const auto& seq : sequences) count_all(seq);

    Vocabulary vocab;
    auto admit = [&](const std::string& token) {
        if (counts[token] >= min_count) vocab.add(token);
    };
    for (const auto& seq : sequences) {
        for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
            admit(seq.tokens[i]);
            if (i + 1 < seq.tokens.size()) admit(bigram_token(seq.tokens[i], seq.tokens[i + 1]));
        }
    }
    return vocab;
}

std::vector<int> example_token_ids(const Vocabulary& vocab, const TokenizedSequence& seq) {
    if (seq.tokens.empty()) return {Vocabulary::kUnknown};
    std::vector<int> ids;
    ids.reserve(seq.tokens.size() * 2);
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
        ids.push_back(vocab.lookup(seq.tokens[i]));
        if (i + 1 < seq.tokens.size()) {
            ids.push_back(vocab.lookup(bigram_token(seq.tokens[i], seq.tokens[i + 1])));
        }
    }
    return ids;
}

namespace {

struct Example {
    std::vector<int> ids;
    int label = 0;
};

std::vector<double> softmax(std::vector<double> z) {
    double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - m);
        sum += v;
    }
    for (double& v : z) v /= sum;
    return z;
}

std::vector<double> pooled_input(const EmbeddingModel& model, const std::vector<int>& ids) {
    std::vector<double> x(model.dim, 0.0);
    for (int id : ids) {
        auto row = model.input.row(id);
        for (int j = 0; j < model.dim; ++j) x[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(ids.size());
    for (double& v : x) v *= inv;
    return x;
}

std::vector<double> logits_of(const EmbeddingModel& model, const std::vector<double>& x) {
    const std::size_t c_count = model.output.cols();
    std::vector<double> z(c_count, 0.0);
    for (int j = 0; j < model.dim; ++j) {
        const double xv = x[j];
        if (xv == 0.0) continue;
        auto row = model.output.row(j);
        for (std::size_t c = 0; c < c_count; ++c) z[c] += xv * row[c];
    }
    return z;
}

// One example's contribution to the mean-loss gradients, scaled by `scale`.
void accumulate_example(const EmbeddingModel& model, const Example& ex, double scale,
                        Matrix& grad_input, Matrix& grad_output, std::set<int>* touched,
                        double* loss_out) {
    const auto x = pooled_input(model, ex.ids);
    auto p = softmax(logits_of(model, x));
    if (loss_out) *loss_out += -std::log(std::max(p[ex.label], 1e-12)) * scale;
    p[ex.label] -= 1.0;  // dL/dz

    // grad_output += scale * x p^T
    for (int j = 0; j < model.dim; ++j) {
        if (x[j] == 0.0) continue;
        auto g_row = grad_output.row(j);
        const double xj = x[j] * scale;
        for (std::size_t c = 0; c < p.size(); ++c) g_row[c] += xj * p[c];
    }
    // dx = output . p ; each token row gets dx * scale / |ids|
    const double inv = scale / static_cast<double>(ex.ids.size());
    std::vector<double> dx(model.dim, 0.0);
    for (int j = 0; j < model.dim; ++j) {
        auto row = model.output.row(j);
        double acc = 0.0;
        for (std::size_t c = 0; c < p.size(); ++c) acc += row[c] * p[c];
        dx[j] = acc * inv;
    }
    for (int id : ex.ids) {
        auto g_row = grad_input.row(id);
        for (int j = 0; j < model.dim; ++j) g_row[j] += dx[j];
        if (touched) touched->insert(id);
    }
}

std::vector<Example> make_examples(std::span<const TokenizedSequence> sequences,
                                   const EmbeddingModel& model) {
    std::vector<Example> examples;
    examples.reserve(sequences.size());
    for (const auto& seq : sequences) {
        Example ex;
        ex.ids = example_token_ids(model.vocab, seq);
        auto it = std::lower_bound(model.classes.begin(), model.classes.end(), seq.label);
        if (it == model.classes.end() || *it != seq.label) {
            throw DataError("label not in model classes: " + seq.label);
        }
        ex.label = static_cast<int>(it - model.classes.begin());
        examples.push_back(std::move(ex));
    }
    return examples;
}

}  // namespace

EmbeddingModel train_embedding(std::span<const TokenizedSequence> sequences,
                               const EmbedTrainConfig& cfg) {
    if (sequences.empty()) throw DataError("no sequences to train on");
    std::set<std::string> class_set;
    for (const auto& s : sequences) class_set.insert(s.label);
    if (class_set.size() < 2) {
        throw DataError("embedding training needs at least two classes, got " +
                        std::to_string(class_set.size()));
    }

    EmbeddingModel model;
    model.dim = cfg.dim;
    model.classes.assign(class_set.begin(), class_set.end());
    model.vocab = build_vocabulary(sequences, cfg.min_count);

    Rng rng = Rng::stream(cfg.seed, "embedding-init");
    model.input = Matrix(model.vocab.size(), cfg.dim);
    const double bound = 0.5 / static_cast<double>(cfg.dim);
    for (double& v : model.input.data()) v = rng.next_uniform(-bound, bound);
    model.output = Matrix(cfg.dim, model.classes.size());

    auto examples = make_examples(sequences, model);

    Matrix grad_input(model.vocab.size(), cfg.dim);
    Matrix grad_output(cfg.dim, model.classes.size());
    std::set<int> touched;

    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    Rng shuffle_rng = Rng::stream(cfg.seed, "embedding-shuffle");
    const std::size_t batches_per_epoch = (examples.size() + cfg.batch - 1) / cfg.batch;
    const std::size_t total_steps = batches_per_epoch * cfg.epochs;
    std::size_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.next_index(i)]);
        }
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < examples.size(); b += cfg.batch) {
            const std::size_t b_end = std::min(examples.size(), b + cfg.batch);
            const double scale = 1.0 / static_cast<double>(b_end - b);
            touched.clear();
            for (std::size_t j = 0; j < grad_output.data().size(); ++j) grad_output.data()[j] = 0.0;
            for (std::size_t i = b; i < b_end; ++i) {
                accumulate_example(model, examples[order[i]], scale, grad_input, grad_output,
                                   &touched, &epoch_loss);
            }
            const double lr =
                cfg.lr * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
            for (int id : touched) {
                auto g = grad_input.row(id);
                auto w = model.input.row(id);
                for (int j = 0; j < cfg.dim; ++j) {
                    w[j] -= lr * g[j];
                    g[j] = 0.0;
                }
            }
            for (std::size_t j = 0; j < grad_output.data().size(); ++j) {
                model.output.data()[j] -= lr * grad_output.data()[j];
            }
            ++step;
        }
        if (!std::isfinite(epoch_loss)) {
            throw NumericError("embedding training diverged at epoch " + std::to_string(epoch));
        }
    }
    return model;
}

std::span<const double> embed_event(const EmbeddingModel& model, const std::string& token) {
    return model.input.row(model.vocab.lookup(token));
}

std::vector<double> class_probabilities(const EmbeddingModel& model,
                                        const TokenizedSequence& seq) {
    const auto ids = example_token_ids(model.vocab, seq);
    return softmax(logits_of(model, pooled_input(model, ids)));
}

std::string predict_class(const EmbeddingModel& model, const TokenizedSequence& seq) {
    const auto p = class_probabilities(model, seq);
    const std::size_t best = std::max_element(p.begin(), p.end()) - p.begin();
    return model.classes[best];
}

double dataset_loss(const EmbeddingModel& model, std::span<const TokenizedSequence> sequences) {
    auto examples = make_examples(sequences, model);
    double loss = 0.0;
    for (const auto& ex : examples) {
        const auto p = softmax(logits_of(model, pooled_input(model, ex.ids)));
        loss += -std::log(std::max(p[ex.label], 1e-12));
    }
    return loss / static_cast<double>(examples.size());
}

void dataset_gradients(const EmbeddingModel& model, std::span<const TokenizedSequence> sequences,
                       Matrix& grad_input, Matrix& grad_output) {
    auto examples = make_examples(sequences, model);
    grad_input = Matrix(model.input.rows(), model.input.cols());
    grad_output = Matrix(model.output.rows(), model.output.cols());
    const double scale = 1.0 / static_cast<double>(examples.size());
    for (const auto& ex : examples) {
        accumulate_example(model, ex, scale, grad_input, grad_output, nullptr, nullptr);
    }
}

std::vector<EventSequence> augment(std::span<const EventSequence> sequences,
                                   const DeploymentMap& deployment, const EmbeddingModel& f0,
                                   std::size_t target_size, std::uint64_t seed) {
    // Representative event per unigram token, first occurrence wins.
    std::map<std::string, Event> representative;
    for (const auto& seq : sequences) {
        for (const auto& e : seq.events) {
            representative.try_emplace(event_token(e, deployment), e);
        }
    }
    // Nearest-neighbour table over unigram tokens that map to real events.
    std::vector<int> candidates;
    for (int idx = 1; idx < f0.vocab.size(); ++idx) {
        const std::string& tok = f0.vocab.token(idx);
        if (!is_bigram_token(tok) && representative.count(tok)) candidates.push_back(idx);
    }
    const auto nn = kernels::nearest_rows(f0.input, candidates);
    std::map<std::string, const Event*> neighbour_of;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (nn[i] < 0) continue;
        neighbour_of[f0.vocab.token(candidates[i])] = &representative.at(f0.vocab.token(nn[i]));
    }

    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < sequences.size(); ++i) by_class[sequences[i].label].push_back(i);

    std::vector<EventSequence> out(sequences.begin(), sequences.end());
    Rng rng = Rng::stream(seed, "augment");
    for (const auto& [label, members] : by_class) {
        const std::size_t want = std::max(members.size(), target_size);
        std::vector<std::size_t> donors;  // non-empty originals
        for (std::size_t i : members) {
            if (!sequences[i].events.empty()) donors.push_back(i);
        }
        if (members.size() >= want) continue;
        if (donors.empty()) {
            std::cerr << "[warn] class '" << label
                      << "' has only empty sequences; copying verbatim for augmentation\n";
        }
        for (std::size_t n = members.size(); n < want; ++n) {
            if (donors.empty()) {
                out.push_back(sequences[members[(n - members.size()) % members.size()]]);
                continue;
            }
            const EventSequence& src = sequences[donors[rng.next_index(donors.size())]];
            EventSequence synth = src;
            const std::size_t pos = rng.next_index(src.events.size());
            const Event& victim = src.events[pos];
            auto it = neighbour_of.find(event_token(victim, deployment));
            if (it == neighbour_of.end()) {
                out.push_back(std::move(synth));  // no distinct neighbour exists
                continue;
            }
            Event replacement = *it->second;
            replacement.ts = victim.ts;
            replacement.instance = victim.instance;
            synth.events[pos] = std::move(replacement);
            out.push_back(std::move(synth));
        }
    }
    return out;
}

EmbeddingModel two_phase_train(std::span<const EventSequence> sequences,
                               const DeploymentMap& deployment, const EmbedTrainConfig& cfg,
                               std::size_t target_size, bool augment_enabled) {
    auto tokenized = tokenize_sequences(sequences, deployment);
    EmbeddingModel f0 = train_embedding(tokenized, cfg);
    if (!augment_enabled) return f0;
    auto expanded = augment(sequences, deployment, f0, target_size, cfg.seed);
    auto expanded_tokens = tokenize_sequences(expanded, deployment);
    return train_embedding(expanded_tokens, cfg);
}

void save_embedding(const EmbeddingModel& model, const std::string& path) {
    nlohmann::json vocab = nlohmann::json::object();
    for (int i = 0; i < model.vocab.size(); ++i) vocab[model.vocab.token(i)] = i;
    nlohmann::json input = nlohmann::json::array();
    for (std::size_t r = 0; r < model.input.rows(); ++r) {
        input.push_back(std::vector<double>(model.input.row(r).begin(), model.input.row(r).end()));
    }
    nlohmann::json output = nlohmann::json::array();
    for (std::size_t r = 0; r < model.output.rows(); ++r) {
        output.push_back(
            std::vector<double>(model.output.row(r).begin(), model.output.row(r).end()));
    }
    nlohmann::json j = {{"version", model.version}, {"dim", model.dim},
                        {"classes", model.classes}, {"vocab", std::move(vocab)},
                        {"input", std::move(input)}, {"output", std::move(output)}};
    std::ofstream outf(path);
    if (!outf) throw DataError("cannot write " + path);
    outf << j.dump(2) << "\n";
}

EmbeddingModel load_embedding(const std::string& path) {
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
    EmbeddingModel model;
    model.version = version;
    model.dim = j.at("dim").get<int>();
    model.classes = j.at("classes").get<std::vector<std::string>>();

    const auto& jvocab = j.at("vocab");
    std::vector<std::string> tokens(jvocab.size());
    for (const auto& [token, idx] : jvocab.items()) {
        const int i = idx.get<int>();
        if (i < 0 || i >= static_cast<int>(tokens.size()) || !tokens[i].empty()) {
            throw DataError(path + ": vocabulary indices are not dense");
        }
        tokens[i] = token;
    }
    if (tokens.empty() || tokens[0] != Vocabulary::kUnknownToken) {
        throw DataError(path + ": vocabulary does not reserve index 0 for the unknown token");
    }
    for (std::size_t i = 1; i < tokens.size(); ++i) model.vocab.add(tokens[i]);

    const auto input = j.at("input").get<std::vector<std::vector<double>>>();
    const auto output = j.at("output").get<std::vector<std::vector<double>>>();
    if (input.size() != tokens.size() || output.size() != static_cast<std::size_t>(model.dim)) {
        throw DataError(path + ": matrix shapes disagree with vocabulary/dim");
    }
    model.input = Matrix(input.size(), model.dim);
    for (std::size_t r = 0; r < input.size(); ++r) {
        if (input[r].size() != static_cast<std::size_t>(model.dim)) {
            throw DataError(path + ": input row " + std::to_string(r) + " has wrong width");
        }
        std::copy(input[r].begin(), input[r].end(), model.input.row(r).begin());
    }
    model.output = Matrix(model.dim, model.classes.size());
    for (std::size_t r = 0; r < output.size(); ++r) {
        if (output[r].size() != model.classes.size()) {
            throw DataError(path + ": output row " + std::to_string(r) + " has wrong width");
        }
        std::copy(output[r].begin(), output[r].end(), model.output.row(r).begin());
    }
    return model;
}

}  // namespace mmdiag
