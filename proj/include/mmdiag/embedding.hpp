#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmdiag/events.hpp"
#include "mmdiag/matrix.hpp"
#include "mmdiag/types.hpp"

namespace mmdiag {

// An event sequence reduced to its unigram token strings plus its label.
struct TokenizedSequence {
    std::vector<std::string> tokens;
    std::string label;
};

TokenizedSequence tokenize_sequence(const EventSequence& seq, const DeploymentMap& deployment);
std::vector<TokenizedSequence> tokenize_sequences(std::span<const EventSequence> seqs,
                                                  const DeploymentMap& deployment);

// Separator joining two unigrams into a bigram token.
inline constexpr char kBigramSep = '\x1f';
std::string bigram_token(const std::string& a, const std::string& b);
bool is_bigram_token(const std::string& token);

// Unigrams plus adjacent-event bigrams, indexed densely in first-appearance
// order. Index 0 is the reserved unknown token.
class Vocabulary {
public:
    static constexpr int kUnknown = 0;
    static constexpr const char* kUnknownToken = "<unk>";

    Vocabulary();
    int add(const std::string& token);  // returns existing index if present
    int lookup(const std::string& token) const;  // kUnknown when missing
    int size() const { return static_cast<int>(tokens_.size()); }
    const std::string& token(int idx) const { return tokens_.at(idx); }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::unordered_map<std::string, int> index_;
    std::vector<std::string> tokens_;
};

Vocabulary build_vocabulary(std::span<const TokenizedSequence> sequences, int min_count = 1);

// Shallow linear classifier over bags of token vectors: rows of `input` are
// the token vectors, prediction is softmax(output^T . mean of input rows).
// The trained input rows are the unified event representations.
struct EmbeddingModel {
    int version = 1;
    int dim = 0;
    std::vector<std::string> classes;  // sorted
    Vocabulary vocab;
    Matrix input;   // |V| x dim
    Matrix output;  // dim x |classes|
};

struct EmbedTrainConfig {
    int dim = 100;
    int epochs = 50;
    double lr = 0.1;
    int batch = 32;
    int min_count = 1;
    std::uint64_t seed = 1;
};

// Token ids of one example: unigrams plus adjacent bigrams; an empty
// sequence maps to the unknown token alone.
std::vector<int> example_token_ids(const Vocabulary& vocab, const TokenizedSequence& seq);

// Minimizes the mean negative log-likelihood by mini-batch SGD with linear
// lr decay. Deterministic for a fixed seed. Throws DataError when fewer
// than two classes are present, NumericError when the loss goes non-finite.
EmbeddingModel train_embedding(std::span<const TokenizedSequence> sequences,
                               const EmbedTrainConfig& cfg);

std::span<const double> embed_event(const EmbeddingModel& model, const std::string& token);

std::vector<double> class_probabilities(const EmbeddingModel& model,
                                        const TokenizedSequence& seq);
std::string predict_class(const EmbeddingModel& model, const TokenizedSequence& seq);
double dataset_loss(const EmbeddingModel& model, std::span<const TokenizedSequence> sequences);

// Mean-loss gradients over a dataset, for the finite-difference checks.
void dataset_gradients(const EmbeddingModel& model, std::span<const TokenizedSequence> sequences,
                       Matrix& grad_input, Matrix& grad_output);

// Oversamples every class to max(original count, target_size) by cloning a
// random same-class sequence and swapping one event for its nearest unigram
// neighbour in the given embedding space (ties to the lower vocabulary
// index, self excluded). Originals are always retained.
std::vector<EventSequence> augment(std::span<const EventSequence> sequences,
                                   const DeploymentMap& deployment, const EmbeddingModel& f0,
                                   std::size_t target_size, std::uint64_t seed);

// Phase one trains on the originals, phase two retrains on the augmented
// corpus; the phase-two model is the one kept. With augmentation disabled
// the phase-one model is returned as-is.
EmbeddingModel two_phase_train(std::span<const EventSequence> sequences,
                               const DeploymentMap& deployment, const EmbedTrainConfig& cfg,
                               std::size_t target_size, bool augment_enabled = true);

void save_embedding(const EmbeddingModel& model, const std::string& path);
EmbeddingModel load_embedding(const std::string& path);

}  // namespace mmdiag
