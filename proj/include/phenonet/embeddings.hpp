#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "phenonet/rng.hpp"
#include "phenonet/tensor.hpp"
#include "phenonet/textprep.hpp"

namespace phenonet {

enum class EmbeddingMode { word, subword };
enum class EmbeddingObjective { skipgram, cbow };

// Word vectors aligned with a vocabulary. In subword mode the served vector
// for a token is its word row plus the sum of its character n-gram bucket
// rows, which gives out-of-vocabulary tokens a composed vector too. The PAD
// row is all zeros and never trained.
template <typename T>
struct EmbeddingTable {
    Tensor<T> word_vectors;  // |vocab| x d
    EmbeddingMode mode = EmbeddingMode::word;
    Tensor<T> ngram_buckets;  // bucket_count x d, subword mode only
    std::size_t ngram_min = 3;
    std::size_t ngram_max = 6;
    std::size_t bucket_count = 0;

    std::size_t dim() const { return word_vectors.ndim() == 2 ? word_vectors.dim(1) : 0; }
    std::size_t vocab_size() const { return word_vectors.ndim() == 2 ? word_vectors.dim(0) : 0; }
};

using EmbeddingTableF = EmbeddingTable<float>;

struct SkipGramConfig {
    EmbeddingObjective objective = EmbeddingObjective::skipgram;
    EmbeddingMode mode = EmbeddingMode::word;
    std::size_t dim = 300;
    std::size_t window = 5;
    std::size_t negatives = 5;
    std::size_t epochs = 5;
    double initial_lr = 0.025;
    std::size_t min_count = 5;
    std::size_t ngram_min = 3;
    std::size_t ngram_max = 6;
    std::size_t buckets = 2'000'000;
    double subsample = 0.0;  // frequent-word subsampling threshold; 0 disables

    void validate() const;
};

// Character n-grams of the token wrapped in '<' and '>', lengths
// ngram_min..ngram_max, plus the wrapped whole word. Sorted and unique.
std::vector<std::string> subword_ngrams(const std::string& token, std::size_t n_min,
                                        std::size_t n_max);

// Bucket index of one n-gram.
std::uint32_t ngram_bucket(const std::string& ngram, std::size_t bucket_count);

struct TrainedEmbeddings {
    EmbeddingTableF table;
    Vocab vocab;  // training vocabulary the table rows align with
};

// Skip-gram / CBOW with negative sampling over the token corpus. Single
// threaded and fully deterministic for a given rng seed.
TrainedEmbeddings train_embeddings(const std::vector<std::vector<std::string>>& corpus,
                                   const SkipGramConfig& cfg, Rng rng);

// Served vector for a token (word row, UNK row, or subword composition).
template <typename T>
std::vector<T> lookup(const EmbeddingTable<T>& table, const std::string& token,
                      const Vocab& vocab);

/// Text vector format: header "V D", then V lines "token f1 ... fD". Subword
// tables are written as their composed per-token vectors.
void write_vectors(const EmbeddingTableF& table, const Vocab& vocab,
                   const std::filesystem::path& path);

struct VectorFile {
    std::vector<std::string> tokens;
    TensorF vectors;  // V x d
};

VectorFile read_vectors(const std::filesystem::path& path);

/// Word-mode table aligned to `target`: rows are served vectors of the source
// table (so subword composition fills vocabulary gaps), PAD row zeroed.
EmbeddingTableF align_to_vocab(const EmbeddingTableF& table, const Vocab& source,
                               const Vocab& target);
EmbeddingTableF align_to_vocab(const VectorFile& file, const Vocab& target);

// Gradient of the negative-sampling pair loss
//   -log sigmoid(u_ctx . v) - sum_neg log sigmoid(-u_neg . v)
// accumulated into the matching rows; returns the loss. Shared by the
// trainer and by the finite-difference property tests.
template <typename T>
T ns_pair_loss_grad(const T* v_center, const T* u_ctx, const std::vector<const T*>& u_negs,
                    std::size_t dim, T* grad_v, T* grad_u_ctx,
                    const std::vector<T*>& grad_u_negs);

}  // namespace phenonet
