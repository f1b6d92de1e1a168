#include "phenonet/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "phenonet/errors.hpp"
#include "phenonet/hashutil.hpp"

namespace phenonet {

void SkipGramConfig::validate() const {
    if (window < 1) throw ConfigError("embedding config: window must be >= 1");
    if (negatives < 1) throw ConfigError("embedding config: negatives must be >= 1");
    if (epochs < 1) throw ConfigError("embedding config: epochs must be >= 1");
    if (dim < 1) throw ConfigError("embedding config: dim must be >= 1");
    if (initial_lr <= 0.0) throw ConfigError("embedding config: initial_lr must be > 0");
    if (min_count < 1) throw ConfigError("embedding config: min_count must be >= 1");
    if (mode == EmbeddingMode::subword) {
        if (ngram_min < 1 || ngram_min > ngram_max) {
            throw ConfigError("embedding config: need 1 <= ngram_min <= ngram_max");
        }
        if (buckets < 1) throw ConfigError("embedding config: buckets must be >= 1");
    }
    if (subsample < 0.0) throw ConfigError("embedding config: subsample must be >= 0");
}

std::vector<std::string> subword_ngrams(const std::string& token, std::size_t n_min,
                                        std::size_t n_max) {
    if (n_min < 1 || n_min > n_max) {
        throw ConfigError("subword_ngrams: need 1 <= n_min <= n_max");
    }
    if (token.empty()) return {};
    const std::string wrapped = "<" + token + ">";
    std::vector<std::string> grams;
    for (std::size_t n = n_min; n <= n_max && n <= wrapped.size(); ++n) {
        for (std::size_t i = 0; i + n <= wrapped.size(); ++i) {
            grams.push_back(wrapped.substr(i, n));
        }
    }
    grams.push_back(wrapped);
    std::sort(grams.begin(), grams.end());
    grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
    return grams;
}

std::uint32_t ngram_bucket(const std::string& ngram, std::size_t bucket_count) {
    return static_cast<std::uint32_t>(fnv1a64(ngram) % bucket_count);
}

namespace {

// -log sigmoid(x) = softplus(-x), computed without overflow.
template <typename T>
T neg_log_sigmoid(T x) {
    if (x >= T(0)) return std::log1p(std::exp(-x));
    return -x + std::log1p(std::exp(x));
}

}  // namespace

template <typename T>
T ns_pair_loss_grad(const T* v_center, const T* u_ctx, const std::vector<const T*>& u_negs,
                    std::size_t dim, T* grad_v, T* grad_u_ctx,
                    const std::vector<T*>& grad_u_negs) {
    T dot = T(0);
    for (std::size_t i = 0; i < dim; ++i) dot += u_ctx[i] * v_center[i];
    T loss = neg_log_sigmoid(dot);
    const T g_pos = sigmoid_scalar(dot) - T(1);
    for (std::size_t i = 0; i < dim; ++i) {
        grad_u_ctx[i] += g_pos * v_center[i];
        grad_v[i] += g_pos * u_ctx[i];
    }
    for (std::size_t n = 0; n < u_negs.size(); ++n) {
        const T* u = u_negs[n];
        T ndot = T(0);
        for (std::size_t i = 0; i < dim; ++i) ndot += u[i] * v_center[i];
        loss += neg_log_sigmoid(-ndot);
        const T g_neg = sigmoid_scalar(ndot);
        T* gu = grad_u_negs[n];
        for (std::size_t i = 0; i < dim; ++i) {
            gu[i] += g_neg * v_center[i];
            grad_v[i] += g_neg * u[i];
        }
    }
    return loss;
}

template float ns_pair_loss_grad(const float*, const float*, const std::vector<const float*>&,
                                 std::size_t, float*, float*, const std::vector<float*>&);
template double ns_pair_loss_grad(const double*, const double*, const std::vector<const double*>&,
                                  std::size_t, double*, double*, const std::vector<double*>&);

namespace {

// Cumulative unigram^(3/4) distribution over sampleable ids (>= 2).
class NegativeSampler {
public:
    NegativeSampler(const std::vector<std::size_t>& counts_by_id) {
        ids_.reserve(counts_by_id.size());
        cumulative_.reserve(counts_by_id.size());
        double total = 0.0;
        for (std::size_t id = 2; id < counts_by_id.size(); ++id) {
            if (counts_by_id[id] == 0) continue;
            total += std::pow(static_cast<double>(counts_by_id[id]), 0.75);
            ids_.push_back(static_cast<std::uint32_t>(id));
            cumulative_.push_back(total);
        }
        total_ = total;
    }

    std::size_t support() const { return ids_.size(); }

    std::uint32_t draw(Rng& rng) const {
        const double x = rng.uniform() * total_;
        const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), x);
        const std::size_t idx =
            std::min(static_cast<std::size_t>(it - cumulative_.begin()), ids_.size() - 1);
        return ids_[idx];
    }

private:
    std::vector<std::uint32_t> ids_;
    std::vector<double> cumulative_;
    double total_ = 0.0;
};

struct Trainer {
    const SkipGramConfig& cfg;
    EmbeddingTableF& table;
    TensorF& context;  // output-side matrix, discarded after training
    const std::vector<std::vector<std::uint32_t>>& word_ngram_buckets;
    NegativeSampler sampler;
    Rng neg_rng;
    std::size_t dim;

    std::vector<float> v_buf, grad_v, h_buf;
    std::vector<std::uint32_t> ctx_ids;

    Trainer(const SkipGramConfig& c, EmbeddingTableF& t, TensorF& ctx,
            const std::vector<std::vector<std::uint32_t>>& buckets,
            const std::vector<std::size_t>& counts, Rng rng)
        : cfg(c), table(t), context(ctx), word_ngram_buckets(buckets), sampler(counts),
          neg_rng(rng.child("negatives")), dim(c.dim), v_buf(c.dim), grad_v(c.dim) {}

    // Composed input vector of a word (word row plus n-gram buckets).
    const float* compose(std::uint32_t id) {
        const float* word_row = table.word_vectors.data() + std::size_t(id) * dim;
        if (table.mode == EmbeddingMode::word) return word_row;
        std::copy(word_row, word_row + dim, v_buf.begin());
        for (std::uint32_t b : word_ngram_buckets[id]) {
            const float* brow = table.ngram_buckets.data() + std::size_t(b) * dim;
            for (std::size_t i = 0; i < dim; ++i) v_buf[i] += brow[i];
        }
        return v_buf.data();
    }

    void scatter_input_grad(std::uint32_t id, const float* g, float lr) {
        float* word_row = table.word_vectors.data() + std::size_t(id) * dim;
        for (std::size_t i = 0; i < dim; ++i) word_row[i] -= lr * g[i];
        if (table.mode != EmbeddingMode::subword) return;
        for (std::uint32_t b : word_ngram_buckets[id]) {
            float* brow = table.ngram_buckets.data() + std::size_t(b) * dim;
            for (std::size_t i = 0; i < dim; ++i) brow[i] -= lr * g[i];
        }
    }

    // Mean context vector predicts the center word; every context word
    // receives the full input gradient, as in the reference implementations.
    void train_cbow(const std::vector<std::uint32_t>& sent, std::size_t pos, std::size_t lo,
                    std::size_t hi, float lr) {
        ctx_ids.clear();
        for (std::size_t j = lo; j <= hi; ++j) {
            if (j != pos) ctx_ids.push_back(sent[j]);
        }
        if (ctx_ids.empty()) return;
        h_buf.assign(dim, 0.0f);
        for (std::uint32_t id : ctx_ids) {
            const float* v = compose(id);
            for (std::size_t i = 0; i < dim; ++i) h_buf[i] += v[i];
        }
        const float inv = 1.0f / static_cast<float>(ctx_ids.size());
        for (std::size_t i = 0; i < dim; ++i) h_buf[i] *= inv;

        std::fill(grad_v.begin(), grad_v.end(), 0.0f);
        const std::uint32_t center = sent[pos];
        float* u_pos = context.data() + std::size_t(center) * dim;
        float dot = 0.0f;
        for (std::size_t i = 0; i < dim; ++i) dot += u_pos[i] * h_buf[i];
        const float g_pos = sigmoid_scalar(dot) - 1.0f;
        for (std::size_t i = 0; i < dim; ++i) {
            grad_v[i] += g_pos * u_pos[i];
            u_pos[i] -= lr * g_pos * h_buf[i];
        }
        for (std::size_t n = 0; n < cfg.negatives; ++n) {
            const std::uint32_t neg = sampler.draw(neg_rng);
            if (neg == center) continue;
            float* u_neg = context.data() + std::size_t(neg) * dim;
            float ndot = 0.0f;
            for (std::size_t i = 0; i < dim; ++i) ndot += u_neg[i] * h_buf[i];
            const float g_neg = sigmoid_scalar(ndot);
            for (std::size_t i = 0; i < dim; ++i) {
                grad_v[i] += g_neg * u_neg[i];
                u_neg[i] -= lr * g_neg * h_buf[i];
            }
        }
        for (std::uint32_t id : ctx_ids) scatter_input_grad(id, grad_v.data(), lr);
    }

    // One positive pair plus sampled negatives, SGD update at rate lr.
    void train_pair(std::uint32_t input_id, std::uint32_t output_id, float lr) {
        const float* v = compose(input_id);
        std::fill(grad_v.begin(), grad_v.end(), 0.0f);

        float* u_pos = context.data() + std::size_t(output_id) * dim;
        float dot = 0.0f;
        for (std::size_t i = 0; i < dim; ++i) dot += u_pos[i] * v[i];
        const float g_pos = sigmoid_scalar(dot) - 1.0f;
        for (std::size_t i = 0; i < dim; ++i) {
            grad_v[i] += g_pos * u_pos[i];
            u_pos[i] -= lr * g_pos * v[i];
        }

        for (std::size_t n = 0; n < cfg.negatives; ++n) {
            const std::uint32_t neg = sampler.draw(neg_rng);
            if (neg == output_id) continue;
            float* u_neg = context.data() + std::size_t(neg) * dim;
            float ndot = 0.0f;
            for (std::size_t i = 0; i < dim; ++i) ndot += u_neg[i] * v[i];
            const float g_neg = sigmoid_scalar(ndot);
            for (std::size_t i = 0; i < dim; ++i) {
                grad_v[i] += g_neg * u_neg[i];
                u_neg[i] -= lr * g_neg * v[i];
            }
        }
        scatter_input_grad(input_id, grad_v.data(), lr);
    }
};

}  // namespace

TrainedEmbeddings train_embeddings(const std::vector<std::vector<std::string>>& corpus,
                                   const SkipGramConfig& cfg, Rng rng) {
    cfg.validate();
    TrainedEmbeddings out;
    out.vocab = build_vocab(corpus, cfg.min_count);
    const std::size_t vsize = out.vocab.size();
    const std::size_t sampleable = vsize - 2;
    if (sampleable == 0) {
        throw ConfigError("train_embeddings: corpus is empty after min_count filtering");
    }
    if (sampleable < cfg.negatives + 1) {
        throw ConfigError("train_embeddings: vocabulary of " + std::to_string(sampleable) +
                          " trainable tokens is smaller than negatives+1 = " +
                          std::to_string(cfg.negatives + 1));
    }

    // Encode streams, dropping tokens below min_count (standard practice).
    std::vector<std::vector<std::uint32_t>> streams;
    std::vector<std::size_t> counts(vsize, 0);
    std::size_t total_positions = 0;
    streams.reserve(corpus.size());
    for (const auto& note : corpus) {
        std::vector<std::uint32_t> ids;
        ids.reserve(note.size());
        for (const auto& token : note) {
            auto it = out.vocab.token_to_id.find(token);
            if (it == out.vocab.token_to_id.end() || it->second < 2) continue;
            ids.push_back(it->second);
            ++counts[it->second];
        }
        total_positions += ids.size();
        if (!ids.empty()) streams.push_back(std::move(ids));
    }
    if (total_positions == 0) {
        throw ConfigError("train_embeddings: corpus is empty after min_count filtering");
    }

    const std::size_t dim = cfg.dim;
    out.table.mode = cfg.mode;
    out.table.word_vectors = TensorF({vsize, dim});
    Rng init_rng = rng.child("init");
    const double half = 0.5 / static_cast<double>(dim);
    for (std::size_t id = 2; id < vsize; ++id) {
        float* row = out.table.word_vectors.data() + id * dim;
        for (std::size_t i = 0; i < dim; ++i) {
            row[i] = static_cast<float>(init_rng.uniform(-half, half));
        }
    }

    std::vector<std::vector<std::uint32_t>> word_buckets(vsize);
    if (cfg.mode == EmbeddingMode::subword) {
        out.table.ngram_min = cfg.ngram_min;
        out.table.ngram_max = cfg.ngram_max;
        out.table.bucket_count = cfg.buckets;
        out.table.ngram_buckets = TensorF({cfg.buckets, dim});
        for (std::size_t id = 2; id < vsize; ++id) {
            for (const auto& g : subword_ngrams(out.vocab.id_to_token[id], cfg.ngram_min,
                                                cfg.ngram_max)) {
                word_buckets[id].push_back(ngram_bucket(g, cfg.buckets));
            }
        }
        for (float& x : out.table.ngram_buckets.raw()) {
            x = static_cast<float>(init_rng.uniform(-half, half));
        }
    }

    TensorF context({vsize, dim});  // zero-initialized output vectors
    Trainer trainer(cfg, out.table, context, word_buckets, counts, rng);
    Rng subsample_rng = rng.child("subsample");

    const double total_work =
        static_cast<double>(total_positions) * static_cast<double>(cfg.epochs);
    std::size_t processed = 0;
    std::vector<std::uint32_t> kept;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const auto& stream : streams) {
            kept.clear();
            if (cfg.subsample > 0.0) {
                for (std::uint32_t id : stream) {
                    const double freq = static_cast<double>(counts[id]) /
                                        static_cast<double>(total_positions);
                    const double keep =
                        (std::sqrt(freq / cfg.subsample) + 1.0) * cfg.subsample / freq;
                    if (keep >= 1.0 || subsample_rng.uniform() < keep) kept.push_back(id);
                }
            } else {
                kept.assign(stream.begin(), stream.end());
            }

            for (std::size_t pos = 0; pos < kept.size(); ++pos) {
                const double frac = static_cast<double>(processed) / total_work;
                const float lr = static_cast<float>(
                    std::max(cfg.initial_lr * (1.0 - frac), 1e-4));
                ++processed;

                const std::size_t lo = pos > cfg.window ? pos - cfg.window : 0;
                const std::size_t hi = std::min(kept.size() - 1, pos + cfg.window);
                if (cfg.objective == EmbeddingObjective::skipgram) {
                    for (std::size_t j = lo; j <= hi; ++j) {
                        if (j == pos) continue;
                        trainer.train_pair(kept[pos], kept[j], lr);
                    }
                } else {
                    trainer.train_cbow(kept, pos, lo, hi, lr);
                }
            }
        }
    }
    return out;
}

template <typename T>
std::vector<T> lookup(const EmbeddingTable<T>& table, const std::string& token,
                      const Vocab& vocab) {
    const std::size_t dim = table.dim();
    std::vector<T> out(dim, T(0));
    if (token == Vocab::kPadToken) return out;

    auto it = vocab.token_to_id.find(token);
    const bool in_vocab = it != vocab.token_to_id.end();
    if (in_vocab) {
        const T* row = table.word_vectors.data() + std::size_t(it->second) * dim;
        std::copy(row, row + dim, out.begin());
    } else if (table.mode == EmbeddingMode::word) {
        const T* row = table.word_vectors.data() + std::size_t(Vocab::kUnk) * dim;
        std::copy(row, row + dim, out.begin());
        return out;
    }
    if (table.mode == EmbeddingMode::subword && token != Vocab::kUnkToken) {
        for (const auto& g : subword_ngrams(token, table.ngram_min, table.ngram_max)) {
            const T* row = table.ngram_buckets.data() +
                           std::size_t(ngram_bucket(g, table.bucket_count)) * dim;
            for (std::size_t i = 0; i < dim; ++i) out[i] += row[i];
        }
    }
    return out;
}

template std::vector<float> lookup(const EmbeddingTable<float>&, const std::string&,
                                   const Vocab&);
template std::vector<double> lookup(const EmbeddingTable<double>&, const std::string&,
                                    const Vocab&);

void write_vectors(const EmbeddingTableF& table, const Vocab& vocab,
                   const std::filesystem::path& path) {
    ensure_finite(table.word_vectors, "embedding table");
    std::ofstream outf(path);
    if (!outf) throw ParseError("cannot open vector file for writing: " + path.string());
    const std::size_t v = vocab.size();
    const std::size_t d = table.dim();
    outf << v << ' ' << d << '\n';
    char buf[64];
    for (std::size_t id = 0; id < v; ++id) {
        const auto vec = lookup(table, vocab.id_to_token[id], vocab);
        outf << vocab.id_to_token[id];
        for (std::size_t i = 0; i < d; ++i) {
            std::snprintf(buf, sizeof(buf), " %.9g", static_cast<double>(vec[i]));
            outf << buf;
        }
        outf << '\n';
    }
    if (!outf) throw ParseError("failed while writing vector file: " + path.string());
}

VectorFile read_vectors(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open vector file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path.string() + ":1: empty vector file");
    std::size_t v = 0, d = 0;
    {
        const auto fields = tokenize(line);
        if (fields.size() != 2) {
            throw ParseError(path.string() + ":1: malformed header, expected \"V D\"");
        }
        try {
            v = std::stoull(fields[0]);
            d = std::stoull(fields[1]);
        } catch (const std::exception&) {
            throw ParseError(path.string() + ":1: malformed header, expected \"V D\"");
        }
    }
    VectorFile out;
    out.tokens.reserve(v);
    out.vectors = TensorF({v, d});
    std::size_t row = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (row >= v) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) +
                             ": more rows than the header declares (" + std::to_string(v) + ")");
        }
        const auto fields = tokenize(line);
        if (fields.size() != d + 1) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(d + 1) + " columns, found " +
                             std::to_string(fields.size()));
        }
        out.tokens.push_back(fields[0]);
        float* dst = out.vectors.data() + row * d;
        for (std::size_t i = 0; i < d; ++i) {
            try {
                dst[i] = std::stof(fields[i + 1]);
            } catch (const std::exception&) {
                throw ParseError(path.string() + ":" + std::to_string(lineno) +
                                 ": bad float in column " + std::to_string(i + 2));
            }
        }
        ++row;
    }
    if (row != v) {
        throw ParseError(path.string() + ": header declares " + std::to_string(v) +
                         " rows but file has " + std::to_string(row));
    }
    return out;
}

EmbeddingTableF align_to_vocab(const EmbeddingTableF& table, const Vocab& source,
                               const Vocab& target) {
    EmbeddingTableF out;
    out.mode = EmbeddingMode::word;
    const std::size_t d = table.dim();
    out.word_vectors = TensorF({target.size(), d});
    for (std::size_t id = 1; id < target.size(); ++id) {  // PAD row stays zero
        const auto vec = lookup(table, target.id_to_token[id], source);
        std::copy(vec.begin(), vec.end(), out.word_vectors.data() + id * d);
    }
    return out;
}

EmbeddingTableF align_to_vocab(const VectorFile& file, const Vocab& target) {
    std::unordered_map<std::string, std::size_t> row_of;
    row_of.reserve(file.tokens.size());
    for (std::size_t i = 0; i < file.tokens.size(); ++i) row_of.emplace(file.tokens[i], i);

    EmbeddingTableF out;
    out.mode = EmbeddingMode::word;
    const std::size_t d = file.vectors.ndim() == 2 ? file.vectors.dim(1) : 0;
    out.word_vectors = TensorF({target.size(), d});
    for (std::size_t id = 1; id < target.size(); ++id) {
        auto it = row_of.find(target.id_to_token[id]);
        if (it == row_of.end()) continue;  // unseen tokens keep zero rows
        const float* src = file.vectors.data() + it->second * d;
        std::copy(src, src + d, out.word_vectors.data() + id * d);
    }
    return out;
}

}  // namespace phenonet
