#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "phenonet/metrics.hpp"

namespace phenonet {

// One note: a free-text report with a binary label per phenotype.
struct LabeledRecord {
    std::string id;
    std::string text;
    std::vector<std::uint8_t> labels;
};

struct LabeledCorpus {
    std::vector<LabeledRecord> records;
    std::vector<std::string> label_names;

    std::size_t size() const { return records.size(); }
    std::size_t num_labels() const { return label_names.size(); }

    // Enforces the container invariants: at least one label column, every
    // record's label vector matching it, binary entries, unique ids.
    void validate() const;  // throws ValidationError

    std::vector<std::size_t> positive_counts() const;
};

// Stack every record's labels into an n x C matrix.
LabelMatrix corpus_labels(const LabeledCorpus& corpus);

// Default label names: the ten phenotype names for C == 10, otherwise
// label_1..label_C.
std::vector<std::string> default_label_names(std::size_t c);

enum class CorpusFormat { delimited, json_lines };

std::string to_string(CorpusFormat format);
CorpusFormat corpus_format_from_string(const std::string& name);  // throws ConfigError

// Infer the format from the file extension: .csv -> delimited,
// .jsonl/.ndjson -> json_lines; anything else throws ConfigError.
CorpusFormat guess_corpus_format(const std::string& path);

// Delimited form: header `id,text,<label names...>`, text quoted, labels 0/1.
// JSON-lines form: one object per line with "id", "text", and an ordered
// "labels" object; the first line fixes the label-column order.
// Malformed input is rejected with the offending line number.
LabeledCorpus read_corpus(const std::string& path, CorpusFormat format);
void write_corpus(const std::string& path, const LabeledCorpus& corpus, CorpusFormat format);

// Human-readable ingest summary: record count and per-label positive counts.
std::string corpus_summary(const LabeledCorpus& corpus);

// ---------------------------------------------------------------------------
// Synthetic corpus generation.
//
// Notes are random lowercase-alphabetic background tokens. Each label owns
// two designated two-token trigger phrases drawn from a reserved slice of the
// vocabulary; when trigger_strength > 0 a label is positive exactly when one
// of its phrases occurs in the note. trigger_strength = 0 produces a control
// corpus whose labels are sampled independently of the text.
// ---------------------------------------------------------------------------

struct SynthConfig {
    std::size_t num_records = 1600;
    std::size_t num_labels = 10;
    std::size_t vocab_size = 200;  // background + trigger tokens combined
    double trigger_strength = 1.0;
    std::uint64_t seed = 0;
    std::size_t min_length = 20;
    std::size_t max_length = 60;
    double min_marginal = 0.05;  // target positive rate of the rarest label
    double max_marginal = 0.30;  // ... and of the most common label

    void validate() const;  // throws ConfigError
};

// Phrases per label, so triggers_per_label() * 2 tokens each.
constexpr std::size_t kTriggerPhrasesPerLabel = 2;

// Target positive rate for label c: linear spread across
// [min_marginal, max_marginal] by label index.
double synth_marginal(const SynthConfig& cfg, std::size_t label);

// The designated trigger phrases of one label, a pure function of the label
// index (independent of seed and vocabulary size).
std::vector<std::array<std::string, 2>> trigger_phrases(std::size_t label);

LabeledCorpus synth_corpus(const SynthConfig& cfg);

// Bag-of-trigger-phrases baseline: predicts label c positive when one of its
// designated phrases occurs in the raw text. On generated corpora with
// trigger_strength > 0 this reproduces the labels exactly.
LabelMatrix trigger_scan(const LabeledCorpus& corpus);

// Macro F1 of the strongest text-blind strategy (predicting every label
// positive everywhere); the chance level a model must beat on real corpora
// and must NOT beat by a margin on the trigger_strength = 0 control.
double chance_macro_f1(const LabelMatrix& labels);

}  // namespace phenonet
