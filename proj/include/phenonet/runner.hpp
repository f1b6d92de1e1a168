#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "phenonet/corpus.hpp"
#include "phenonet/embeddings.hpp"
#include "phenonet/metrics.hpp"
#include "phenonet/textprep.hpp"
#include "phenonet/train.hpp"
#include "phenonet/zoo.hpp"

namespace phenonet {

// One run's complete recipe: where the data is, how to clean it, which
// embeddings to use, what model to build, and how to optimise it. The whole
// document is echoed into every emitted report so a run can be reproduced
// from its outputs alone.
struct RunConfig {
    // data
    std::string corpus_path;
    std::string corpus_format = "auto";  // auto | delimited | json-lines
    std::string label;                   // single-phenotype mode when non-empty
    std::size_t l_max = 0;               // 0 = longest cleaned note in the corpus

    // cleaning switches (P1 strip punctuation/digits, P2 stopwords, P3 lemmas)
    bool lowercase = true;
    bool strip_punct_and_numbers = true;
    bool remove_stopwords = true;
    bool lemmatize = true;
    std::string stopwords_path;  // "" = built-in list
    std::string lemmas_path;     // "" = built-in lexicon

    // embeddings: load a vector file, or train in-process when path is empty
    std::string embeddings_path;
    SkipGramConfig embedding;

    // model and optimisation
    ModelSpec model;
    TrainConfig train;

    // run control
    std::uint64_t seed = 0;
    std::size_t repeats = 1;
    std::string out_dir;  // "" = runs/<utc-timestamp>-<config-hash>

    CleaningConfig cleaning() const;  // materialises the word lists
    void validate() const;            // throws ConfigError
};

nlohmann::ordered_json run_config_to_json(const RunConfig& cfg);

// Missing keys fall back to defaults; unknown keys are rejected so typos
// cannot silently change a run.
RunConfig run_config_from_json(const nlohmann::ordered_json& doc);
RunConfig load_run_config(const std::string& path);

// Fingerprint of the canonical JSON form; embedded in reports and the
// default run-directory name.
std::string config_hash(const RunConfig& cfg);

std::filesystem::path resolve_run_dir(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Pipeline stages
// ---------------------------------------------------------------------------

struct PreparedData {
    Vocab vocab;
    TensorF table;  // |vocab| x d embedding rows aligned to vocab, PAD zeroed
    Dataset data;   // encoded notes with the active label columns
    std::vector<std::string> label_names;
    std::size_t l_max = 0;
    bool embeddings_trained_inline = false;
    std::string vocab_hash, embedding_hash;
};

LabeledCorpus load_corpus(const RunConfig& cfg);

// clean -> embeddings/vocab -> encode + label selection
PreparedData prepare(const RunConfig& cfg, const LabeledCorpus& corpus);

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct RepeatOutcome {
    std::uint64_t seed = 0;
    FitResult fit;
    MetricsReport report;  // test-split evaluation
};

struct RunResult {
    std::filesystem::path run_dir;
    std::vector<RepeatOutcome> outcomes;
    MeanStd micro_f1, macro_f1;  // across repeats
};

// Full training command: split, fit, evaluate the held-out test split, and
// write config.json, vectors.txt (when trained inline), and per-repeat
// report/history/checkpoint files plus summary.json into the run directory.
RunResult run_train(const RunConfig& cfg);

// Load a checkpoint and score a corpus with it. Refuses when the vocabulary
// or embedding fingerprints disagree with the checkpoint's, or when the label
// count does not match. Writes nothing.
MetricsReport evaluate_checkpoint(const RunConfig& cfg, const std::string& checkpoint_path,
                                  const LabeledCorpus& corpus);

struct AblationRow {
    std::string variant;  // P1 | P1+P2 | P1+P2+P3
    double micro_f1 = 0.0;
    double macro_f1 = 0.0;
};

// Cleaning-step ablation: for each variant, retrain embeddings on the
// re-cleaned corpus, train once, evaluate the test split. Writes
// ablation.tsv and one report per variant into the run directory.
std::vector<AblationRow> ablate(const RunConfig& cfg, const std::vector<std::string>& steps);

struct GridAxis {
    std::string param;  // e.g. filter_width, hidden_units, cell
    std::vector<std::string> values;
};

struct CrossvalRow {
    std::map<std::string, std::string> point;
    std::vector<double> fold_macro_f1;
    MeanStd macro_f1;
};

// k-fold sweep over the cartesian product of the grid axes with a fold
// assignment shared across grid points. Writes crossval.tsv into the run
// directory and returns the table.
std::vector<CrossvalRow> crossval(const RunConfig& cfg, const std::vector<GridAxis>& grid);

}  // namespace phenonet
