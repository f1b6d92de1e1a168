// phenonet — operator CLI for the phenotype-classification toolkit.
//
// Subcommands: preprocess, train-embeddings, train, evaluate, crossval,
// ablate, synth. Every run-level subcommand accepts --config <file> plus
// flags that mirror the config document's fields; flags win over the file.
// Exit code 0 on success, nonzero with a stage-attributed message otherwise.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "phenonet/corpus.hpp"
#include "phenonet/embeddings.hpp"
#include "phenonet/errors.hpp"
#include "phenonet/metrics.hpp"
#include "phenonet/rng.hpp"
#include "phenonet/runner.hpp"
#include "phenonet/textprep.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace phenonet;

namespace {

// The pipeline stage currently executing, for error attribution.
std::string g_stage = "startup";

const char* error_kind(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return "config error";
    if (dynamic_cast<const ParseError*>(&e)) return "parse error";
    if (dynamic_cast<const ValidationError*>(&e)) return "validation error";
    if (dynamic_cast<const NumericError*>(&e)) return "numeric error";
    if (dynamic_cast<const DimensionError*>(&e)) return "dimension error";
    if (dynamic_cast<const IndexError*>(&e)) return "index error";
    if (dynamic_cast<const IntegrityError*>(&e)) return "integrity error";
    return "error";
}

// ---------------------------------------------------------------------------
// Config assembly: defaults <- config file <- mirror flags <- --set entries.

struct ConfigCli {
    std::string config_path;
    std::vector<std::string> sets;
    ordered_json patch = ordered_json::object();
};

template <typename T>
void mirror(CLI::App* cmd, ConfigCli& cc, const std::string& flag, const char* section,
            const char* key, const std::string& desc) {
    cmd->add_option_function<T>(
        flag, [&cc, section, key](const T& v) { cc.patch[section][key] = v; }, desc);
}

void mirror_onoff(CLI::App* cmd, ConfigCli& cc, const std::string& name, const char* section,
                  const char* key, const std::string& desc) {
    cmd->add_flag_function(
        "--" + name, [&cc, section, key](std::int64_t) { cc.patch[section][key] = true; }, desc);
    cmd->add_flag_function(
        "--no-" + name, [&cc, section, key](std::int64_t) { cc.patch[section][key] = false; },
        "disable --" + name);
}

void add_config_flags(CLI::App* cmd, ConfigCli& cc) {
    cmd->add_option("--config", cc.config_path, "JSON run-config file; flags override its fields")
        ->check(CLI::ExistingFile);
    cmd->add_option("--set", cc.sets,
                    "override any config field as section.key=value (repeatable)");

    mirror<std::string>(cmd, cc, "--corpus", "corpus", "path", "labeled corpus file");
    mirror<std::string>(cmd, cc, "--format", "corpus", "format",
                        "corpus format: auto, delimited, json-lines");
    mirror<std::string>(cmd, cc, "--label", "corpus", "label",
                        "restrict to one phenotype column (binary mode)");
    mirror<std::uint64_t>(cmd, cc, "--l-max", "corpus", "l_max",
                          "sequence length cap; 0 = longest cleaned note");

    mirror_onoff(cmd, cc, "lowercase", "cleaning", "lowercase", "lowercase text (step P1)");
    mirror_onoff(cmd, cc, "strip", "cleaning", "strip_punct_and_numbers",
                 "strip punctuation and numbers (step P1)");
    mirror_onoff(cmd, cc, "stopwords", "cleaning", "remove_stopwords",
                 "remove stopwords (step P2)");
    mirror_onoff(cmd, cc, "lemmatize", "cleaning", "lemmatize", "lemmatize tokens (step P3)");
    mirror<std::string>(cmd, cc, "--stopwords-file", "cleaning", "stopwords_path",
                        "custom stopword list (one token per line)");
    mirror<std::string>(cmd, cc, "--lemmas-file", "cleaning", "lemmas_path",
                        "custom lemma map (token<TAB>lemma per line)");

    mirror<std::string>(cmd, cc, "--embeddings", "embeddings", "path",
                        "pretrained vectors file; empty = train inline");
    mirror<std::string>(cmd, cc, "--objective", "embeddings", "objective",
                        "embedding objective: skipgram or cbow");
    mirror<std::string>(cmd, cc, "--mode", "embeddings", "mode",
                        "embedding mode: word or subword");
    mirror<std::uint64_t>(cmd, cc, "--dim", "embeddings", "dim", "embedding dimension");
    mirror<std::uint64_t>(cmd, cc, "--window", "embeddings", "window", "context window size");
    mirror<std::uint64_t>(cmd, cc, "--negatives", "embeddings", "negatives",
                          "negative samples per positive");
    mirror<std::uint64_t>(cmd, cc, "--embedding-epochs", "embeddings", "epochs",
                          "embedding training epochs");
    mirror<double>(cmd, cc, "--embedding-lr", "embeddings", "initial_lr",
                   "embedding initial learning rate");
    mirror<std::uint64_t>(cmd, cc, "--min-count", "embeddings", "min_count",
                          "minimum token frequency for the embedding vocab");
    mirror<std::uint64_t>(cmd, cc, "--ngram-min", "embeddings", "ngram_min",
                          "smallest character n-gram (subword mode)");
    mirror<std::uint64_t>(cmd, cc, "--ngram-max", "embeddings", "ngram_max",
                          "largest character n-gram (subword mode)");
    mirror<std::uint64_t>(cmd, cc, "--buckets", "embeddings", "buckets",
                          "n-gram hash buckets (subword mode)");
    mirror<double>(cmd, cc, "--subsample", "embeddings", "subsample",
                   "frequent-token subsampling threshold; 0 disables");

    mirror<std::string>(cmd, cc, "--arch", "model", "architecture",
                        "architecture: cnn, lstm, gru, bilstm, bigru, cnn_lstm, "
                        "s_conv_nm, is_conv_nm");
    mirror<std::string>(cmd, cc, "--cell", "model", "cell",
                        "recurrent cell for s/is variants: lstm or gru");
    mirror<std::uint64_t>(cmd, cc, "--hidden-units", "model", "hidden_units",
                          "recurrent state width per direction");
    mirror<std::uint64_t>(cmd, cc, "--filters", "model", "conv_filters",
                          "convolution filter count");
    mirror<std::uint64_t>(cmd, cc, "--filter-width", "model", "filter_width",
                          "convolution filter width");
    mirror<std::uint64_t>(cmd, cc, "--branch-dense", "model", "extra_branch_dense",
                          "is_conv_nm parallel-branch dense width");
    mirror<double>(cmd, cc, "--dropout", "model", "dropout_rate",
                   "is_conv_nm parallel-branch dropout rate");
    mirror_onoff(cmd, cc, "trainable-embeddings", "model", "embeddings_trainable",
                 "fine-tune the embedding table during training");

    mirror<std::uint64_t>(cmd, cc, "--batch-size", "train", "batch_size", "mini-batch size");
    mirror<double>(cmd, cc, "--learning-rate", "train", "learning_rate",
                   "Adam learning rate");
    mirror<double>(cmd, cc, "--beta1", "train", "beta1", "Adam beta1");
    mirror<double>(cmd, cc, "--beta2", "train", "beta2", "Adam beta2");
    mirror<double>(cmd, cc, "--adam-eps", "train", "adam_eps", "Adam epsilon");
    mirror<std::uint64_t>(cmd, cc, "--patience", "train", "patience",
                          "early-stopping patience in epochs");
    mirror<std::uint64_t>(cmd, cc, "--max-epochs", "train", "max_epochs", "epoch cap");
    mirror<double>(cmd, cc, "--train-fraction", "train", "train_fraction", "train split share");
    mirror<double>(cmd, cc, "--val-fraction", "train", "val_fraction", "validation split share");
    mirror<double>(cmd, cc, "--test-fraction", "train", "test_fraction", "test split share");
    mirror<std::uint64_t>(cmd, cc, "--folds", "train", "folds", "cross-validation folds");
    mirror<double>(cmd, cc, "--threshold", "train", "threshold",
                   "decision threshold on sigmoid outputs");

    mirror<std::uint64_t>(cmd, cc, "--seed", "run", "seed", "master RNG seed");
    mirror<std::uint64_t>(cmd, cc, "--repeats", "run", "repeats",
                          "independent training repeats (seeds seed..seed+R-1)");
    mirror<std::string>(cmd, cc, "--out", "run", "out_dir",
                        "output directory; empty = runs/<timestamp>-<confighash>");
}

RunConfig build_config(const ConfigCli& cc) {
    g_stage = "config";
    ordered_json doc = ordered_json::object();
    if (!cc.config_path.empty()) {
        std::ifstream in(cc.config_path);
        if (!in.good()) throw ConfigError("cannot open config file " + cc.config_path);
        try {
            in >> doc;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(cc.config_path + ": " + e.what());
        }
    }
    for (const auto& [section, fields] : cc.patch.items()) {
        for (const auto& [key, value] : fields.items()) doc[section][key] = value;
    }
    for (const std::string& entry : cc.sets) {
        const auto dot = entry.find('.');
        const auto eq = entry.find('=');
        if (dot == std::string::npos || eq == std::string::npos || dot > eq) {
            throw ConfigError("--set expects section.key=value, got '" + entry + "'");
        }
        const std::string section = entry.substr(0, dot);
        const std::string key = entry.substr(dot + 1, eq - dot - 1);
        const std::string raw = entry.substr(eq + 1);
        ordered_json value;
        try {
            value = ordered_json::parse(raw);
            if (!value.is_number() && !value.is_boolean() && !value.is_string()) value = raw;
        } catch (const nlohmann::json::exception&) {
            value = raw;
        }
        doc[section][key] = value;
    }
    auto cfg = run_config_from_json(doc);
    cfg.validate();
    return cfg;
}

// Pin down the run directory before handing off, so reported paths match
// what the pipeline writes even when the name carries a timestamp.
void pin_out_dir(RunConfig& cfg) {
    if (cfg.out_dir.empty()) cfg.out_dir = resolve_run_dir(cfg).string();
}

// ---------------------------------------------------------------------------
// Output helpers.

void print_report(const MetricsReport& report) {
    std::vector<std::string> names;
    if (report.metadata.contains("label_names")) {
        names = report.metadata.at("label_names").get<std::vector<std::string>>();
    }
    while (names.size() < report.per_label.size()) {
        names.push_back("label_" + std::to_string(names.size() + 1));
    }
    std::printf("%-28s %9s %9s %9s\n", "label", "precision", "recall", "f1");
    for (std::size_t i = 0; i < report.per_label.size(); ++i) {
        const auto& p = report.per_label[i];
        std::printf("%-28s %9.4f %9.4f %9.4f\n", names[i].c_str(), p.precision, p.recall, p.f1);
    }
    std::printf("%-28s %9.4f %9.4f %9.4f\n", "micro", report.micro.precision,
                report.micro.recall, report.micro.f1);
    std::printf("%-28s %9.4f %9.4f %9.4f\n", "macro", report.macro.precision,
                report.macro.recall, report.macro.f1);
    std::printf("examples: %llu\n", static_cast<unsigned long long>(report.counts.examples));
}

void write_text(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out.good()) throw ConfigError("cannot open " + path + " for writing");
    out << body;
    if (!out.good()) throw ConfigError("failed writing " + path);
}

CorpusFormat format_for_output(const std::string& requested, const std::string& path) {
    if (!requested.empty()) return corpus_format_from_string(requested);
    const auto ext = fs::path(path).extension().string();
    return (ext == ".jsonl" || ext == ".ndjson") ? CorpusFormat::json_lines
                                                 : CorpusFormat::delimited;
}

std::vector<std::string> split_list(const std::string& csv, char sep) {
    std::vector<std::string> out;
    std::string item;
    for (const char ch : csv) {
        if (ch == sep) {
            out.push_back(item);
            item.clear();
        } else {
            item += ch;
        }
    }
    out.push_back(item);
    return out;
}

std::vector<GridAxis> parse_grid(const std::vector<std::string>& specs) {
    std::vector<GridAxis> grid;
    for (const auto& spec : specs) {
        for (const auto& segment : split_list(spec, ';')) {
            if (segment.empty()) continue;
            const auto eq = segment.find('=');
            if (eq == std::string::npos || eq == 0) {
                throw ConfigError("--grid expects key=v1,v2,..., got '" + segment + "'");
            }
            GridAxis axis;
            axis.param = segment.substr(0, eq);
            axis.values = split_list(segment.substr(eq + 1), ',');
            for (const auto& v : axis.values) {
                if (v.empty()) throw ConfigError("empty value in --grid axis '" + axis.param + "'");
            }
            grid.push_back(std::move(axis));
        }
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Subcommands.

int cmd_synth(const SynthConfig& sc, const std::string& out_path, const std::string& format) {
    g_stage = "synth";
    const auto corpus = synth_corpus(sc);
    g_stage = "write";
    write_corpus(out_path, corpus, format_for_output(format, out_path));
    std::printf("%s", corpus_summary(corpus).c_str());
    std::printf("wrote %s\n", out_path.c_str());
    return 0;
}

int cmd_preprocess(const ConfigCli& cc, const std::string& out_path,
                   const std::string& out_format) {
    const auto cfg = build_config(cc);
    g_stage = "ingest";
    auto corpus = load_corpus(cfg);
    std::printf("%s", corpus_summary(corpus).c_str());

    g_stage = "preprocess";
    const auto cleaning = cfg.cleaning();
    std::size_t total_tokens = 0;
    std::size_t longest = 0;
    std::vector<std::vector<std::string>> cleaned(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        cleaned[i] = tokenize(clean(corpus.records[i].text, cleaning));
        total_tokens += cleaned[i].size();
        longest = std::max(longest, cleaned[i].size());
    }
    const auto vocab = build_vocab(cleaned, 1);
    std::printf("cleaned tokens: %llu (longest note %llu, vocabulary %llu)\n",
                static_cast<unsigned long long>(total_tokens),
                static_cast<unsigned long long>(longest),
                static_cast<unsigned long long>(vocab.size()));

    if (!out_path.empty()) {
        g_stage = "write";
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            std::string joined;
            for (const auto& tok : cleaned[i]) {
                if (!joined.empty()) joined += ' ';
                joined += tok;
            }
            corpus.records[i].text = std::move(joined);
        }
        write_corpus(out_path, corpus, format_for_output(out_format, out_path));
        std::printf("wrote cleaned corpus to %s\n", out_path.c_str());
    }
    return 0;
}

int cmd_train_embeddings(const ConfigCli& cc, const std::string& vectors_out) {
    const auto cfg = build_config(cc);
    g_stage = "ingest";
    const auto corpus = load_corpus(cfg);
    g_stage = "preprocess";
    const auto cleaning = cfg.cleaning();
    std::vector<std::vector<std::string>> cleaned(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        cleaned[i] = tokenize(clean(corpus.records[i].text, cleaning));
    }
    g_stage = "embeddings";
    const auto trained = train_embeddings(cleaned, cfg.embedding, Rng(cfg.seed).child("embeddings"));
    const auto composed = align_to_vocab(trained.table, trained.vocab, trained.vocab);
    g_stage = "write";
    write_vectors(composed, trained.vocab, vectors_out);
    std::printf("trained %llu-dimensional vectors for %llu tokens\nwrote %s\n",
                static_cast<unsigned long long>(cfg.embedding.dim),
                static_cast<unsigned long long>(trained.vocab.size()), vectors_out.c_str());
    return 0;
}

int cmd_train(const ConfigCli& cc) {
    auto cfg = build_config(cc);
    pin_out_dir(cfg);
    g_stage = "train";
    const auto result = run_train(cfg);
    for (const auto& outcome : result.outcomes) {
        std::printf("repeat seed=%llu: epochs=%llu best_epoch=%llu val_loss=%.6f "
                    "micro_f1=%.4f macro_f1=%.4f%s\n",
                    static_cast<unsigned long long>(outcome.seed),
                    static_cast<unsigned long long>(outcome.fit.history.size()),
                    static_cast<unsigned long long>(outcome.fit.best_epoch),
                    outcome.fit.best_val_loss, outcome.report.micro.f1,
                    outcome.report.macro.f1, outcome.fit.stopped_early ? " (early stop)" : "");
    }
    if (result.outcomes.size() > 1) {
        std::printf("micro_f1 %.4f +/- %.4f, macro_f1 %.4f +/- %.4f over %llu repeats\n",
                    result.micro_f1.mean, result.micro_f1.stddev, result.macro_f1.mean,
                    result.macro_f1.stddev,
                    static_cast<unsigned long long>(result.outcomes.size()));
    }
    std::printf("\n");
    print_report(result.outcomes.back().report);
    std::printf("run directory: %s\n", result.run_dir.string().c_str());
    return 0;
}

int cmd_evaluate(const ConfigCli& cc, const std::string& checkpoint,
                 const std::string& report_out) {
    const auto cfg = build_config(cc);
    g_stage = "ingest";
    const auto corpus = load_corpus(cfg);
    g_stage = "evaluate";
    const auto report = evaluate_checkpoint(cfg, checkpoint, corpus);
    print_report(report);
    if (!report_out.empty()) {
        g_stage = "write";
        write_text(report_out, report_to_json(report).dump(2) + "\n");
        std::printf("wrote %s\n", report_out.c_str());
    }
    return 0;
}

int cmd_ablate(const ConfigCli& cc, const std::string& steps_csv) {
    auto cfg = build_config(cc);
    pin_out_dir(cfg);
    std::vector<std::string> steps;
    for (auto& s : split_list(steps_csv, ',')) {
        if (!s.empty()) steps.push_back(s);
    }
    g_stage = "ablate";
    const auto rows = ablate(cfg, steps);
    std::printf("%-12s %9s %9s\n", "variant", "micro_f1", "macro_f1");
    for (const auto& row : rows) {
        std::printf("%-12s %9.4f %9.4f\n", row.variant.c_str(), row.micro_f1, row.macro_f1);
    }
    std::printf("run directory: %s\n", cfg.out_dir.c_str());
    return 0;
}

int cmd_crossval(const ConfigCli& cc, const std::vector<std::string>& grid_specs) {
    auto cfg = build_config(cc);
    pin_out_dir(cfg);
    const auto grid = parse_grid(grid_specs);
    g_stage = "crossval";
    const auto rows = crossval(cfg, grid);
    for (const auto& axis : grid) std::printf("%-16s ", axis.param.c_str());
    std::printf("%18s %12s\n", "mean_macro_f1", "std");
    std::size_t best = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (const auto& axis : grid) std::printf("%-16s ", rows[i].point.at(axis.param).c_str());
        std::printf("%18.4f %12.4f\n", rows[i].macro_f1.mean, rows[i].macro_f1.stddev);
        if (rows[i].macro_f1.mean > rows[best].macro_f1.mean) best = i;
    }
    std::printf("best:");
    for (const auto& axis : grid) {
        std::printf(" %s=%s", axis.param.c_str(), rows[best].point.at(axis.param).c_str());
    }
    std::printf(" (macro_f1 %.4f)\n", rows[best].macro_f1.mean);
    std::printf("run directory: %s\n", cfg.out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"phenonet: neural phenotype classification from clinical notes"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "phenonet 0.1.0");

    int rc = 0;

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic labeled corpus");
    SynthConfig sc;
    std::string synth_out;
    std::string synth_format;
    synth->add_option("--n", sc.num_records, "number of records")->capture_default_str();
    synth->add_option("--labels", sc.num_labels, "number of phenotype labels")
        ->capture_default_str();
    synth->add_option("--vocab-size", sc.vocab_size, "background + trigger vocabulary size")
        ->capture_default_str();
    synth->add_option("--trigger-strength", sc.trigger_strength,
                      "probability a drawn positive plants its trigger; 0 = control corpus")
        ->capture_default_str();
    synth->add_option("--seed", sc.seed, "generation seed")->capture_default_str();
    synth->add_option("--min-length", sc.min_length, "shortest note, in tokens")
        ->capture_default_str();
    synth->add_option("--max-length", sc.max_length, "longest note, in tokens")
        ->capture_default_str();
    synth->add_option("--min-marginal", sc.min_marginal, "smallest label positive rate")
        ->capture_default_str();
    synth->add_option("--max-marginal", sc.max_marginal, "largest label positive rate")
        ->capture_default_str();
    synth->add_option("--out", synth_out, "corpus file to write")->required();
    synth->add_option("--format", synth_format, "delimited or json-lines (default: by extension)");
    synth->callback([&] { rc = cmd_synth(sc, synth_out, synth_format); });

    // preprocess
    auto* preprocess =
        app.add_subcommand("preprocess", "ingest a corpus, print a summary, optionally "
                                         "write the cleaned text");
    ConfigCli pre_cc;
    std::string pre_out;
    std::string pre_format;
    add_config_flags(preprocess, pre_cc);
    preprocess->add_option("--out-corpus", pre_out, "write the cleaned corpus here");
    preprocess->add_option("--out-format", pre_format,
                           "cleaned corpus format (default: by extension)");
    preprocess->callback([&] { rc = cmd_preprocess(pre_cc, pre_out, pre_format); });

    // train-embeddings
    auto* tremb = app.add_subcommand("train-embeddings",
                                     "train word vectors on a cleaned corpus");
    ConfigCli emb_cc;
    std::string vectors_out;
    add_config_flags(tremb, emb_cc);
    tremb->add_option("--vectors-out", vectors_out, "vectors file to write")->required();
    tremb->callback([&] { rc = cmd_train_embeddings(emb_cc, vectors_out); });

    // train
    auto* train = app.add_subcommand("train", "train a classifier and evaluate the test split");
    ConfigCli train_cc;
    add_config_flags(train, train_cc);
    train->callback([&] { rc = cmd_train(train_cc); });

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on a corpus");
    ConfigCli eval_cc;
    std::string checkpoint;
    std::string report_out;
    add_config_flags(evaluate, eval_cc);
    evaluate->add_option("--checkpoint", checkpoint, "checkpoint file from a training run")
        ->required();
    evaluate->add_option("--report-out", report_out, "write the JSON report here");
    evaluate->callback([&] { rc = cmd_evaluate(eval_cc, checkpoint, report_out); });

    // ablate
    auto* ablate_cmd =
        app.add_subcommand("ablate", "compare cleaning variants end to end");
    ConfigCli abl_cc;
    std::string steps_csv = "P1,P1+P2,P1+P2+P3";
    add_config_flags(ablate_cmd, abl_cc);
    ablate_cmd->add_option("--steps", steps_csv, "comma-separated cleaning variants")
        ->capture_default_str();
    ablate_cmd->callback([&] { rc = cmd_ablate(abl_cc, steps_csv); });

    // crossval
    auto* crossval_cmd =
        app.add_subcommand("crossval", "k-fold cross-validate a hyperparameter grid");
    ConfigCli cv_cc;
    std::vector<std::string> grid_specs;
    add_config_flags(crossval_cmd, cv_cc);
    crossval_cmd
        ->add_option("--grid", grid_specs,
                     "axes as key=v1,v2,...; repeat or join with ';' for more axes")
        ->required();
    crossval_cmd->callback([&] { rc = cmd_crossval(cv_cc, grid_specs); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fflush(stdout);
        std::fprintf(stderr, "phenonet: %s: %s: %s\n", g_stage.c_str(), error_kind(e), e.what());
        return 1;
    }
    return rc;
}
