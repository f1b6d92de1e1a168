#include "phenonet/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <utility>

#include "phenonet/errors.hpp"
#include "phenonet/hashutil.hpp"
#include "phenonet/rng.hpp"

namespace phenonet {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string objective_name(EmbeddingObjective o) {
    return o == EmbeddingObjective::skipgram ? "skipgram" : "cbow";
}

EmbeddingObjective objective_from(const std::string& s) {
    if (s == "skipgram") return EmbeddingObjective::skipgram;
    if (s == "cbow") return EmbeddingObjective::cbow;
    throw ParseError("unknown embedding objective '" + s + "'");
}

std::string mode_name(EmbeddingMode m) {
    return m == EmbeddingMode::word ? "word" : "subword";
}

EmbeddingMode mode_from(const std::string& s) {
    if (s == "word") return EmbeddingMode::word;
    if (s == "subword") return EmbeddingMode::subword;
    throw ParseError("unknown embedding mode '" + s + "'");
}

ordered_json corpus_section(const RunConfig& cfg) {
    ordered_json doc;
    doc["path"] = cfg.corpus_path;
    doc["format"] = cfg.corpus_format;
    doc["label"] = cfg.label;
    doc["l_max"] = cfg.l_max;
    return doc;
}

ordered_json cleaning_section(const RunConfig& cfg) {
    ordered_json doc;
    doc["lowercase"] = cfg.lowercase;
    doc["strip_punct_and_numbers"] = cfg.strip_punct_and_numbers;
    doc["remove_stopwords"] = cfg.remove_stopwords;
    doc["lemmatize"] = cfg.lemmatize;
    doc["stopwords_path"] = cfg.stopwords_path;
    doc["lemmas_path"] = cfg.lemmas_path;
    return doc;
}

ordered_json embeddings_section(const RunConfig& cfg) {
    ordered_json doc;
    doc["path"] = cfg.embeddings_path;
    doc["objective"] = objective_name(cfg.embedding.objective);
    doc["mode"] = mode_name(cfg.embedding.mode);
    doc["dim"] = cfg.embedding.dim;
    doc["window"] = cfg.embedding.window;
    doc["negatives"] = cfg.embedding.negatives;
    doc["epochs"] = cfg.embedding.epochs;
    doc["initial_lr"] = cfg.embedding.initial_lr;
    doc["min_count"] = cfg.embedding.min_count;
    doc["ngram_min"] = cfg.embedding.ngram_min;
    doc["ngram_max"] = cfg.embedding.ngram_max;
    doc["buckets"] = cfg.embedding.buckets;
    doc["subsample"] = cfg.embedding.subsample;
    return doc;
}

ordered_json train_section(const RunConfig& cfg) {
    ordered_json doc;
    doc["batch_size"] = cfg.train.batch_size;
    doc["learning_rate"] = cfg.train.learning_rate;
    doc["beta1"] = cfg.train.beta1;
    doc["beta2"] = cfg.train.beta2;
    doc["adam_eps"] = cfg.train.adam_eps;
    doc["patience"] = cfg.train.patience;
    doc["max_epochs"] = cfg.train.max_epochs;
    doc["train_fraction"] = cfg.train.train_fraction;
    doc["val_fraction"] = cfg.train.val_fraction;
    doc["test_fraction"] = cfg.train.test_fraction;
    doc["folds"] = cfg.train.folds;
    doc["threshold"] = cfg.train.threshold;
    return doc;
}

ordered_json run_section(const RunConfig& cfg) {
    ordered_json doc;
    doc["seed"] = cfg.seed;
    doc["repeats"] = cfg.repeats;
    doc["out_dir"] = cfg.out_dir;
    return doc;
}

// Overlay `given` onto the section defaults, rejecting unknown keys.
ordered_json merge_section(const ordered_json& defaults, const ordered_json& given,
                           const std::string& section) {
    if (!given.is_object()) {
        throw ParseError("run config section '" + section + "' must be an object");
    }
    ordered_json out = defaults;
    for (const auto& [key, value] : given.items()) {
        if (!defaults.contains(key)) {
            throw ParseError("unknown key '" + section + "." + key + "' in run config");
        }
        out[key] = value;
    }
    return out;
}

template <typename T>
T get_field(const ordered_json& doc, const std::string& section, const std::string& key) {
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("run config field '" + section + "." + key + "': " + e.what());
    }
}

std::string format_f(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    out << content;
    if (!out) throw ConfigError("failed while writing " + path.string());
}

std::string table_bytes_hash(const TensorF& table) {
    const auto& raw = table.raw();
    const std::string_view bytes(reinterpret_cast<const char*>(raw.data()),
                                 raw.size() * sizeof(float));
    return content_hash_hex(bytes);
}

LabelMatrix batched_predict(Classifier<float>& model, const Dataset& data,
                            std::size_t batch_size, double threshold) {
    LabelMatrix out(data.size(), data.labels.cols);
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t count = std::min(batch_size, data.size() - start);
        const std::vector<EncodedNote> notes(data.notes.begin() + start,
                                             data.notes.begin() + start + count);
        const auto pred = model.predict(notes, threshold);
        for (std::size_t i = 0; i < count; ++i) {
            for (std::size_t c = 0; c < out.cols; ++c) {
                out.at(start + i, c) = pred.labels.at(i, c);
            }
        }
    }
    return out;
}

ordered_json base_metadata(const RunConfig& cfg, const PreparedData& prep,
                           const CleaningConfig& cleaning, std::size_t corpus_records) {
    ordered_json meta;
    meta["config_hash"] = config_hash(cfg);
    meta["architecture"] = to_string(cfg.model.architecture);
    meta["label_names"] = prep.label_names;
    meta["vocab_hash"] = prep.vocab_hash;
    meta["embedding_hash"] = prep.embedding_hash;
    meta["stopword_hash"] = cleaning.stopword_hash();
    meta["lemma_hash"] = cleaning.lemma_hash();
    meta["corpus_records"] = corpus_records;
    meta["l_max"] = prep.l_max;
    meta["threshold"] = cfg.train.threshold;
    return meta;
}

std::string history_log(const FitResult& fit) {
    std::string log = "# epoch\ttrain_loss\tval_loss\telapsed_ms\n";
    for (const auto& rec : fit.history) {
        log += std::to_string(rec.epoch) + '\t' + format_f(rec.train_loss) + '\t' +
               format_f(rec.val_loss) + '\t' + std::to_string(rec.elapsed_ms) + '\n';
    }
    return log;
}

// Set one model/train field from its textual value using the JSON schema to
// pick the right type.
void apply_param(RunConfig& cfg, const std::string& param, const std::string& value) {
    const auto typed = [&](const ordered_json& section) -> ordered_json {
        const auto& slot = section.at(param);
        try {
            if (slot.is_boolean()) return value == "true" || value == "1";
            if (slot.is_number_unsigned()) return std::stoull(value);
            if (slot.is_number_integer()) return std::stoll(value);
            if (slot.is_number_float()) return std::stod(value);
        } catch (const std::exception&) {
            throw ConfigError("grid value '" + value + "' is not valid for parameter '" +
                              param + "'");
        }
        return value;
    };
    ordered_json model_doc = model_spec_to_json(cfg.model);
    if (model_doc.contains(param)) {
        model_doc[param] = typed(model_doc);
        cfg.model = model_spec_from_json(model_doc);
        return;
    }
    ordered_json train_doc = train_section(cfg);
    if (train_doc.contains(param)) {
        train_doc[param] = typed(train_doc);
        RunConfig probe = cfg;
        ordered_json full = run_config_to_json(probe);
        full["train"] = train_doc;
        cfg = run_config_from_json(full);
        return;
    }
    throw ConfigError("unknown grid parameter '" + param + "'");
}

struct ScoredRun {
    FitResult fit;
    MetricsReport report;
};

}  // namespace

CleaningConfig RunConfig::cleaning() const {
    CleaningConfig cc;
    cc.lowercase = lowercase;
    cc.strip_punct_and_numbers = strip_punct_and_numbers;
    cc.remove_stopwords = remove_stopwords;
    cc.lemmatize = lemmatize;
    cc.stopword_list =
        stopwords_path.empty() ? builtin_stopwords() : load_stopword_file(stopwords_path);
    cc.lemma_lexicon = lemmas_path.empty() ? builtin_lemmas() : load_lemma_file(lemmas_path);
    return cc;
}

void RunConfig::validate() const {
    if (corpus_path.empty()) throw ConfigError("corpus_path is required");
    if (corpus_format != "auto") corpus_format_from_string(corpus_format);
    if (repeats < 1) throw ConfigError("repeats must be at least 1");
    train.validate();
    model.validate();
    if (embeddings_path.empty()) embedding.validate();
    CleaningConfig switches;
    switches.lowercase = lowercase;
    switches.strip_punct_and_numbers = strip_punct_and_numbers;
    switches.remove_stopwords = remove_stopwords;
    switches.lemmatize = lemmatize;
    switches.validate();
}

ordered_json run_config_to_json(const RunConfig& cfg) {
    ordered_json doc;
    doc["corpus"] = corpus_section(cfg);
    doc["cleaning"] = cleaning_section(cfg);
    doc["embeddings"] = embeddings_section(cfg);
    doc["model"] = model_spec_to_json(cfg.model);
    doc["train"] = train_section(cfg);
    doc["run"] = run_section(cfg);
    return doc;
}

RunConfig run_config_from_json(const ordered_json& doc) {
    if (!doc.is_object()) throw ParseError("run config must be a JSON object");
    const RunConfig defaults;
    const ordered_json default_doc = run_config_to_json(defaults);
    for (const auto& [key, value] : doc.items()) {
        if (!default_doc.contains(key)) {
            throw ParseError("unknown section '" + key + "' in run config");
        }
    }
    RunConfig cfg;

    const auto corpus = merge_section(default_doc["corpus"],
                                      doc.value("corpus", ordered_json::object()), "corpus");
    cfg.corpus_path = get_field<std::string>(corpus, "corpus", "path");
    cfg.corpus_format = get_field<std::string>(corpus, "corpus", "format");
    cfg.label = get_field<std::string>(corpus, "corpus", "label");
    cfg.l_max = get_field<std::size_t>(corpus, "corpus", "l_max");

    const auto cleaning = merge_section(
        default_doc["cleaning"], doc.value("cleaning", ordered_json::object()), "cleaning");
    cfg.lowercase = get_field<bool>(cleaning, "cleaning", "lowercase");
    cfg.strip_punct_and_numbers =
        get_field<bool>(cleaning, "cleaning", "strip_punct_and_numbers");
    cfg.remove_stopwords = get_field<bool>(cleaning, "cleaning", "remove_stopwords");
    cfg.lemmatize = get_field<bool>(cleaning, "cleaning", "lemmatize");
    cfg.stopwords_path = get_field<std::string>(cleaning, "cleaning", "stopwords_path");
    cfg.lemmas_path = get_field<std::string>(cleaning, "cleaning", "lemmas_path");

    const auto emb = merge_section(default_doc["embeddings"],
                                   doc.value("embeddings", ordered_json::object()),
                                   "embeddings");
    cfg.embeddings_path = get_field<std::string>(emb, "embeddings", "path");
    cfg.embedding.objective =
        objective_from(get_field<std::string>(emb, "embeddings", "objective"));
    cfg.embedding.mode = mode_from(get_field<std::string>(emb, "embeddings", "mode"));
    cfg.embedding.dim = get_field<std::size_t>(emb, "embeddings", "dim");
    cfg.embedding.window = get_field<std::size_t>(emb, "embeddings", "window");
    cfg.embedding.negatives = get_field<std::size_t>(emb, "embeddings", "negatives");
    cfg.embedding.epochs = get_field<std::size_t>(emb, "embeddings", "epochs");
    cfg.embedding.initial_lr = get_field<double>(emb, "embeddings", "initial_lr");
    cfg.embedding.min_count = get_field<std::size_t>(emb, "embeddings", "min_count");
    cfg.embedding.ngram_min = get_field<std::size_t>(emb, "embeddings", "ngram_min");
    cfg.embedding.ngram_max = get_field<std::size_t>(emb, "embeddings", "ngram_max");
    cfg.embedding.buckets = get_field<std::size_t>(emb, "embeddings", "buckets");
    cfg.embedding.subsample = get_field<double>(emb, "embeddings", "subsample");

    const auto model = merge_section(default_doc["model"],
                                     doc.value("model", ordered_json::object()), "model");
    try {
        cfg.model = model_spec_from_json(model);
    } catch (const ParseError& e) {
        throw ParseError(std::string("run config section 'model': ") + e.what());
    }

    const auto train = merge_section(default_doc["train"],
                                     doc.value("train", ordered_json::object()), "train");
    cfg.train.batch_size = get_field<std::size_t>(train, "train", "batch_size");
    cfg.train.learning_rate = get_field<double>(train, "train", "learning_rate");
    cfg.train.beta1 = get_field<double>(train, "train", "beta1");
    cfg.train.beta2 = get_field<double>(train, "train", "beta2");
    cfg.train.adam_eps = get_field<double>(train, "train", "adam_eps");
    cfg.train.patience = get_field<std::size_t>(train, "train", "patience");
    cfg.train.max_epochs = get_field<std::size_t>(train, "train", "max_epochs");
    cfg.train.train_fraction = get_field<double>(train, "train", "train_fraction");
    cfg.train.val_fraction = get_field<double>(train, "train", "val_fraction");
    cfg.train.test_fraction = get_field<double>(train, "train", "test_fraction");
    cfg.train.folds = get_field<std::size_t>(train, "train", "folds");
    cfg.train.threshold = get_field<double>(train, "train", "threshold");

    const auto run = merge_section(default_doc["run"], doc.value("run", ordered_json::object()),
                                   "run");
    cfg.seed = get_field<std::uint64_t>(run, "run", "seed");
    cfg.repeats = get_field<std::size_t>(run, "run", "repeats");
    cfg.out_dir = get_field<std::string>(run, "run", "out_dir");
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open run config");
    ordered_json doc;
    try {
        doc = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    return run_config_from_json(doc);
}

std::string config_hash(const RunConfig& cfg) {
    // identifies the experiment, not its output location
    RunConfig canonical = cfg;
    canonical.out_dir.clear();
    return content_hash_hex(run_config_to_json(canonical).dump());
}

std::filesystem::path resolve_run_dir(const RunConfig& cfg) {
    if (!cfg.out_dir.empty()) return cfg.out_dir;
    const std::time_t now =
        std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);
    return fs::path("runs") / (std::string(stamp) + "-" + config_hash(cfg).substr(0, 8));
}

LabeledCorpus load_corpus(const RunConfig& cfg) {
    const CorpusFormat format = cfg.corpus_format == "auto"
                                    ? guess_corpus_format(cfg.corpus_path)
                                    : corpus_format_from_string(cfg.corpus_format);
    return read_corpus(cfg.corpus_path, format);
}

PreparedData prepare(const RunConfig& cfg, const LabeledCorpus& corpus) {
    corpus.validate();
    if (corpus.size() == 0) throw ValidationError("corpus has no records");
    CleaningConfig cleaning = cfg.cleaning();
    cleaning.validate();

    std::vector<std::vector<std::string>> cleaned(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        cleaned[i] = tokenize(clean(corpus.records[i].text, cleaning));
    }

    PreparedData prep;
    if (cfg.embeddings_path.empty()) {
        cfg.embedding.validate();
        const auto trained =
            train_embeddings(cleaned, cfg.embedding, Rng(cfg.seed).child("embeddings"));
        prep.vocab = trained.vocab;
        prep.table = align_to_vocab(trained.table, trained.vocab, trained.vocab).word_vectors;
        prep.embeddings_trained_inline = true;
    } else {
        const VectorFile file = read_vectors(cfg.embeddings_path);
        Vocab vocab;
        for (const auto& token : file.tokens) {
            if (token == Vocab::kPadToken || token == Vocab::kUnkToken) continue;
            if (vocab.contains(token)) {
                throw ParseError(cfg.embeddings_path + ": duplicate token '" + token + "'");
            }
            vocab.token_to_id.emplace(token,
                                      static_cast<std::uint32_t>(vocab.id_to_token.size()));
            vocab.id_to_token.push_back(token);
        }
        prep.vocab = std::move(vocab);
        prep.table = align_to_vocab(file, prep.vocab).word_vectors;
    }
    prep.vocab_hash = prep.vocab.content_hash();
    prep.embedding_hash = table_bytes_hash(prep.table);

    std::size_t l_max = cfg.l_max;
    if (l_max == 0) {
        for (const auto& toks : cleaned) l_max = std::max(l_max, toks.size());
        l_max = std::max<std::size_t>(l_max, 1);
    }
    prep.l_max = l_max;
    prep.data.notes.reserve(corpus.size());
    for (const auto& toks : cleaned) {
        prep.data.notes.push_back(encode_pad(toks, prep.vocab, l_max));
    }

    if (cfg.label.empty()) {
        prep.data.labels = corpus_labels(corpus);
        prep.label_names = corpus.label_names;
    } else {
        const auto it = std::find(corpus.label_names.begin(), corpus.label_names.end(),
                                  cfg.label);
        if (it == corpus.label_names.end()) {
            std::string names;
            for (const auto& n : corpus.label_names) names += (names.empty() ? "" : ", ") + n;
            throw ConfigError("label '" + cfg.label + "' not found in corpus (have: " + names +
                              ")");
        }
        const std::size_t col =
            static_cast<std::size_t>(it - corpus.label_names.begin());
        LabelMatrix single(corpus.size(), 1);
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            single.at(i, 0) = corpus.records[i].labels[col];
        }
        prep.data.labels = std::move(single);
        prep.label_names = {cfg.label};
    }
    return prep;
}

RunResult run_train(const RunConfig& cfg) {
    cfg.validate();
    const LabeledCorpus corpus = load_corpus(cfg);
    const PreparedData prep = prepare(cfg, corpus);
    ModelSpec spec = cfg.model;
    spec.output_units = prep.label_names.size();
    spec.validate();
    const CleaningConfig cleaning = cfg.cleaning();

    RunResult result;
    result.run_dir = resolve_run_dir(cfg);
    fs::create_directories(result.run_dir);
    write_file(result.run_dir / "config.json", run_config_to_json(cfg).dump(2) + "\n");
    if (prep.embeddings_trained_inline) {
        EmbeddingTableF table;
        table.word_vectors = prep.table;
        write_vectors(table, prep.vocab, result.run_dir / "vectors.txt");
    }

    const SplitIndices split =
        split_indices(prep.data.size(), cfg.train.train_fraction, cfg.train.val_fraction,
                      cfg.train.test_fraction, cfg.seed);
    const Dataset train_set = subset(prep.data, split.train);
    const Dataset val_set = subset(prep.data, split.val);
    const Dataset test_set = subset(prep.data, split.test);

    std::vector<double> micro_vals, macro_vals;
    ordered_json seeds = ordered_json::array();
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
        const std::uint64_t seed_r = cfg.seed + r;
        TrainConfig tc = cfg.train;
        tc.seed = seed_r;
        Rng model_rng = Rng(seed_r).child("model");
        Classifier<float> model(spec, prep.table, model_rng);
        const FitResult fit_result = fit(model, train_set, val_set, tc);

        const LabelMatrix pred =
            batched_predict(model, test_set, tc.batch_size, tc.threshold);
        ordered_json meta = base_metadata(cfg, prep, cleaning, corpus.size());
        meta["seed"] = seed_r;
        meta["repeat"] = r;
        meta["split"] = {{"train", split.train.size()},
                         {"val", split.val.size()},
                         {"test", split.test.size()}};
        meta["best_epoch"] = fit_result.best_epoch;
        meta["best_val_loss"] = fit_result.best_val_loss;
        meta["stopped_early"] = fit_result.stopped_early;
        meta["epochs_run"] = fit_result.history.size();
        MetricsReport report = make_report(pred, test_set.labels, std::move(meta));

        const std::string tag = "_r" + std::to_string(r);
        write_file(result.run_dir / ("report" + tag + ".json"),
                   report_to_json(report).dump(2) + "\n");
        write_file(result.run_dir / ("report" + tag + ".csv"), report_to_csv(report));
        write_file(result.run_dir / ("history" + tag + ".log"), history_log(fit_result));
        CheckpointMeta ckpt;
        ckpt.spec = spec;
        ckpt.vocab_hash = prep.vocab_hash;
        ckpt.embedding_hash = prep.embedding_hash;
        ckpt.l_max = prep.l_max;
        ckpt.vocab_size = prep.vocab.size();
        save_checkpoint((result.run_dir / ("checkpoint" + tag + ".bin")).string(), model,
                        ckpt);

        micro_vals.push_back(report.micro.f1);
        macro_vals.push_back(report.macro.f1);
        seeds.push_back(seed_r);
        result.outcomes.push_back({seed_r, fit_result, std::move(report)});
    }

    result.micro_f1 = mean_std(micro_vals);
    result.macro_f1 = mean_std(macro_vals);
    ordered_json summary;
    summary["repeats"] = cfg.repeats;
    summary["seeds"] = std::move(seeds);
    summary["micro_f1"] = {{"values", micro_vals},
                           {"mean", result.micro_f1.mean},
                           {"std", result.micro_f1.stddev}};
    summary["macro_f1"] = {{"values", macro_vals},
                           {"mean", result.macro_f1.mean},
                           {"std", result.macro_f1.stddev}};
    write_file(result.run_dir / "summary.json", summary.dump(2) + "\n");
    return result;
}

MetricsReport evaluate_checkpoint(const RunConfig& cfg, const std::string& checkpoint_path,
                                  const LabeledCorpus& corpus) {
    if (cfg.embeddings_path.empty()) {
        throw ConfigError("evaluate needs embeddings_path (for example the vectors.txt "
                          "written by train) to reconstruct the vocabulary");
    }
    auto [model, meta] = load_checkpoint<float>(checkpoint_path);
    RunConfig enc_cfg = cfg;
    enc_cfg.l_max = meta.l_max;
    const PreparedData prep = prepare(enc_cfg, corpus);
    if (prep.vocab_hash != meta.vocab_hash) {
        throw ValidationError("checkpoint was trained with vocabulary hash " + meta.vocab_hash +
                              " but the supplied embeddings and cleaning produce " +
                              prep.vocab_hash + "; refusing to evaluate");
    }
    if (prep.embedding_hash != meta.embedding_hash) {
        throw ValidationError("checkpoint was trained with embedding hash " +
                              meta.embedding_hash + " but the supplied embeddings hash to " +
                              prep.embedding_hash + "; refusing to evaluate");
    }
    if (model.spec().output_units != prep.label_names.size()) {
        throw ValidationError("checkpoint predicts " +
                              std::to_string(model.spec().output_units) +
                              " labels but the corpus carries " +
                              std::to_string(prep.label_names.size()) +
                              "; refusing to evaluate");
    }

    const LabelMatrix pred =
        batched_predict(model, prep.data, cfg.train.batch_size, cfg.train.threshold);
    const CleaningConfig cleaning = cfg.cleaning();
    ordered_json report_meta = base_metadata(cfg, prep, cleaning, corpus.size());
    report_meta["checkpoint"] = checkpoint_path;
    report_meta["architecture"] = to_string(model.spec().architecture);
    return make_report(pred, prep.data.labels, std::move(report_meta));
}

std::vector<AblationRow> ablate(const RunConfig& cfg, const std::vector<std::string>& steps) {
    cfg.validate();
    if (steps.empty()) throw ConfigError("ablation needs at least one cleaning variant");
    for (const auto& step : steps) {
        if (step != "P1" && step != "P1+P2" && step != "P1+P2+P3") {
            throw ConfigError("unknown cleaning variant '" + step +
                              "' (expected P1, P1+P2, or P1+P2+P3)");
        }
    }
    const LabeledCorpus corpus = load_corpus(cfg);
    const fs::path dir = resolve_run_dir(cfg);
    fs::create_directories(dir);

    std::vector<AblationRow> rows;
    for (const auto& step : steps) {
        RunConfig variant = cfg;
        variant.strip_punct_and_numbers = true;
        variant.remove_stopwords = step != "P1";
        variant.lemmatize = step == "P1+P2+P3";
        variant.embeddings_path.clear();  // re-train embeddings on this cleaning
        const PreparedData prep = prepare(variant, corpus);
        ModelSpec spec = variant.model;
        spec.output_units = prep.label_names.size();
        spec.validate();

        const SplitIndices split =
            split_indices(prep.data.size(), cfg.train.train_fraction, cfg.train.val_fraction,
                          cfg.train.test_fraction, cfg.seed);
        const Dataset train_set = subset(prep.data, split.train);
        const Dataset val_set = subset(prep.data, split.val);
        const Dataset test_set = subset(prep.data, split.test);

        TrainConfig tc = cfg.train;
        tc.seed = cfg.seed;
        Rng model_rng = Rng(cfg.seed).child("model");
        Classifier<float> model(spec, prep.table, model_rng);
        const FitResult fit_result = fit(model, train_set, val_set, tc);
        const LabelMatrix pred =
            batched_predict(model, test_set, tc.batch_size, tc.threshold);

        const CleaningConfig cleaning = variant.cleaning();
        ordered_json meta = base_metadata(variant, prep, cleaning, corpus.size());
        meta["seed"] = cfg.seed;
        meta["cleaning_variant"] = step;
        meta["best_epoch"] = fit_result.best_epoch;
        const MetricsReport report = make_report(pred, test_set.labels, std::move(meta));
        write_file(dir / ("report_" + step + ".json"), report_to_json(report).dump(2) + "\n");
        rows.push_back({step, report.micro.f1, report.macro.f1});
    }

    std::string tsv = "variant\tmicro_f1\tmacro_f1\n";
    for (const auto& row : rows) {
        tsv += row.variant + '\t' + format_f(row.micro_f1) + '\t' + format_f(row.macro_f1) +
               '\n';
    }
    write_file(dir / "ablation.tsv", tsv);
    return rows;
}

std::vector<CrossvalRow> crossval(const RunConfig& cfg, const std::vector<GridAxis>& grid) {
    cfg.validate();
    if (grid.empty()) throw ConfigError("crossval needs a non-empty grid");
    for (const auto& axis : grid) {
        if (axis.values.empty()) {
            throw ConfigError("grid axis '" + axis.param + "' has no values");
        }
    }

    const LabeledCorpus corpus = load_corpus(cfg);
    const PreparedData prep = prepare(cfg, corpus);
    const fs::path dir = resolve_run_dir(cfg);
    fs::create_directories(dir);

    // cartesian product in axis-major order
    std::vector<std::map<std::string, std::string>> points(1);
    for (const auto& axis : grid) {
        std::vector<std::map<std::string, std::string>> next;
        for (const auto& point : points) {
            for (const auto& value : axis.values) {
                auto extended = point;
                extended[axis.param] = value;
                next.push_back(std::move(extended));
            }
        }
        points = std::move(next);
    }

    std::vector<CrossvalRow> rows;
    for (const auto& point : points) {
        RunConfig point_cfg = cfg;
        for (const auto& [param, value] : point) apply_param(point_cfg, param, value);
        ModelSpec spec = point_cfg.model;
        spec.output_units = prep.label_names.size();
        spec.validate();

        std::size_t fold_index = 0;
        // identical fold assignment for every grid point: seeded by cfg.seed only
        const auto [values, stats] = kfold(
            prep.data.size(), point_cfg.train.folds, cfg.seed,
            [&](const std::vector<std::size_t>& train_idx,
                const std::vector<std::size_t>& holdout_idx) {
                // carve an early-stopping slice off the (already shuffled) fold-train part
                const std::size_t inner_val =
                    std::max<std::size_t>(1, (train_idx.size() * 3 + 10) / 20);
                if (inner_val >= train_idx.size()) {
                    throw ConfigError("fold of " + std::to_string(train_idx.size()) +
                                      " records is too small to carve out an early-stopping "
                                      "slice");
                }
                const std::vector<std::size_t> inner_train_idx(
                    train_idx.begin(), train_idx.end() - static_cast<std::ptrdiff_t>(inner_val));
                const std::vector<std::size_t> inner_val_idx(
                    train_idx.end() - static_cast<std::ptrdiff_t>(inner_val), train_idx.end());

                TrainConfig tc = point_cfg.train;
                tc.seed = cfg.seed + fold_index;
                Rng model_rng = Rng(tc.seed).child("model");
                Classifier<float> model(spec, prep.table, model_rng);
                fit(model, subset(prep.data, inner_train_idx), subset(prep.data, inner_val_idx),
                    tc);
                const Dataset holdout = subset(prep.data, holdout_idx);
                const LabelMatrix pred =
                    batched_predict(model, holdout, tc.batch_size, tc.threshold);
                ++fold_index;
                return micro_macro(count(pred, holdout.labels)).macro.f1;
            });
        rows.push_back({point, values, stats});
    }

    std::string tsv;
    for (const auto& axis : grid) tsv += axis.param + '\t';
    tsv += "mean_macro_f1\tstd_macro_f1\tfold_macro_f1\n";
    for (const auto& row : rows) {
        for (const auto& axis : grid) tsv += row.point.at(axis.param) + '\t';
        tsv += format_f(row.macro_f1.mean) + '\t' + format_f(row.macro_f1.stddev) + '\t';
        for (std::size_t i = 0; i < row.fold_macro_f1.size(); ++i) {
            if (i > 0) tsv += ',';
            tsv += format_f(row.fold_macro_f1[i]);
        }
        tsv += '\n';
    }
    write_file(dir / "crossval.tsv", tsv);
    return rows;
}

}  // namespace phenonet
