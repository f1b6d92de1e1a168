// Python bindings for the phenonet core. Run-level operations speak JSON
// strings (the same documents the CLI and run directories use); the thin
// python package wraps them with dict-based helpers.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>
#include <vector>

#include "phenonet/corpus.hpp"
#include "phenonet/embeddings.hpp"
#include "phenonet/errors.hpp"
#include "phenonet/metrics.hpp"
#include "phenonet/rng.hpp"
#include "phenonet/runner.hpp"
#include "phenonet/textprep.hpp"

namespace py = pybind11;
using nlohmann::ordered_json;
using namespace phenonet;

namespace {

RunConfig config_from_string(const std::string& config_json) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(config_json);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("config document: ") + e.what());
    }
    auto cfg = run_config_from_json(doc);
    cfg.validate();
    return cfg;
}

CleaningConfig cleaning_from_flags(bool lowercase, bool strip, bool stopwords, bool lemmatize) {
    RunConfig cfg;
    cfg.lowercase = lowercase;
    cfg.strip_punct_and_numbers = strip;
    cfg.remove_stopwords = stopwords;
    cfg.lemmatize = lemmatize;
    return cfg.cleaning();
}

std::vector<std::vector<int>> matrix_to_lists(const LabelMatrix& m) {
    std::vector<std::vector<int>> out(m.rows, std::vector<int>(m.cols, 0));
    for (std::size_t r = 0; r < m.rows; ++r) {
        for (std::size_t c = 0; c < m.cols; ++c) out[r][c] = m.at(r, c);
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "phenonet core: clinical-note phenotype classification toolkit";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<IntegrityError>(m, "IntegrityError", PyExc_RuntimeError);

    // ---------------------------------------------------------------- corpus
    py::class_<LabeledRecord>(m, "LabeledRecord")
        .def(py::init<>())
        .def_readwrite("id", &LabeledRecord::id)
        .def_readwrite("text", &LabeledRecord::text)
        .def_readwrite("labels", &LabeledRecord::labels)
        .def("__repr__", [](const LabeledRecord& r) {
            return "<LabeledRecord id='" + r.id + "'>";
        });

    py::class_<LabeledCorpus>(m, "LabeledCorpus")
        .def(py::init<>())
        .def_readwrite("records", &LabeledCorpus::records)
        .def_readwrite("label_names", &LabeledCorpus::label_names)
        .def("__len__", &LabeledCorpus::size)
        .def("num_labels", &LabeledCorpus::num_labels)
        .def("validate", &LabeledCorpus::validate)
        .def("summary", [](const LabeledCorpus& c) { return corpus_summary(c); });

    m.def(
        "read_corpus",
        [](const std::string& path, const std::string& format) {
            return read_corpus(path, format == "auto" ? guess_corpus_format(path)
                                                      : corpus_format_from_string(format));
        },
        py::arg("path"), py::arg("format") = "auto");
    m.def(
        "write_corpus",
        [](const std::string& path, const LabeledCorpus& corpus, const std::string& format) {
            write_corpus(path, corpus,
                         format == "auto" ? guess_corpus_format(path)
                                          : corpus_format_from_string(format));
        },
        py::arg("path"), py::arg("corpus"), py::arg("format") = "auto");

    m.def(
        "synth_corpus",
        [](std::size_t n, std::size_t labels, std::size_t vocab_size, double trigger_strength,
           std::uint64_t seed, std::size_t min_length, std::size_t max_length,
           double min_marginal, double max_marginal) {
            SynthConfig sc;
            sc.num_records = n;
            sc.num_labels = labels;
            sc.vocab_size = vocab_size;
            sc.trigger_strength = trigger_strength;
            sc.seed = seed;
            sc.min_length = min_length;
            sc.max_length = max_length;
            sc.min_marginal = min_marginal;
            sc.max_marginal = max_marginal;
            return synth_corpus(sc);
        },
        py::arg("n") = 1600, py::arg("labels") = 10, py::arg("vocab_size") = 200,
        py::arg("trigger_strength") = 1.0, py::arg("seed") = 0, py::arg("min_length") = 20,
        py::arg("max_length") = 60, py::arg("min_marginal") = 0.05,
        py::arg("max_marginal") = 0.30);

    m.def("trigger_scan",
          [](const LabeledCorpus& corpus) { return matrix_to_lists(trigger_scan(corpus)); });
    m.def("chance_macro_f1",
          [](const LabeledCorpus& corpus) { return chance_macro_f1(corpus_labels(corpus)); });

    // -------------------------------------------------------------- textprep
    m.def(
        "clean_text",
        [](const std::string& text, bool lowercase, bool strip, bool stopwords, bool lemmatize) {
            return clean(text, cleaning_from_flags(lowercase, strip, stopwords, lemmatize));
        },
        py::arg("text"), py::arg("lowercase") = true, py::arg("strip") = true,
        py::arg("stopwords") = true, py::arg("lemmatize") = true);
    m.def("tokenize", [](const std::string& text) { return tokenize(text); });

    // ---------------------------------------------------------------- runner
    m.def("default_config",
          [] { return run_config_to_json(RunConfig{}).dump(2); });
    m.def("config_hash",
          [](const std::string& config_json) { return config_hash(config_from_string(config_json)); });

    m.def(
        "run_train",
        [](const std::string& config_json) {
            const auto cfg = config_from_string(config_json);
            const auto result = run_train(cfg);
            ordered_json doc;
            doc["run_dir"] = result.run_dir.string();
            doc["micro_f1"] = {{"mean", result.micro_f1.mean}, {"std", result.micro_f1.stddev}};
            doc["macro_f1"] = {{"mean", result.macro_f1.mean}, {"std", result.macro_f1.stddev}};
            doc["reports"] = ordered_json::array();
            for (const auto& outcome : result.outcomes) {
                doc["reports"].push_back(report_to_json(outcome.report));
            }
            return doc.dump();
        },
        py::arg("config_json"), py::call_guard<py::gil_scoped_release>());

    m.def(
        "evaluate",
        [](const std::string& config_json, const std::string& checkpoint) {
            const auto cfg = config_from_string(config_json);
            const auto corpus = load_corpus(cfg);
            return report_to_json(evaluate_checkpoint(cfg, checkpoint, corpus)).dump();
        },
        py::arg("config_json"), py::arg("checkpoint"),
        py::call_guard<py::gil_scoped_release>());

    m.def(
        "ablate",
        [](const std::string& config_json, const std::vector<std::string>& steps) {
            const auto rows = ablate(config_from_string(config_json), steps);
            ordered_json doc = ordered_json::array();
            for (const auto& row : rows) {
                doc.push_back({{"variant", row.variant},
                               {"micro_f1", row.micro_f1},
                               {"macro_f1", row.macro_f1}});
            }
            return doc.dump();
        },
        py::arg("config_json"), py::arg("steps"), py::call_guard<py::gil_scoped_release>());

    m.def(
        "crossval",
        [](const std::string& config_json,
           const std::vector<std::pair<std::string, std::vector<std::string>>>& grid) {
            std::vector<GridAxis> axes;
            for (const auto& [param, values] : grid) axes.push_back({param, values});
            const auto rows = crossval(config_from_string(config_json), axes);
            ordered_json doc = ordered_json::array();
            for (const auto& row : rows) {
                ordered_json entry;
                entry["point"] = row.point;
                entry["mean_macro_f1"] = row.macro_f1.mean;
                entry["std_macro_f1"] = row.macro_f1.stddev;
                entry["fold_macro_f1"] = row.fold_macro_f1;
                doc.push_back(entry);
            }
            return doc.dump();
        },
        py::arg("config_json"), py::arg("grid"), py::call_guard<py::gil_scoped_release>());

    m.def(
        "train_embeddings_to_file",
        [](const std::string& config_json, const std::string& vectors_out) {
            const auto cfg = config_from_string(config_json);
            const auto corpus = load_corpus(cfg);
            const auto cleaning = cfg.cleaning();
            std::vector<std::vector<std::string>> cleaned(corpus.size());
            for (std::size_t i = 0; i < corpus.size(); ++i) {
                cleaned[i] = tokenize(clean(corpus.records[i].text, cleaning));
            }
            const auto trained =
                train_embeddings(cleaned, cfg.embedding, Rng(cfg.seed).child("embeddings"));
            const auto composed = align_to_vocab(trained.table, trained.vocab, trained.vocab);
            write_vectors(composed, trained.vocab, vectors_out);
            return trained.vocab.size();
        },
        py::arg("config_json"), py::arg("vectors_out"),
        py::call_guard<py::gil_scoped_release>());
}
