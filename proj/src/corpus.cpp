#include "phenonet/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "json.hpp"
#include "phenonet/errors.hpp"
#include "phenonet/rng.hpp"

namespace phenonet {

namespace {

std::string alpha_suffix(std::size_t i) {
    std::string s;
    do {
        s += static_cast<char>('a' + i % 26);
        i /= 26;
    } while (i != 0);
    std::reverse(s.begin(), s.end());
    return s;
}

std::string background_token(std::size_t i) { return "tok" + alpha_suffix(i); }
std::string trigger_token(std::size_t i) { return "trig" + alpha_suffix(i); }

std::vector<std::string> whitespace_tokens(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

// phrase "first second" -> owning label, for all labels below num_labels
std::unordered_map<std::string, std::size_t> phrase_index(std::size_t num_labels) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t c = 0; c < num_labels; ++c) {
        for (const auto& phrase : trigger_phrases(c)) {
            index.emplace(phrase[0] + " " + phrase[1], c);
        }
    }
    return index;
}

std::vector<std::uint8_t> scan_tokens(const std::vector<std::string>& toks,
                                      const std::unordered_map<std::string, std::size_t>& index,
                                      std::size_t num_labels) {
    std::vector<std::uint8_t> labels(num_labels, 0);
    for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
        const auto it = index.find(toks[i] + " " + toks[i + 1]);
        if (it != index.end()) labels[it->second] = 1;
    }
    return labels;
}

std::string quote_csv(const std::string& field) {
    std::string out = "\"";
    for (const char ch : field) {
        if (ch == '"') out += '"';  // double embedded quotes
        out += ch;
    }
    out += '"';
    return out;
}

std::string maybe_quote_csv(const std::string& field) {
    if (field.find_first_of(",\"") != std::string::npos) return quote_csv(field);
    return field;
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            if (!cur.empty()) {
                throw ParseError("line " + std::to_string(line_no) +
                                 ": quote in the middle of an unquoted field");
            }
            in_quotes = true;
        } else if (ch == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (in_quotes) {
        throw ParseError("line " + std::to_string(line_no) +
                         ": unterminated quoted field (multi-line fields are not supported in "
                         "the delimited format; use json-lines)");
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::uint8_t parse_binary_label(const std::string& value, const std::string& column,
                                std::size_t line_no) {
    if (value == "0") return 0;
    if (value == "1") return 1;
    throw ParseError("line " + std::to_string(line_no) + ": label '" + column +
                     "' has non-binary value '" + value + "'");
}

LabeledCorpus read_delimited(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    LabeledCorpus corpus;
    std::string line;
    std::size_t line_no = 0;
    std::unordered_set<std::string> seen_ids;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line, line_no);
        if (corpus.label_names.empty() && corpus.records.empty() && line_no == 1) {
            if (fields.size() < 3 || fields[0] != "id" || fields[1] != "text") {
                throw ParseError("line 1: header must be id,text,<label columns...>");
            }
            corpus.label_names.assign(fields.begin() + 2, fields.end());
            continue;
        }
        if (fields.size() != corpus.label_names.size() + 2) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(corpus.label_names.size() + 2) + " fields, got " +
                             std::to_string(fields.size()));
        }
        LabeledRecord rec;
        rec.id = fields[0];
        rec.text = fields[1];
        if (!seen_ids.insert(rec.id).second) {
            throw ParseError("line " + std::to_string(line_no) + ": duplicate id '" + rec.id +
                             "'");
        }
        rec.labels.reserve(corpus.label_names.size());
        for (std::size_t c = 0; c < corpus.label_names.size(); ++c) {
            rec.labels.push_back(
                parse_binary_label(fields[c + 2], corpus.label_names[c], line_no));
        }
        corpus.records.push_back(std::move(rec));
    }
    if (line_no == 0) throw ParseError(path + ": empty file");
    return corpus;
}

LabeledCorpus read_json_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    LabeledCorpus corpus;
    std::string line;
    std::size_t line_no = 0;
    std::unordered_set<std::string> seen_ids;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        nlohmann::ordered_json doc;
        try {
            doc = nlohmann::ordered_json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!doc.is_object() || !doc.contains("id") || !doc.contains("text") ||
            !doc.contains("labels") || !doc["id"].is_string() || !doc["text"].is_string() ||
            !doc["labels"].is_object()) {
            throw ParseError("line " + std::to_string(line_no) +
                             ": record must be an object with string id, string text, and a "
                             "labels object");
        }
        std::vector<std::string> names;
        std::vector<std::uint8_t> values;
        for (const auto& [name, value] : doc["labels"].items()) {
            names.push_back(name);
            if (!value.is_number_integer() ||
                (value.get<int>() != 0 && value.get<int>() != 1)) {
                throw ParseError("line " + std::to_string(line_no) + ": label '" + name +
                                 "' has non-binary value " + value.dump());
            }
            values.push_back(static_cast<std::uint8_t>(value.get<int>()));
        }
        if (names.empty()) {
            throw ParseError("line " + std::to_string(line_no) + ": record has no labels");
        }
        if (corpus.records.empty()) {
            corpus.label_names = names;
        } else if (names != corpus.label_names) {
            throw ParseError("line " + std::to_string(line_no) +
                             ": label columns differ from the first record");
        }
        LabeledRecord rec;
        rec.id = doc["id"].get<std::string>();
        rec.text = doc["text"].get<std::string>();
        rec.labels = std::move(values);
        if (!seen_ids.insert(rec.id).second) {
            throw ParseError("line " + std::to_string(line_no) + ": duplicate id '" + rec.id +
                             "'");
        }
        corpus.records.push_back(std::move(rec));
    }
    if (corpus.records.empty()) throw ParseError(path + ": no records");
    return corpus;
}

void write_delimited(const std::string& path, const LabeledCorpus& corpus) {
    for (const auto& rec : corpus.records) {
        if (rec.text.find('\n') != std::string::npos ||
            rec.text.find('\r') != std::string::npos) {
            throw ValidationError("record '" + rec.id +
                                  "': text contains a line break; the delimited format is "
                                  "single-line, use json-lines");
        }
    }
    std::ofstream out(path);
    if (!out) throw ConfigError(path + ": cannot open file for writing");
    out << "id,text";
    for (const auto& name : corpus.label_names) out << ',' << maybe_quote_csv(name);
    out << '\n';
    for (const auto& rec : corpus.records) {
        out << maybe_quote_csv(rec.id) << ',' << quote_csv(rec.text);
        for (const auto v : rec.labels) out << ',' << static_cast<int>(v);
        out << '\n';
    }
}

void write_json_lines(const std::string& path, const LabeledCorpus& corpus) {
    std::ofstream out(path);
    if (!out) throw ConfigError(path + ": cannot open file for writing");
    for (const auto& rec : corpus.records) {
        nlohmann::ordered_json doc;
        doc["id"] = rec.id;
        doc["text"] = rec.text;
        auto labels = nlohmann::ordered_json::object();
        for (std::size_t c = 0; c < corpus.label_names.size(); ++c) {
            labels[corpus.label_names[c]] = static_cast<int>(rec.labels[c]);
        }
        doc["labels"] = std::move(labels);
        out << doc.dump() << '\n';
    }
}

}  // namespace

void LabeledCorpus::validate() const {
    if (label_names.empty()) throw ValidationError("corpus has no label columns");
    std::unordered_set<std::string> ids;
    for (const auto& rec : records) {
        if (rec.labels.size() != label_names.size()) {
            throw ValidationError("record '" + rec.id + "' has " +
                                  std::to_string(rec.labels.size()) + " labels, expected " +
                                  std::to_string(label_names.size()));
        }
        for (const auto v : rec.labels) {
            if (v > 1) {
                throw ValidationError("record '" + rec.id + "' has a non-binary label value");
            }
        }
        if (!ids.insert(rec.id).second) {
            throw ValidationError("duplicate record id '" + rec.id + "'");
        }
    }
}

std::vector<std::size_t> LabeledCorpus::positive_counts() const {
    std::vector<std::size_t> counts(label_names.size(), 0);
    for (const auto& rec : records) {
        for (std::size_t c = 0; c < counts.size() && c < rec.labels.size(); ++c) {
            counts[c] += rec.labels[c];
        }
    }
    return counts;
}

LabelMatrix corpus_labels(const LabeledCorpus& corpus) {
    LabelMatrix m(corpus.size(), corpus.num_labels());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        for (std::size_t c = 0; c < corpus.num_labels(); ++c) {
            m.at(i, c) = corpus.records[i].labels[c];
        }
    }
    return m;
}

std::vector<std::string> default_label_names(std::size_t c) {
    if (c == 10) {
        return {"advanced_heart_disease", "advanced_lung_disease", "advanced_cancer",
                "chronic_pain",           "substance_abuse",       "obesity",
                "psychiatric_disorders",  "depression",            "chronic_neurologic",
                "alcohol_abuse"};
    }
    std::vector<std::string> names;
    names.reserve(c);
    for (std::size_t i = 1; i <= c; ++i) names.push_back("label_" + std::to_string(i));
    return names;
}

std::string to_string(CorpusFormat format) {
    return format == CorpusFormat::delimited ? "delimited" : "json-lines";
}

CorpusFormat corpus_format_from_string(const std::string& name) {
    if (name == "delimited" || name == "csv") return CorpusFormat::delimited;
    if (name == "json-lines" || name == "jsonl") return CorpusFormat::json_lines;
    throw ConfigError("unknown corpus format '" + name +
                      "' (expected delimited or json-lines)");
}

CorpusFormat guess_corpus_format(const std::string& path) {
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    if (ext == "csv") return CorpusFormat::delimited;
    if (ext == "jsonl" || ext == "ndjson") return CorpusFormat::json_lines;
    throw ConfigError(path + ": cannot infer corpus format from the extension; pass it "
                             "explicitly (delimited or json-lines)");
}

LabeledCorpus read_corpus(const std::string& path, CorpusFormat format) {
    LabeledCorpus corpus = format == CorpusFormat::delimited ? read_delimited(path)
                                                             : read_json_lines(path);
    corpus.validate();
    return corpus;
}

void write_corpus(const std::string& path, const LabeledCorpus& corpus, CorpusFormat format) {
    corpus.validate();
    if (format == CorpusFormat::delimited) {
        write_delimited(path, corpus);
    } else {
        write_json_lines(path, corpus);
    }
}

std::string corpus_summary(const LabeledCorpus& corpus) {
    std::ostringstream out;
    out << corpus.size() << " records, " << corpus.num_labels() << " labels\n";
    const auto counts = corpus.positive_counts();
    for (std::size_t c = 0; c < corpus.num_labels(); ++c) {
        out << "  " << corpus.label_names[c] << ": " << counts[c] << " positive";
        if (corpus.size() > 0) {
            out << " (" << 100.0 * static_cast<double>(counts[c]) /
                               static_cast<double>(corpus.size())
                << "%)";
        }
        out << '\n';
    }
    return out.str();
}

void SynthConfig::validate() const {
    if (num_records < 10) throw ConfigError("synth needs at least 10 records");
    if (num_labels < 1) throw ConfigError("synth needs at least 1 label");
    if (trigger_strength < 0.0 || trigger_strength > 1.0) {
        throw ConfigError("trigger_strength must lie in [0, 1]");
    }
    if (!(min_marginal > 0.0) || !(max_marginal < 1.0) || min_marginal > max_marginal) {
        throw ConfigError("label marginals must satisfy 0 < min <= max < 1");
    }
    if (min_length < 2 * num_labels) {
        throw ConfigError("min_length must be at least 2 * num_labels so every label's "
                          "trigger phrase can fit disjointly");
    }
    if (max_length < min_length) throw ConfigError("max_length must be >= min_length");
    const std::size_t trigger_tokens = 2 * kTriggerPhrasesPerLabel * num_labels;
    if (trigger_tokens + 1 > vocab_size) {
        throw ConfigError("trigger vocabulary (" + std::to_string(trigger_tokens) +
                          " tokens) exceeds vocab_size " + std::to_string(vocab_size) +
                          "; leave room for at least one background token");
    }
}

double synth_marginal(const SynthConfig& cfg, std::size_t label) {
    if (cfg.num_labels == 1) return 0.5 * (cfg.min_marginal + cfg.max_marginal);
    const double t = static_cast<double>(label) / static_cast<double>(cfg.num_labels - 1);
    return cfg.min_marginal + t * (cfg.max_marginal - cfg.min_marginal);
}

std::vector<std::array<std::string, 2>> trigger_phrases(std::size_t label) {
    std::vector<std::array<std::string, 2>> phrases;
    phrases.reserve(kTriggerPhrasesPerLabel);
    for (std::size_t k = 0; k < kTriggerPhrasesPerLabel; ++k) {
        const std::size_t base = 2 * (kTriggerPhrasesPerLabel * label + k);
        phrases.push_back({trigger_token(base), trigger_token(base + 1)});
    }
    return phrases;
}

LabeledCorpus synth_corpus(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t c_total = cfg.num_labels;
    const std::size_t trigger_tokens = 2 * kTriggerPhrasesPerLabel * c_total;
    const std::size_t background = cfg.vocab_size - trigger_tokens;

    std::vector<double> marginals(c_total);
    for (std::size_t c = 0; c < c_total; ++c) marginals[c] = synth_marginal(cfg, c);
    std::vector<std::vector<std::array<std::string, 2>>> phrases(c_total);
    for (std::size_t c = 0; c < c_total; ++c) phrases[c] = trigger_phrases(c);
    const auto index = phrase_index(c_total);

    LabeledCorpus corpus;
    corpus.label_names = default_label_names(c_total);
    corpus.records.reserve(cfg.num_records);

    Rng rng = Rng(cfg.seed).child("synth");
    for (std::size_t i = 0; i < cfg.num_records; ++i) {
        LabeledRecord rec;
        rec.id = "note-" + std::to_string(i + 1);
        const std::size_t len =
            cfg.min_length + rng.below(cfg.max_length - cfg.min_length + 1);
        std::vector<std::string> toks(len);
        for (auto& tok : toks) tok = background_token(rng.below(background));

        if (cfg.trigger_strength == 0.0) {
            rec.labels.resize(c_total, 0);
            for (std::size_t c = 0; c < c_total; ++c) {
                rec.labels[c] = rng.uniform() < marginals[c] ? 1 : 0;
            }
        } else {
            std::vector<std::size_t> planted;
            for (std::size_t c = 0; c < c_total; ++c) {
                if (rng.uniform() < marginals[c] &&
                    (cfg.trigger_strength >= 1.0 || rng.uniform() < cfg.trigger_strength)) {
                    planted.push_back(c);
                }
            }
            // disjoint aligned two-token slots keep every planted phrase intact
            std::vector<std::size_t> slots(len / 2);
            for (std::size_t s = 0; s < slots.size(); ++s) slots[s] = s;
            rng.shuffle(slots);
            for (std::size_t p = 0; p < planted.size(); ++p) {
                const auto& phrase =
                    phrases[planted[p]][rng.below(kTriggerPhrasesPerLabel)];
                toks[2 * slots[p]] = phrase[0];
                toks[2 * slots[p] + 1] = phrase[1];
            }
            rec.labels = scan_tokens(toks, index, c_total);
        }

        std::string text;
        for (std::size_t t = 0; t < toks.size(); ++t) {
            if (t > 0) text += ' ';
            text += toks[t];
        }
        rec.text = std::move(text);
        corpus.records.push_back(std::move(rec));
    }
    return corpus;
}

LabelMatrix trigger_scan(const LabeledCorpus& corpus) {
    const auto index = phrase_index(corpus.num_labels());
    LabelMatrix m(corpus.size(), corpus.num_labels());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto labels =
            scan_tokens(whitespace_tokens(corpus.records[i].text), index, corpus.num_labels());
        for (std::size_t c = 0; c < labels.size(); ++c) m.at(i, c) = labels[c];
    }
    return m;
}

double chance_macro_f1(const LabelMatrix& labels) {
    LabelMatrix all_positive(labels.rows, labels.cols);
    std::fill(all_positive.data.begin(), all_positive.data.end(), std::uint8_t(1));
    return micro_macro(count(all_positive, labels)).macro.f1;
}

}  // namespace phenonet
