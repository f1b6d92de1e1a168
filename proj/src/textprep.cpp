#include "phenonet/textprep.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <sstream>

#include "phenonet/errors.hpp"
#include "phenonet/hashutil.hpp"

namespace phenonet {

extern const char* kBuiltinStopwordText;
extern const char* kBuiltinLemmaText;

namespace {

// ASCII punctuation (the 32-character set) and decimal digits become spaces
// under P1; bytes >= 128 pass through untouched.
constexpr std::array<bool, 128> make_p1_table() {
    std::array<bool, 128> t{};
    constexpr std::string_view punct = R"(!"#$%&'()*+,-./:;<=>?@[\]^_`{|}~)";
    for (char c : punct) t[static_cast<std::size_t>(c)] = true;
    for (char c = '0'; c <= '9'; ++c) t[static_cast<std::size_t>(c)] = true;
    return t;
}

constexpr auto kP1Table = make_p1_table();

bool is_p1_char(unsigned char c) { return c < 128 && kP1Table[c]; }

char lower_ascii(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c + 32) : c; }

// Lowercase + P1 character normalization applied to word-list entries so a
// loaded list always matches the tokens the pipeline produces. Returns the
// normalized tokens (an entry may normalize to zero or several).
std::vector<std::string> normalize_entry(std::string_view entry) {
    std::string s;
    s.reserve(entry.size());
    for (char c : entry) {
        c = lower_ascii(c);
        s.push_back(is_p1_char(static_cast<unsigned char>(c)) ? ' ' : c);
    }
    return tokenize(s);
}

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

std::unordered_set<std::string> parse_stopword_lines(std::istream& in, const std::string& source) {
    std::unordered_set<std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty()) continue;
        if (line.find('\t') != std::string::npos) {
            throw ParseError(source + ":" + std::to_string(lineno) +
                             ": stopword entry must be a single token, found a tab");
        }
        const auto tokens = normalize_entry(line);
        if (tokens.size() == 1) out.insert(tokens[0]);
    }
    return out;
}

std::unordered_map<std::string, std::string> parse_lemma_lines(std::istream& in,
                                                               const std::string& source) {
    std::unordered_map<std::string, std::string> raw;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(line);
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ParseError(source + ":" + std::to_string(lineno) +
                             ": expected \"token<TAB>lemma\"");
        }
        const auto keys = normalize_entry(line.substr(0, tab));
        const auto values = normalize_entry(line.substr(tab + 1));
        if (keys.size() != 1 || values.size() != 1) continue;  // entry mangled by normalization
        if (keys[0] != values[0]) raw[keys[0]] = values[0];
    }

    // Resolve chains (a->b, b->c becomes a->c, b->c) so one lookup is a
    // fixpoint; cycle members all map to the smallest member of the cycle.
    std::unordered_map<std::string, std::string> resolved;
    for (const auto& [key, _] : raw) {
        std::vector<std::string> path{key};
        std::unordered_set<std::string> seen{key};
        std::string cur = key;
        while (true) {
            auto it = raw.find(cur);
            if (it == raw.end()) break;
            cur = it->second;
            if (seen.count(cur)) {
                // Cycle: pick a canonical representative.
                auto cycle_start = std::find(path.begin(), path.end(), cur);
                cur = *std::min_element(cycle_start, path.end());
                break;
            }
            seen.insert(cur);
            path.push_back(cur);
        }
        if (cur != key) resolved[key] = cur;
    }
    return resolved;
}

}  // namespace

void CleaningConfig::validate() const {
    if (lemmatize && !remove_stopwords) {
        throw ConfigError("cleaning steps are cumulative: lemmatize (P3) requires stopword "
                          "removal (P2)");
    }
    if (remove_stopwords && !strip_punct_and_numbers) {
        throw ConfigError("cleaning steps are cumulative: stopword removal (P2) requires "
                          "punctuation/number stripping (P1)");
    }
}

std::string CleaningConfig::stopword_hash() const { return hash_stopwords(stopword_list); }
std::string CleaningConfig::lemma_hash() const { return hash_lemmas(lemma_lexicon); }

std::string clean(std::string_view text, const CleaningConfig& cfg) {
    cfg.validate();
    std::string chars;
    chars.reserve(text.size());
    for (char c : text) {
        if (cfg.lowercase) c = lower_ascii(c);
        if (cfg.strip_punct_and_numbers && is_p1_char(static_cast<unsigned char>(c))) c = ' ';
        chars.push_back(c);
    }

    std::string out;
    out.reserve(chars.size());
    std::size_t i = 0;
    const std::size_t n = chars.size();
    while (i < n) {
        while (i < n && is_space(static_cast<unsigned char>(chars[i]))) ++i;
        if (i >= n) break;
        std::size_t j = i;
        while (j < n && !is_space(static_cast<unsigned char>(chars[j]))) ++j;
        std::string token = chars.substr(i, j - i);
        i = j;
        if (cfg.remove_stopwords && cfg.stopword_list.count(token)) continue;
        if (cfg.lemmatize) {
            auto it = cfg.lemma_lexicon.find(token);
            if (it != cfg.lemma_lexicon.end()) token = it->second;
            // A lemma form that is itself a stopword must not reappear, or
            // cleaning would no longer be idempotent.
            if (cfg.remove_stopwords && cfg.stopword_list.count(token)) continue;
        }
        if (!out.empty()) out.push_back(' ');
        out += token;
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        while (i < n && is_space(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= n) break;
        std::size_t j = i;
        while (j < n && !is_space(static_cast<unsigned char>(text[j]))) ++j;
        tokens.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return tokens;
}

Vocab::Vocab() {
    id_to_token = {kPadToken, kUnkToken};
    token_to_id = {{kPadToken, kPad}, {kUnkToken, kUnk}};
}

std::uint32_t Vocab::id_or_unk(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnk : it->second;
}

std::string Vocab::content_hash() const {
    std::string joined;
    for (const auto& t : id_to_token) {
        joined += t;
        joined.push_back('\n');
    }
    return content_hash_hex(joined);
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_count) {
    if (min_count < 1) throw ConfigError("build_vocab: min_count must be >= 1");
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& note : corpus) {
        for (const auto& token : note) ++counts[token];
    }

    std::vector<std::pair<std::string, std::size_t>> kept;
    kept.reserve(counts.size());
    for (auto& [token, count] : counts) {
        if (count < min_count) continue;
        if (token == Vocab::kPadToken || token == Vocab::kUnkToken) continue;
        kept.emplace_back(token, count);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocab vocab;
    vocab.id_to_token.reserve(kept.size() + 2);
    for (auto& [token, count] : kept) {
        vocab.token_to_id.emplace(token, static_cast<std::uint32_t>(vocab.id_to_token.size()));
        vocab.id_to_token.push_back(token);
    }
    return vocab;
}

EncodedNote encode_pad(const std::vector<std::string>& tokens, const Vocab& vocab,
                       std::size_t l_max) {
    if (l_max < 1) throw ConfigError("encode_pad: l_max must be >= 1");
    EncodedNote note;
    note.original_length = std::min(tokens.size(), l_max);
    note.ids.assign(l_max, Vocab::kPad);
    for (std::size_t i = 0; i < note.original_length; ++i) {
        note.ids[i] = vocab.id_or_unk(tokens[i]);
    }
    return note;
}

std::vector<std::string> decode(const EncodedNote& note, const Vocab& vocab) {
    std::vector<std::string> tokens;
    tokens.reserve(note.original_length);
    for (std::size_t i = 0; i < note.original_length && i < note.ids.size(); ++i) {
        const std::uint32_t id = note.ids[i];
        if (id >= vocab.id_to_token.size()) {
            throw IndexError("decode: id " + std::to_string(id) + " outside vocabulary of size " +
                             std::to_string(vocab.id_to_token.size()));
        }
        tokens.push_back(vocab.id_to_token[id]);
    }
    return tokens;
}

std::unordered_set<std::string> load_stopword_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open stopword file: " + path.string());
    return parse_stopword_lines(in, path.string());
}

std::unordered_map<std::string, std::string> load_lemma_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open lemma file: " + path.string());
    return parse_lemma_lines(in, path.string());
}

const std::unordered_set<std::string>& builtin_stopwords() {
    static const std::unordered_set<std::string> words = [] {
        std::istringstream in(kBuiltinStopwordText);
        return parse_stopword_lines(in, "<builtin stopwords>");
    }();
    return words;
}

std::unordered_map<std::string, std::string> builtin_lemmas() {
    std::istringstream in(kBuiltinLemmaText);
    return parse_lemma_lines(in, "<builtin lemmas>");
}

std::string hash_stopwords(const std::unordered_set<std::string>& stopwords) {
    std::vector<std::string> sorted(stopwords.begin(), stopwords.end());
    std::sort(sorted.begin(), sorted.end());
    std::string joined;
    for (const auto& w : sorted) {
        joined += w;
        joined.push_back('\n');
    }
    return content_hash_hex(joined);
}

std::string hash_lemmas(const std::unordered_map<std::string, std::string>& lemmas) {
    std::vector<std::string> lines;
    lines.reserve(lemmas.size());
    for (const auto& [k, v] : lemmas) lines.push_back(k + "\t" + v);
    std::sort(lines.begin(), lines.end());
    std::string joined;
    for (const auto& l : lines) {
        joined += l;
        joined.push_back('\n');
    }
    return content_hash_hex(joined);
}

}  // namespace phenonet
