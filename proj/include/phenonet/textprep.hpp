#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace phenonet {

// Cleaning steps are cumulative: P1 strips punctuation and digits, P2 drops
// stopwords from P1 output, P3 lemmatizes what survives P2. Lowercasing is a
// separate switch applied before everything else.
struct CleaningConfig {
    bool lowercase = true;
    bool strip_punct_and_numbers = false;  // P1
    bool remove_stopwords = false;         // P2
    bool lemmatize = false;                // P3
    std::unordered_set<std::string> stopword_list;
    std::unordered_map<std::string, std::string> lemma_lexicon;

    // Throws ConfigError unless P3 -> P2 -> P1 dependencies hold.
    void validate() const;

    // Fingerprints of the active word lists, recorded in run reports.
    std::string stopword_hash() const;
    std::string lemma_hash() const;
};

std::string clean(std::string_view text, const CleaningConfig& cfg);

// Split on runs of whitespace; never returns empty tokens.
std::vector<std::string> tokenize(std::string_view text);

struct Vocab {
    static constexpr std::uint32_t kPad = 0;
    static constexpr std::uint32_t kUnk = 1;
    static constexpr const char* kPadToken = "<pad>";
    static constexpr const char* kUnkToken = "<unk>";

    std::unordered_map<std::string, std::uint32_t> token_to_id;
    std::vector<std::string> id_to_token;  // dense ids 0..size()-1

    Vocab();

    std::size_t size() const { return id_to_token.size(); }
    bool contains(const std::string& token) const { return token_to_id.count(token) != 0; }
    std::uint32_t id_or_unk(const std::string& token) const;

    std::string content_hash() const;
};

// Tokens with frequency >= min_count get ids from 2 upward in descending
// frequency order, ties broken lexicographically. Tokens that collide with
// the reserved <pad>/<unk> strings are never assigned ids of their own.
Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t min_count);

struct EncodedNote {
    std::vector<std::uint32_t> ids;  // exactly l_max entries, post-padded
    std::size_t original_length = 0;
};

// Maps tokens to ids (UNK for out-of-vocabulary), truncates to l_max keeping
// the head, post-pads with PAD.
EncodedNote encode_pad(const std::vector<std::string>& tokens, const Vocab& vocab,
                       std::size_t l_max);

// Inverse of encode_pad over the non-PAD prefix.
std::vector<std::string> decode(const EncodedNote& note, const Vocab& vocab);

// One entry per line: "token" for stopwords, "token<TAB>lemma" for lemmas.
// Entries are normalized (lowercased, punctuation/digits stripped) at load;
// lemma chains are resolved so a single lookup is idempotent.
std::unordered_set<std::string> load_stopword_file(const std::filesystem::path& path);
std::unordered_map<std::string, std::string> load_lemma_file(const std::filesystem::path& path);

const std::unordered_set<std::string>& builtin_stopwords();
std::unordered_map<std::string, std::string> builtin_lemmas();

std::string hash_stopwords(const std::unordered_set<std::string>& stopwords);
std::string hash_lemmas(const std::unordered_map<std::string, std::string>& lemmas);

}  // namespace phenonet
