#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace phenonet {

// FNV-1a over bytes. Used for content fingerprints, subword bucket hashing
// and named RNG stream derivation. Not cryptographic.
constexpr std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value);

inline std::string content_hash_hex(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

// Fingerprint of a file's raw bytes; throws ParseError if unreadable.
std::string file_hash_hex(const std::filesystem::path& path);

}  // namespace phenonet
