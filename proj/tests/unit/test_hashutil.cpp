#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "phenonet/errors.hpp"
#include "phenonet/hashutil.hpp"

using namespace phenonet;

TEST_CASE("fnv1a64 matches the published reference vectors") {
    // Offset basis and test vectors from the FNV reference distribution.
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
    static_assert(fnv1a64("") == 0xcbf29ce484222325ULL);
}

TEST_CASE("hex64 renders 16 lowercase hex digits") {
    CHECK(hex64(0x0123456789abcdefULL) == "0123456789abcdef");
    CHECK(hex64(0) == "0000000000000000");
    CHECK(hex64(0xffffffffffffffffULL) == "ffffffffffffffff");
}

TEST_CASE("content hashes distinguish content and match file hashes") {
    const std::string a = "alpha beta";
    const std::string b = "alpha betb";
    CHECK(content_hash_hex(a) != content_hash_hex(b));
    CHECK(content_hash_hex(a) == content_hash_hex(a));

    const auto path = std::filesystem::temp_directory_path() / "phenonet_hash_test.txt";
    {
        std::ofstream f(path, std::ios::binary);
        f << a;
    }
    CHECK(file_hash_hex(path) == content_hash_hex(a));
    std::filesystem::remove(path);
    CHECK_THROWS_AS(file_hash_hex(path), ParseError);
}
