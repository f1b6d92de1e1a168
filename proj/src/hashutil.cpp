#include "phenonet/hashutil.hpp"

#include <fstream>
#include <sstream>

#include "phenonet/errors.hpp"

namespace phenonet {

std::string hex64(std::uint64_t value) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xf];
        value >>= 4;
    }
    return out;
}

std::string file_hash_hex(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot read file for hashing: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return content_hash_hex(buf.str());
}

}  // namespace phenonet
