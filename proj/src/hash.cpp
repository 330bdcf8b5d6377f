#include "memdiff/hash.hpp"

#include <fstream>
#include <vector>

#include "memdiff/errors.hpp"

namespace memdiff {

std::string to_hex(std::uint64_t x) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[x & 0xf];
        x >>= 4;
    }
    return s;
}

std::uint64_t hash_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw DataError("cannot open file for hashing: " + p.string());
    std::uint64_t h = kFnvOffset;
    std::vector<char> buf(1 << 16);
    while (f) {
        f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h = fnv1a64(buf.data(), static_cast<std::size_t>(f.gcount()), h);
    }
    return h;
}

} // namespace memdiff
