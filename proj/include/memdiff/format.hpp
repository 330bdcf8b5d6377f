#pragma once
#include <charconv>
#include <string>

namespace memdiff {

// Shortest round-trip decimal form; keeps CSV/JSON artifacts byte-stable.
inline std::string fmt_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace memdiff
