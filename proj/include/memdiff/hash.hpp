#pragma once
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace memdiff {

inline constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = kFnvOffset) {
    return fnv1a64(s.data(), s.size(), h);
}

std::string to_hex(std::uint64_t x);

// FNV-1a over the raw bytes of a file. Throws DataError when unreadable.
std::uint64_t hash_file(const std::filesystem::path& p);

} // namespace memdiff
