#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace mmdiag {

// FNV-1a, 64 bit. Used wherever a stable content hash is needed (log
// template ids, stream-derived RNG seeds). std::hash makes no stability
// promise, this does.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline bool contains_digit(std::string_view s) {
    for (char c : s) {
        if (c >= '0' && c <= '9') return true;
    }
    return false;
}

std::string to_hex(std::uint64_t v);

}  // namespace mmdiag
