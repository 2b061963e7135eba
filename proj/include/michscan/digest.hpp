#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace michscan {

/// FNV-1a 64-bit digest, hex-encoded. Used for provenance ids and config
/// digests; not cryptographic.
inline std::string fnv1a_hex(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[std::size_t(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

} // namespace michscan
