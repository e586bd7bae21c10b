#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace demokit {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// Standard (padded) base64.
std::string base64_encode(std::string_view data);

/// 64-bit FNV-1a. Stable across platforms and runs, unlike std::hash.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace demokit
