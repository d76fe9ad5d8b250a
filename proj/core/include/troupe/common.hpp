#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace troupe {

// Error taxonomy surfaced by the CLI as exit-code categories.
// invalid arguments use std::invalid_argument directly.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

class format_error : public std::runtime_error {
public:
    explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

class divergence_error : public std::runtime_error {
public:
    explicit divergence_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) {
        throw std::invalid_argument(msg);
    }
}

// FNV-1a, used for dataset/content hashes and weight checksums.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(uint64_t v);

}  // namespace troupe
