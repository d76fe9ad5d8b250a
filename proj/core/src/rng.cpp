#include "troupe/rng.hpp"

#include "troupe/common.hpp"

#include <cmath>

namespace troupe {

namespace {

uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

Rng::Rng(uint64_t seed) : seed_key_(seed) {
    uint64_t sm = seed;
    for (auto& s : s_) {
        s = splitmix64(sm);
    }
}

uint64_t Rng::next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

int64_t Rng::uniform_int(int64_t n) {
    require(n > 0, "uniform_int: n must be positive");
    // rejection sampling to avoid modulo bias
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return static_cast<int64_t>(v % un);
}

double Rng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_normal_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
}

Rng Rng::child(uint64_t tag) const {
    uint64_t mix = seed_key_;
    uint64_t a = splitmix64(mix);
    mix ^= tag * 0x9e3779b97f4a7c15ull + 0x165667b19e3779f9ull;
    uint64_t b = splitmix64(mix);
    return Rng(a ^ rotl(b, 23));
}

Rng Rng::child(std::string_view tag) const {
    return child(fnv1a(tag.data(), tag.size()));
}

}  // namespace troupe
