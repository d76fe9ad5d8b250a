#pragma once

#include <cstdint>
#include <string_view>

namespace troupe {

// Deterministic random stream. xoshiro256** seeded through splitmix64,
// Gaussian via Box-Muller. std:: distributions are implementation-defined,
// so everything that must reproduce bit-for-bit across platforms goes
// through this type.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    // uniform in [0,1), 53-bit resolution
    double uniform();
    double uniform(double lo, double hi);
    // uniform integer in [0, n)
    int64_t uniform_int(int64_t n);
    // standard normal; Box-Muller with one cached value
    double normal();

    // independent child stream derived from (state of the seed line, tag).
    // children with distinct tags never collide regardless of draw order.
    Rng child(uint64_t tag) const;
    Rng child(std::string_view tag) const;

    uint64_t state0() const { return s_[0]; }

private:
    uint64_t s_[4];
    uint64_t seed_key_;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace troupe
