#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace lnl {

// Every source of randomness in the project is an explicit, named stream
// derived from a single master seed. Two streams with different names are
// statistically independent; the same (master, name) pair always yields the
// same sequence, on every platform (mt19937_64 is fully specified).
uint64_t derive_seed(uint64_t master, std::string_view stream_name);

class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    static Rng stream(uint64_t master, std::string_view name) {
        return Rng(derive_seed(master, name));
    }

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller. Consumes exactly two draws per call
    // (no cached spare), so the stream position is easy to reason about.
    double normal();

    // Uniform integer in [0, n), n >= 1.
    int uniform_int(int n);

    // Fisher-Yates permutation of 0..n-1.
    std::vector<int> permutation(int n);

private:
    std::mt19937_64 gen_;
};

}  // namespace lnl
