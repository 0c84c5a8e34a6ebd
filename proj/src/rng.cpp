#include "lnl/rng.hpp"

#include <cmath>
#include <numbers>

namespace lnl {

namespace {

uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

uint64_t derive_seed(uint64_t master, std::string_view stream_name) {
    uint64_t state = master ^ fnv1a(stream_name);
    uint64_t s = splitmix64(state);
    return splitmix64(state) ^ s;
}

double Rng::normal() {
    // u1 in (0, 1] keeps the log finite.
    double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::uniform_int(int n) {
    return static_cast<int>(gen_() % static_cast<uint64_t>(n));
}

std::vector<int> Rng::permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n - 1; i > 0; --i) {
        int j = uniform_int(i + 1);
        std::swap(p[i], p[j]);
    }
    return p;
}

}  // namespace lnl
