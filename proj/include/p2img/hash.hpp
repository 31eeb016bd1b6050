#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace p2img {

constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr uint64_t fnv1a64(std::string_view data, uint64_t h = kFnvOffset) {
    for (unsigned char c : data) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

// Finalizer from the splitmix64 generator; used to derive independent seeds.
constexpr uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr uint64_t mix64(uint64_t a, uint64_t b) {
    return splitmix64(splitmix64(a) ^ b);
}

// Uniform double in [-1, 1) from the top 53 bits.
constexpr double unit_pm1(uint64_t u) {
    return static_cast<double>(u >> 11) * (2.0 / 9007199254740992.0) - 1.0;
}

std::string hex64(uint64_t v);

// Deterministic RNG with a fully pinned draw procedure. mt19937_64 output is
// specified by the standard, and bounded draws use plain modulo so that the
// sampled-index streams are reproducible across platforms and toolchains.
class SeededRng {
public:
    explicit SeededRng(uint64_t seed) : eng_(seed) {}
    uint64_t next() { return eng_(); }
    uint64_t bounded(uint64_t n) { return n == 0 ? 0 : next() % n; }
    double uniform_pm1() { return unit_pm1(next()); }

private:
    std::mt19937_64 eng_;
};

} // namespace p2img
