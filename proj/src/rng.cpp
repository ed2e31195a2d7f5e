#include "textgraph/rng.hpp"
#include "textgraph/common.hpp"

#include <cmath>
#include <iostream>
#include <numbers>

namespace textgraph {

namespace {
bool g_warnings = true;
}

void set_warnings_enabled(bool enabled) { g_warnings = enabled; }

void warn(const std::string& message) {
    if (g_warnings) std::cerr << "warning: " << message << '\n';
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::initializer_list<std::uint64_t> words) {
    std::uint64_t state = 0x6a09e667f3bcc909ULL;
    std::uint64_t out = 0;
    for (auto w : words) {
        state ^= w;
        out = splitmix64(state);
    }
    return out;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Rng::Rng(std::uint64_t seed) : engine_(mix_seed({seed})) {}

Rng::Rng(std::uint64_t seed, Stream stream, std::initializer_list<std::uint64_t> ids) {
    std::uint64_t s = mix_seed({seed, static_cast<std::uint64_t>(stream)});
    for (auto id : ids) s = mix_seed({s, id});
    engine_.seed(s);
}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace textgraph
