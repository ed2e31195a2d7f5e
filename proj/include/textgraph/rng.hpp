#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace textgraph {

// Stream identifiers mixed into seeds so that each consumer of randomness
// draws from an independent substream of the single run seed.
enum class Stream : std::uint64_t {
    partition = 1,
    graph = 2,
    refill = 3,
    dropout = 4,
    init = 5,
    synthetic = 6,
    split = 7,
    embedding = 8,
};

std::uint64_t splitmix64(std::uint64_t& state);

/// Folds a list of 64-bit words into one seed with splitmix64 mixing.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> words);

/// FNV-1a over bytes.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Seedable generator: std::mt19937_64 seeded with a splitmix64-mixed key.
/// uniform() and below() are computed by hand so results do not depend on
/// the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed);
    Rng(std::uint64_t seed, Stream stream, std::initializer_list<std::uint64_t> ids = {});

    std::uint64_t next() { return engine_(); }
    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform();
    /// Uniform integer in [0, n); n must be > 0.
    std::uint64_t below(std::uint64_t n);
    double normal();

    template <typename It>
    void shuffle(It first, It last) {
        auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            auto j = below(i);
            std::swap(first[i - 1], first[j]);
        }
    }

    static constexpr const char* kGeneratorName = "mt19937_64+splitmix64";

private:
    std::mt19937_64 engine_;
};

}  // namespace textgraph
