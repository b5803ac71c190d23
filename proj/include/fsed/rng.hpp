#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fsed {

/// Deterministic random generator with named sub-streams.
///
/// Every command derives all of its randomness from one user seed. Child
/// generators are keyed by purpose ("init", "episodes", "split", ...) so that
/// adding a new consumer never shifts the draws of an existing one. Draw
/// primitives are implemented explicitly rather than via <random>
/// distributions, which keeps the streams identical across standard library
/// implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : base_seed_(seed), engine_(seed) {}

    /// Independent generator derived from the base seed and a purpose name.
    /// Children with the same name are identical; draws from the parent do
    /// not affect them.
    Rng child(std::string_view name) const {
        return Rng(mix(base_seed_, fnv1a(name)));
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::size_t uniform_int(std::size_t n) {
        return static_cast<std::size_t>(engine_() % static_cast<std::uint64_t>(n));
    }

    /// Fisher-Yates shuffle.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_int(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    std::uint64_t base_seed() const { return base_seed_; }

private:
    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    // splitmix64 finalizer over the combined words.
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t z = a + 0x9e3779b97f4a7c15ULL + (b << 1 | b >> 63);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t base_seed_;
    std::mt19937_64 engine_;
};

}  // namespace fsed
