#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace suma {

std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b);
std::uint64_t fnv1a64(std::string_view bytes);

/// Deterministic splitmix64 generator. The full algorithm lives in this
/// project so that identical seeds produce identical streams on every
/// platform and compiler (std::normal_distribution is implementation
/// defined, which would break byte-identical reruns).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform01();

    /// Standard normal via Box-Muller with a cached spare.
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n);

    template <class T>
    void shuffle(std::vector<T>& items) {
        if (items.size() < 2) return;
        for (std::size_t i = items.size() - 1; i > 0; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i + 1));
            using std::swap;
            swap(items[i], items[j]);
        }
    }

    /// Independent substream derived from the original seed; forking with
    /// distinct stream ids never aliases the parent stream.
    Rng fork(std::uint64_t stream) const { return Rng(hash_mix(seed_, stream)); }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace suma
