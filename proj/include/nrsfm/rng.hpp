#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "nrsfm/matrix.hpp"

namespace nrsfm {

// Deterministic random source. mt19937_64 gives a standardized bit stream;
// the uniform/normal mappings are implemented here (not via std distributions,
// whose output is implementation-defined) so that results are reproducible
// byte-for-byte across toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller. Consumes two uniforms per call; no
    // cached spare, so the stream position is a pure function of call count.
    double normal() {
        double u1 = 1.0 - uniform(); // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Uniform integer in [0, n).
    size_t below(size_t n) { return static_cast<size_t>(engine_() % n); }

    Matrix normal_matrix(int rows, int cols) {
        Matrix m(rows, cols);
        for (int i = 0; i < m.size(); ++i) m.data()[i] = normal();
        return m;
    }

    Matrix uniform_matrix(int rows, int cols, double lo, double hi) {
        Matrix m(rows, cols);
        for (int i = 0; i < m.size(); ++i) m.data()[i] = uniform(lo, hi);
        return m;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent substream derived from a base seed and a tag; splitmix64
    // mixing decorrelates nearby tags.
    static Rng from(uint64_t seed, uint64_t tag) {
        return Rng(seed_mix(seed ^ (0x9E3779B97F4A7C15ull * (tag + 1))));
    }

private:
    static uint64_t seed_mix(uint64_t x) {
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }

    uint64_t seed_;
    std::mt19937_64 engine_;
};

} // namespace nrsfm
