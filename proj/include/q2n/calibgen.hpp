#pragma once

#include <cstdint>

#include "q2n/tensor.hpp"

namespace q2n {

// Counter-based stream: element i is the splitmix64 output for state
// seed + (i+1)*golden. Stateless, so any element is addressable directly
// and fixtures are reproducible independent of platform RNGs.
struct CounterRng {
    uint64_t seed = 0;

    explicit CounterRng(uint64_t s) : seed(s) {}

    static uint64_t mix(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    uint64_t bits(uint64_t counter) const {
        return mix(seed + (counter + 1) * 0x9E3779B97F4A7C15ull);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform(uint64_t counter) const {
        return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller on counters (2i, 2i+1).
    double gauss(uint64_t counter) const;

    // Derives an independent stream for a tagged sub-purpose.
    CounterRng fork(uint64_t tag) const { return CounterRng(mix(seed ^ mix(tag))); }
};

enum class SpectrumKind { exact_rank, decay, dominant_plus_noise };

// Recipe for synthetic m x c calibration activations with a controlled
// singular spectrum.
struct SpectrumSpec {
    int64_t m = 0;
    int64_t c = 0;
    SpectrumKind kind = SpectrumKind::exact_rank;
    int64_t rank = 1;          // exact_rank: number of nonzero singular values
    double rate = 0.5;         // decay: sigma_i = rate^i
    int64_t dominant = 1;      // dominant_plus_noise: count of large directions
    double noise_scale = 1e-3; // dominant_plus_noise: iid noise amplitude
    uint64_t seed = 0;

    static SpectrumSpec exact(int64_t m, int64_t c, int64_t r, uint64_t seed);
    static SpectrumSpec decaying(int64_t m, int64_t c, double rate, uint64_t seed);
    static SpectrumSpec dominant_noise(int64_t m, int64_t c, int64_t k, double noise, uint64_t seed);
};

Tensor gen_activations(const SpectrumSpec& spec);

// n x m iid Gaussian entries scaled by `scale`, deterministic per seed.
Tensor gen_weights(int64_t n, int64_t m, uint64_t seed, double scale = 1.0);

// Orthonormal rows x cols frame (cols <= rows) from a Gaussian draw,
// twice-iterated modified Gram-Schmidt. Exposed for test fixtures that
// need controlled spectra.
Tensor gen_orthonormal_frame(int64_t rows, int64_t cols, const CounterRng& rng);

} // namespace q2n
