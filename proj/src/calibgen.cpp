#include "q2n/calibgen.hpp"

#include <cmath>

namespace q2n {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

constexpr uint64_t kTagLeftFrame = 1;
constexpr uint64_t kTagRightFrame = 2;
constexpr uint64_t kTagNoise = 3;
} // namespace

double CounterRng::gauss(uint64_t counter) const {
    // 1 - u keeps the log argument in (0, 1].
    double u1 = 1.0 - uniform(2 * counter);
    double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

SpectrumSpec SpectrumSpec::exact(int64_t m, int64_t c, int64_t r, uint64_t seed) {
    SpectrumSpec s;
    s.m = m;
    s.c = c;
    s.kind = SpectrumKind::exact_rank;
    s.rank = r;
    s.seed = seed;
    return s;
}

SpectrumSpec SpectrumSpec::decaying(int64_t m, int64_t c, double rate, uint64_t seed) {
    SpectrumSpec s;
    s.m = m;
    s.c = c;
    s.kind = SpectrumKind::decay;
    s.rate = rate;
    s.seed = seed;
    return s;
}

SpectrumSpec SpectrumSpec::dominant_noise(int64_t m, int64_t c, int64_t k, double noise, uint64_t seed) {
    SpectrumSpec s;
    s.m = m;
    s.c = c;
    s.kind = SpectrumKind::dominant_plus_noise;
    s.dominant = k;
    s.noise_scale = noise;
    s.seed = seed;
    return s;
}

Tensor gen_orthonormal_frame(int64_t rows, int64_t cols, const CounterRng& rng) {
    if (cols > rows) throw argument_error("orthonormal frame needs cols <= rows");
    Tensor f(rows, cols);
    for (int64_t i = 0; i < rows; ++i) {
        for (int64_t j = 0; j < cols; ++j) {
            f.at(i, j) = rng.gauss(static_cast<uint64_t>(i) * cols + j);
        }
    }
    // Two MGS passes keep the frame orthonormal to working precision.
    for (int pass = 0; pass < 2; ++pass) {
        for (int64_t j = 0; j < cols; ++j) {
            for (int64_t p = 0; p < j; ++p) {
                double dot = 0.0;
                for (int64_t i = 0; i < rows; ++i) dot += f.at(i, p) * f.at(i, j);
                for (int64_t i = 0; i < rows; ++i) f.at(i, j) -= dot * f.at(i, p);
            }
            double norm = 0.0;
            for (int64_t i = 0; i < rows; ++i) norm += f.at(i, j) * f.at(i, j);
            norm = std::sqrt(norm);
            if (norm < 1e-12) throw numerical_error("degenerate column while orthonormalizing frame");
            for (int64_t i = 0; i < rows; ++i) f.at(i, j) /= norm;
        }
    }
    return f;
}

namespace {

// X = U * diag(sigma) * V^T from two orthonormal frames.
Tensor from_spectrum(int64_t m, int64_t c, const std::vector<double>& sigma, uint64_t seed) {
    CounterRng rng(seed);
    int64_t r = static_cast<int64_t>(sigma.size());
    Tensor u = gen_orthonormal_frame(m, r, rng.fork(kTagLeftFrame));
    Tensor v = gen_orthonormal_frame(c, r, rng.fork(kTagRightFrame));
    Tensor x(m, c);
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t p = 0; p < r; ++p) {
            double w = sigma[static_cast<std::size_t>(p)] * u.at(i, p);
            if (w == 0.0) continue;
            double* xi = x.row(i);
            for (int64_t j = 0; j < c; ++j) xi[j] += w * v.at(j, p);
        }
    }
    return x;
}

} // namespace

Tensor gen_activations(const SpectrumSpec& spec) {
    if (spec.m < 1 || spec.c < 1) throw argument_error("activations need m >= 1 and c >= 1");
    switch (spec.kind) {
        case SpectrumKind::exact_rank: {
            if (spec.rank < 1 || spec.rank > std::min(spec.m, spec.c)) {
                throw argument_error("exact_rank needs 1 <= r <= min(m, c)");
            }
            std::vector<double> sigma(static_cast<std::size_t>(spec.rank), 1.0);
            return from_spectrum(spec.m, spec.c, sigma, spec.seed);
        }
        case SpectrumKind::decay: {
            if (!(spec.rate > 0.0) || !(spec.rate < 1.0)) {
                throw argument_error("decay rate must lie in (0, 1)");
            }
            int64_t p = std::min(spec.m, spec.c);
            std::vector<double> sigma(static_cast<std::size_t>(p));
            double s = 1.0;
            for (int64_t i = 0; i < p; ++i) {
                sigma[static_cast<std::size_t>(i)] = s;
                s *= spec.rate;
            }
            return from_spectrum(spec.m, spec.c, sigma, spec.seed);
        }
        case SpectrumKind::dominant_plus_noise: {
            if (spec.dominant < 1 || spec.dominant > std::min(spec.m, spec.c)) {
                throw argument_error("dominant count must lie in [1, min(m, c)]");
            }
            if (!(spec.noise_scale >= 0.0)) throw argument_error("noise scale must be >= 0");
            // Measured activation spectra: a few dominant directions holding
            // most of the energy, a heavy-tailed shoulder, and an isotropic
            // floor. Halving dominants keeps sigma_1 above the rest combined;
            // the shoulder starts at 10% of the last dominant and decays as
            // j^-1.5.
            int64_t p = std::min(spec.m, spec.c);
            std::vector<double> sigma(static_cast<std::size_t>(p), 0.0);
            double s = 1.0;
            for (int64_t i = 0; i < spec.dominant; ++i) {
                sigma[static_cast<std::size_t>(i)] = s;
                s *= 0.5;
            }
            double shoulder = 0.1 * sigma[static_cast<std::size_t>(spec.dominant - 1)];
            for (int64_t j = 1; spec.dominant - 1 + j < p; ++j) {
                sigma[static_cast<std::size_t>(spec.dominant - 1 + j)] =
                    shoulder * std::pow(static_cast<double>(j), -1.5);
            }
            Tensor x = from_spectrum(spec.m, spec.c, sigma, spec.seed);
            CounterRng noise = CounterRng(spec.seed).fork(kTagNoise);
            for (int64_t i = 0; i < spec.m; ++i) {
                double* xi = x.row(i);
                for (int64_t j = 0; j < spec.c; ++j) {
                    xi[j] += spec.noise_scale * noise.gauss(static_cast<uint64_t>(i) * spec.c + j);
                }
            }
            return x;
        }
    }
    throw argument_error("unknown spectrum kind");
}

Tensor gen_weights(int64_t n, int64_t m, uint64_t seed, double scale) {
    if (n < 1 || m < 1) throw argument_error("weights need n >= 1 and m >= 1");
    CounterRng rng(seed);
    Tensor w(n, m);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < m; ++j) {
            w.at(i, j) = scale * rng.gauss(static_cast<uint64_t>(i) * m + j);
        }
    }
    return w;
}

} // namespace q2n
