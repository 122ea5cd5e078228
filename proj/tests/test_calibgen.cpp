#include <doctest.h>

#include <cmath>
#include <cstring>

#include "q2n/calibgen.hpp"
#include "q2n/linalg.hpp"

using namespace q2n;

TEST_CASE("counter stream matches the frozen reference values") {
    // Frozen from an independent implementation of the documented
    // splitmix64 + Box-Muller recipe.
    CounterRng r1(1);
    CHECK(r1.bits(0) == 10451216379200822465ull);
    CHECK(r1.uniform(0) == doctest::Approx(0.5665615751722809).epsilon(1e-15));

    CounterRng r0(0);
    CHECK(r0.gauss(0) == doctest::Approx(-1.8839083333524405).epsilon(1e-12));
    CHECK(r0.gauss(1) == doctest::Approx(0.22760793546360525).epsilon(1e-12));
    CHECK(r1.gauss(0) == doctest::Approx(-0.034267321791851144).epsilon(1e-12));
    CHECK(r1.gauss(1) == doctest::Approx(-2.5000674933698677).epsilon(1e-12));
}

TEST_CASE("weight generation is deterministic per seed") {
    Tensor a = gen_weights(5, 7, 123);
    Tensor b = gen_weights(5, 7, 123);
    CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0);
    Tensor c = gen_weights(5, 7, 124);
    CHECK(std::memcmp(a.data.data(), c.data.data(), a.data.size() * sizeof(double)) != 0);
}

TEST_CASE("scale 0 yields the zero matrix") {
    Tensor w = gen_weights(3, 4, 9, 0.0);
    for (double v : w.data) CHECK(v == 0.0);
}

TEST_CASE("64x64 weights have the right sample moments") {
    Tensor w = gen_weights(64, 64, 1, 1.0);
    double mean = 0.0;
    for (double v : w.data) mean += v;
    mean /= static_cast<double>(w.data.size());
    double var = 0.0;
    for (double v : w.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(w.data.size());
    CHECK(std::fabs(mean) < 0.1);
    CHECK(std::sqrt(var) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("exact_rank(2) activations have exactly 2 significant Gram eigenvalues") {
    Tensor x = gen_activations(SpectrumSpec::exact(4, 16, 2, 7));
    EigenBasis eb = svd_oracle(gram(x));
    int significant = 0;
    for (double v : eb.values) {
        if (v > 1e-10) ++significant;
    }
    CHECK(significant == 2);
    // trailing eigenvalues collapse to the decomposition noise floor
    CHECK(eb.values[2] <= 1e-12 * eb.values[0]);
}

TEST_CASE("decay(0.5) Gram eigenvalues fall off by 0.25 per step") {
    Tensor x = gen_activations(SpectrumSpec::decaying(8, 64, 0.5, 11));
    EigenBasis eb = svd_oracle(gram(x));
    for (int i = 0; i + 1 < 8; ++i) {
        double ratio = eb.values[static_cast<std::size_t>(i) + 1] / eb.values[static_cast<std::size_t>(i)];
        CHECK(ratio == doctest::Approx(0.25).epsilon(0.2));
    }
}

TEST_CASE("dominant_plus_noise puts the first eigenvalue above the sum of the rest") {
    Tensor x = gen_activations(SpectrumSpec::dominant_noise(16, 64, 1, 1e-3, 13));
    EigenBasis eb = svd_oracle(gram(x));
    double rest = 0.0;
    for (std::size_t i = 1; i < eb.values.size(); ++i) rest += eb.values[i];
    CHECK(eb.values[0] > rest);
}

TEST_CASE("activation generation is deterministic and validates its spec") {
    Tensor a = gen_activations(SpectrumSpec::dominant_noise(8, 24, 1, 1e-4, 3));
    Tensor b = gen_activations(SpectrumSpec::dominant_noise(8, 24, 1, 1e-4, 3));
    CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0);

    CHECK_THROWS_AS(gen_activations(SpectrumSpec::exact(4, 16, 9, 0)), argument_error);
    CHECK_THROWS_AS(gen_activations(SpectrumSpec::decaying(4, 16, 1.5, 0)), argument_error);
    CHECK_THROWS_AS(gen_weights(0, 3, 0), argument_error);
}

TEST_CASE("orthonormal frames are orthonormal") {
    Tensor f = gen_orthonormal_frame(12, 5, CounterRng(77));
    Tensor ft = transpose(f);
    Tensor g = matmul_nt(ft, ft);
    for (int64_t i = 0; i < 5; ++i) {
        for (int64_t j = 0; j < 5; ++j) {
            CHECK(g.at(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
        }
    }
}
