#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "hemopinn/rng.hpp"

using namespace hemopinn;

TEST_CASE("counter rng is deterministic and stream-separated") {
    CHECK(rng::uniform01(1, 2, 3) == rng::uniform01(1, 2, 3));
    CHECK(rng::uniform01(1, 2, 3) != rng::uniform01(1, 2, 4));
    CHECK(rng::uniform01(1, 2, 3) != rng::uniform01(1, 3, 3));
    CHECK(rng::uniform01(2, 2, 3) != rng::uniform01(1, 2, 3));
}

TEST_CASE("uniform01 stays in [0,1) and is roughly uniform") {
    const int n = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng::uniform01(42, 7, i);
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
        sum2 += u * u;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(std::abs(mean - 0.5) < 0.005);
    CHECK(std::abs(var - 1.0 / 12.0) < 0.005);
}

TEST_CASE("normal draws have unit moments") {
    const int n = 200000;
    double s1 = 0.0, s2 = 0.0, s4 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng::normal(9, 1, i);
        s1 += z;
        s2 += z * z;
        s4 += z * z * z * z;
    }
    CHECK(std::abs(s1 / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
    CHECK(std::abs(s4 / n - 3.0) < 0.15); // normal kurtosis
}

TEST_CASE("shuffle is a permutation and seed-stable") {
    std::vector<int> v(100);
    for (int i = 0; i < 100; ++i) v[i] = i;
    rng::Stream s(5, rng::kStreamShuffle);
    rng::shuffle(v, s);
    auto v2 = v;
    std::sort(v2.begin(), v2.end());
    for (int i = 0; i < 100; ++i) CHECK(v2[i] == i);

    std::vector<int> w(100);
    for (int i = 0; i < 100; ++i) w[i] = i;
    rng::Stream s2(5, rng::kStreamShuffle);
    rng::shuffle(w, s2);
    CHECK(v == w);
}
