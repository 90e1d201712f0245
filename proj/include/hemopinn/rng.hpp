#pragma once

#include <cmath>
#include <cstdint>

namespace hemopinn::rng {

// Counter-based random streams built on the splitmix64 mixer. Every draw is
// a pure function of (seed, stream, counter), so sampling is reproducible
// across platforms, threads and checkpoint resumes without carrying engine
// state around.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash3(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    std::uint64_t h = splitmix64(seed ^ 0x6a09e667f3bcc909ULL);
    h = splitmix64(h ^ stream);
    h = splitmix64(h ^ counter);
    return h;
}

// Uniform in [0, 1) with 53-bit resolution.
inline double uniform01(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    return static_cast<double>(hash3(seed, stream, counter) >> 11) * 0x1.0p-53;
}

inline double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter,
                      double lo, double hi) {
    return lo + (hi - lo) * uniform01(seed, stream, counter);
}

// Standard normal via Box-Muller; each counter yields one independent draw.
inline double normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
    const double u1 = static_cast<double>((hash3(seed, stream, 2 * counter) >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform01(seed, stream, 2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

// Convenience sequential view of one (seed, stream) pair.
class Stream {
public:
    Stream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

    double u01() { return uniform01(seed_, stream_, counter_++); }
    double u(double lo, double hi) { return uniform(seed_, stream_, counter_++, lo, hi); }
    double n() { return normal(seed_, stream_, counter_++); }
    std::uint64_t bits() { return hash3(seed_, stream_, counter_++); }

    // integer in [0, n)
    std::uint64_t below(std::uint64_t n) { return bits() % n; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

// Fisher-Yates shuffle driven by a Stream.
template <class Vec>
void shuffle(Vec& v, Stream& s) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(s.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

// Stream identifiers. Keeping them in one table avoids accidental reuse.
enum : std::uint64_t {
    kStreamCollocation = 1,
    kStreamBoundary = 2,
    kStreamMeasureNoise = 3,
    kStreamNetInit = 4,
    kStreamWkInit = 5,
    kStreamShuffle = 6,
    kStreamOdeTimes = 7,
    kStreamWallTimes = 8,
};

} // namespace hemopinn::rng
