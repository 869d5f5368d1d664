#include "taugen/rng.hpp"

#include <cmath>
#include <numbers>

namespace taugen {

namespace {

constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline uint64_t fin64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

uint64_t mix64(uint64_t a, uint64_t b) {
    return fin64(fin64(a + kGolden) + kGolden * (b + 1));
}

RngState RngState::substream(uint64_t a, uint64_t b) const {
    RngState out;
    out.seed = seed;
    out.stream = mix64(stream, mix64(a, b));
    return out;
}

RngState RngState::substream(std::string_view tag, uint64_t b) const {
    // FNV-1a over the tag keeps stream ids readable at call sites.
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return substream(h, b);
}

uint64_t RngState::next_u64() {
    uint64_t z = fin64(seed + kGolden * (stream + 1));
    z = fin64(z + kGolden * (++counter));
    return z;
}

double RngState::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngState::uniform(double lo, double hi) {
    return lo + uniform01() * (hi - lo);
}

double RngState::normal() {
    if (has_spare) {
        has_spare = false;
        return spare;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));  // log(1-u1), u1 < 1
    const double theta = 2.0 * std::numbers::pi * u2;
    spare = r * std::sin(theta);
    has_spare = true;
    return r * std::cos(theta);
}

}  // namespace taugen
