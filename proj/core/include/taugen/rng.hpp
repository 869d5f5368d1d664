#pragma once

#include <cstdint>
#include <string_view>

namespace taugen {

// Stateless 64-bit mixer used wherever a derived seed is needed
// (per-sample seeds, stream ids). Two rounds of the splitmix64 finalizer.
uint64_t mix64(uint64_t a, uint64_t b);

// Counter-based generator: every draw is a pure function of
// (seed, stream, counter), so any point in any stream can be reproduced
// without replaying the sequence.
struct RngState {
    uint64_t seed = 0;
    uint64_t stream = 0;
    uint64_t counter = 0;

    // Box-Muller produces pairs; the spare is part of the state.
    bool has_spare = false;
    double spare = 0.0;

    RngState() = default;
    RngState(uint64_t seed_, uint64_t stream_ = 0) : seed(seed_), stream(stream_) {}

    // Fresh stream derived from this state's identity; counter restarts at 0.
    RngState substream(uint64_t a, uint64_t b = 0) const;
    RngState substream(std::string_view tag, uint64_t b = 0) const;

    uint64_t next_u64();
    double uniform01();                    // [0, 1)
    double uniform(double lo, double hi);  // [lo, hi)
    double normal();                       // N(0, 1)
};

}  // namespace taugen
