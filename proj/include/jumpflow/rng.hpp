#pragma once

// Deterministic random number streams. std::mt19937_64 raw draws are fully
// specified by the standard, so results are bit-reproducible across
// platforms; the <random> distribution adaptors are implementation-defined
// and therefore avoided. Uniforms are mapped into the open interval (0,1)
// so inverse-survival sampling never sees 0 or 1.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>

namespace jumpflow {

/// 64-bit FNV-1a hash of a label, used to separate named substreams.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

/// splitmix64 finalizer; decorrelates derived seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// A single deterministic stream of uniforms.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    /// Uniform draw strictly inside (0, 1).
    double uniform() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform index in {0, ..., n-1}.
    int uniform_index(int n) {
        if (n <= 0) throw std::invalid_argument("RngStream::uniform_index: n must be positive");
        const int idx = static_cast<int>(uniform() * static_cast<double>(n));
        return idx >= n ? n - 1 : idx;
    }

private:
    std::mt19937_64 engine_;
};

/// Derives the seed of the `index`-th member of the substream named `tag`
/// under a master seed. Streams for distinct (tag, index) pairs are
/// decorrelated; the derivation is pure so any stream can be recreated.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t index = 0) {
    std::uint64_t s = splitmix64(master ^ fnv1a64(tag));
    return splitmix64(s ^ (index + 0x9E3779B97F4A7C15ULL));
}

inline RngStream derive_stream(std::uint64_t master, std::string_view tag,
                               std::uint64_t index = 0) {
    return RngStream(derive_seed(master, tag, index));
}

}  // namespace jumpflow
