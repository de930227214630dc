#pragma once

#include <cstdint>

namespace selfcollapse {

/// Counter-based uniform stream keyed by (seed, trajectory, stream). Draw k
/// is a pure function of the key and k, so trajectories can be evaluated in
/// any order or on any thread and still see the same numbers.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t trajectory, std::uint64_t stream)
        : key_(mix(mix(seed ^ 0x6A09E667F3BCC909ULL) + mix(trajectory + 0xBB67AE8584CAA73BULL)) ^
               mix(stream * 0x9E3779B97F4A7C15ULL + 0x3C6EF372FE94F82BULL))
    {
    }

    [[nodiscard]] std::uint64_t bits(std::uint64_t counter) const
    {
        return mix(key_ ^ mix(counter * 0xD1B54A32D192ED03ULL + 0xA54FF53A5F1D36F1ULL));
    }

    /// Uniform double in [0, 1) with 53 random bits.
    [[nodiscard]] double uniform(std::uint64_t counter) const
    {
        return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
    }

    /// Sequential interface over the same counter space.
    double next() { return uniform(counter_++); }

private:
    // SplitMix64 finaliser.
    static constexpr std::uint64_t mix(std::uint64_t z)
    {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// Stream ids used by a trajectory.
inline constexpr std::uint64_t kScheduleStream = 0;
inline constexpr std::uint64_t kCollapseStream = 1;

}  // namespace selfcollapse
