#pragma once

// Counter-based random streams.
//
// Every draw is a pure function of (master seed, replication, entity, stream,
// step, sub-draw), computed with Philox4x32-10. Nothing is carried between
// draws, so particles and replications can be processed in any order and on
// any number of threads with bit-identical results. Adding replications
// appends new counters and never reshuffles existing streams.
//
// Counter layout:
//   c0 = step (or draw-block index)
//   c1 = sub-draw index within the step
//   c2 = entity (particle index, 28 bits) | stream tag << 28
//   c3 = replication
//   key = master seed (low word, high word)

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace mvstop {

using Philox4x32Block = std::array<std::uint32_t, 4>;

inline Philox4x32Block philox4x32_10(Philox4x32Block ctr, std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t kM0 = 0xD2511F53u;
    constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u;
    constexpr std::uint32_t kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kW0;
            key[1] += kW1;
        }
        const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

enum class StreamTag : std::uint32_t {
    common_noise = 1,
    idiosyncratic = 2,
    initial_law = 3,
};

inline constexpr std::uint32_t kMaxEntity = (1u << 28) - 1;

/// Uniform on the open interval (0,1) from one 32-bit word.
inline double uniform_from_u32(std::uint32_t w) {
    return (static_cast<double>(w) + 0.5) * 0x1.0p-32;
}

/// Uniform on (0,1) with 52 random bits from two 32-bit words.
inline double uniform_from_u64(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (std::uint64_t{hi} << 32 | lo) >> 12;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-52;
}

/// Box-Muller: both normals of the pair built from uniforms u1, u2.
inline std::array<double, 2> box_muller(double u1, double u2) {
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(angle), r * std::sin(angle)};
}

/// Addresses one stream of draws. Cheap to copy; holds no mutable state.
class CounterStream {
public:
    CounterStream(std::uint64_t seed, std::uint32_t replication, StreamTag tag, std::uint32_t entity = 0)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          replication_(replication),
          entity_word_((entity & kMaxEntity) | (static_cast<std::uint32_t>(tag) << 28)) {}

    Philox4x32Block block(std::uint32_t step, std::uint32_t sub = 0) const {
        return philox4x32_10({step, sub, entity_word_, replication_}, key_);
    }

    /// The pair of standard normals stored at (step, sub).
    std::array<double, 2> normal_pair(std::uint32_t step, std::uint32_t sub = 0) const {
        const auto b = block(step, sub);
        return box_muller(uniform_from_u64(b[0], b[1]), uniform_from_u64(b[2], b[3]));
    }

    CounterStream with_entity(std::uint32_t entity) const {
        CounterStream s = *this;
        s.entity_word_ = (entity & kMaxEntity) | (entity_word_ & ~kMaxEntity);
        return s;
    }

private:
    std::array<std::uint32_t, 2> key_;
    std::uint32_t replication_;
    std::uint32_t entity_word_;
};

/// Standard normals z_0, z_1, ... of the common noise B1 for one replication.
/// Sequential reads hit a one-block cache; random access is also valid.
class CommonNoiseSource {
public:
    CommonNoiseSource(std::uint64_t seed, std::uint32_t replication)
        : stream_(seed, replication, StreamTag::common_noise) {}

    double normal(std::uint64_t k) {
        const std::uint64_t blk = k >> 1;
        if (blk != cached_block_) {
            cached_ = stream_.normal_pair(static_cast<std::uint32_t>(blk),
                                          static_cast<std::uint32_t>(blk >> 32));
            cached_block_ = blk;
        }
        return cached_[k & 1];
    }

private:
    CounterStream stream_;
    std::uint64_t cached_block_ = ~std::uint64_t{0};
    std::array<double, 2> cached_{};
};

}  // namespace mvstop
