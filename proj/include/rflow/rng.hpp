#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rflow/linalg.hpp"

namespace rflow {

/// Splittable pseudorandom stream addressed by (base_seed, stream_id).
///
/// State is a xoshiro256** generator seeded through splitmix64 from both
/// words, so distinct addresses give independent sequences and equal
/// addresses reproduce bit-identical ones. A stream is owned by one worker.
class RngStream {
public:
    RngStream(std::uint64_t base_seed, std::uint64_t stream_id);

    std::uint64_t base_seed() const { return base_seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    /// Child stream keyed by `id`; the parent state is left untouched.
    RngStream split(std::uint64_t id) const;

    std::uint64_t next_u64();

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n);

    double normal();

    /// Rademacher sign, +1 or -1 with equal probability.
    double sign();

    template <class T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t base_seed_;
    std::uint64_t stream_id_;
    std::uint64_t s_[4];
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

std::uint64_t splitmix64(std::uint64_t& state);

/// mean + std * z with z standard normal per coordinate. std = 0 returns mean.
Vec gaussian_sample(RngStream& rng, std::span<const double> mean, double std);

}  // namespace rflow
