#include "rflow/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rflow {

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngStream::RngStream(std::uint64_t base_seed, std::uint64_t stream_id)
    : base_seed_(base_seed), stream_id_(stream_id) {
    std::uint64_t a = base_seed;
    std::uint64_t b = stream_id ^ 0xD1B54A32D192ED03ULL;
    const std::uint64_t ha = splitmix64(a);
    const std::uint64_t hb = splitmix64(b);
    std::uint64_t mix = ha ^ rotl(hb, 17) ^ (hb * 0xA0761D6478BD642FULL);
    for (auto& word : s_) word = splitmix64(mix);
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
}

RngStream RngStream::split(std::uint64_t id) const {
    std::uint64_t h = stream_id_;
    const std::uint64_t derived = splitmix64(h) ^ (id * 0x9E3779B97F4A7C15ULL) ^ rotl(id, 31);
    return RngStream(base_seed_ ^ rotl(stream_id_, 7), derived);
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: empty range");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

double RngStream::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    // Box-Muller; 1 - uniform() lies in (0, 1] so the log is finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_normal_ = radius * std::sin(angle);
    has_cached_normal_ = true;
    return radius * std::cos(angle);
}

double RngStream::sign() { return (next_u64() >> 63) ? 1.0 : -1.0; }

Vec gaussian_sample(RngStream& rng, std::span<const double> mean, double std) {
    if (!(std >= 0.0)) throw std::invalid_argument("gaussian_sample: std must be non-negative");
    Vec out(mean.begin(), mean.end());
    if (std == 0.0) return out;
    for (double& x : out) x += std * rng.normal();
    return out;
}

}  // namespace rflow
