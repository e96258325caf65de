#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace metagap {

/**
 * Splittable counter-based random generator.
 *
 * State is a (key, counter) pair; each output is a strong 64-bit mix of the
 * key and the incremented counter, so a stream is a pure function of its key.
 * split() derives a child key non-linearly from the parent key and a caller
 * tag, which gives statistically independent streams without coordination —
 * exactly what per-seed / per-shard parallelism needs. Identical seeds and
 * tags reproduce identical streams on every run.
 *
 * The mix function is the SplitMix64 finalizer (Steele, Lea, Flood 2014),
 * which passes standard statistical batteries and costs a handful of cycles.
 * Not cryptographic, and not meant to be.
 */
class SplitRng {
public:
    using result_type = std::uint64_t;

    explicit SplitRng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(mix(mix(seed + kGolden) ^ mix(stream + kGamma))), counter_(0) {}

    /// Next raw 64-bit value.
    std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGolden); }

    /// Child generator with an independent stream. Deterministic in
    /// (parent key, tag); does not advance this generator.
    [[nodiscard]] SplitRng split(std::uint64_t tag) const {
        SplitRng child(0);
        child.key_ = mix(key_ ^ mix(tag + kGamma));
        child.counter_ = 0;
        child.spare_valid_ = false;
        return child;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal variate (Marsaglia polar method, cached spare).
    double next_gaussian() {
        if (spare_valid_) {
            spare_valid_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_double() - 1.0;
            v = 2.0 * next_double() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double r = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * r;
        spare_valid_ = true;
        return u * r;
    }

    /// Uniform integer in [0, bound) (Lemire rejection, bound-free of bias).
    std::uint64_t next_below(std::uint64_t bound) {
        // For the small bounds used here (task counts), the modulo bias of a
        // plain % would already be negligible, but rejection is cheap.
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    /// UniformRandomBitGenerator interface so std distributions also work.
    std::uint64_t operator()() { return next_u64(); }
    static constexpr std::uint64_t min() { return 0; }
    static constexpr std::uint64_t max() {
        return std::numeric_limits<std::uint64_t>::max();
    }

private:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
    static constexpr std::uint64_t kGamma = 0xD1B54A32D192ED03ull;

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_;
    double spare_ = 0.0;
    bool spare_valid_ = false;
};

}  // namespace metagap
