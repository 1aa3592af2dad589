#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "gpanel/errors.hpp"

namespace gpanel {

/// Identifies an independent random substream. Identical (seed, stream) pairs
/// reproduce identical draws across runs and thread schedules.
struct RngSpec {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
};

/// Counter-based generator: the i-th output is a pure function of
/// (seed, stream, i), so streams can be handed to worker threads without any
/// shared state. Substreams are derived with fork(), which never overlaps the
/// parent sequence.
class Rng {
public:
    explicit Rng(RngSpec spec) : spec_(spec), key_(derive_key(spec)) {}

    RngSpec spec() const { return spec_; }

    std::uint64_t next_u64() {
        counter_ += golden;
        return mix64(key_ + counter_);
    }

    /// Uniform on the open interval (0, 1).
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// N(0, sigma2) via Box-Muller (cosine branch only, two uniforms per draw).
    double next_normal(double sigma2) {
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1) * sigma2) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Draws z ~ N(0, sigma2) and returns z if |z| <= trunc*sqrt(sigma2),
    /// otherwise 0. The out-of-band mass is set to zero, not resampled.
    double next_truncated_normal(double sigma2, double trunc) {
        if (!(sigma2 > 0.0)) throw ValidationError("truncated normal: sigma2 must be positive");
        if (!(trunc > 0.0)) throw ValidationError("truncated normal: trunc must be positive");
        const double z = next_normal(sigma2);
        return std::abs(z) <= trunc * std::sqrt(sigma2) ? z : 0.0;
    }

    /// Independent child stream; deterministic in (spec, tag).
    Rng fork(std::uint64_t tag) const {
        return Rng(RngSpec{spec_.seed, mix64(spec_.stream + golden * (tag + 1))});
    }

private:
    static constexpr std::uint64_t golden = 0x9E3779B97F4A7C15ULL;

    // splitmix64 finalizer
    static std::uint64_t mix64(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    }

    static std::uint64_t derive_key(RngSpec spec) {
        return mix64(mix64(spec.seed + golden) ^ (spec.stream + 0xD1B54A32D192ED03ULL));
    }

    RngSpec spec_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace gpanel
