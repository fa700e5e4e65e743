#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace sdar {

/// Named random streams derived from one run seed. Each component draws from
/// its own stream so that changing one component never perturbs another.
enum class Stream : std::uint64_t {
    env = 1,
    policy = 2,
    replay = 3,
    init = 4,
    eval = 5,
};

/// splitmix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x);

/// seed_for(run, s) = splitmix64(run_seed + 0x9E3779B97F4A7C15 * stream_id).
std::uint64_t derive_seed(std::uint64_t run_seed, Stream stream);
std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t stream_id);

/// Deterministic random source. Distributions are computed here instead of
/// through <random> distribution objects so that the full state is the engine
/// state alone (serializable, no cached normals).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; consumes exactly two engine draws.
    double normal();

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n);

    std::string serialize() const;
    void deserialize(const std::string& state);

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace sdar
