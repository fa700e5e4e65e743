#include "sdar/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "sdar/errors.hpp"

namespace sdar {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t run_seed, std::uint64_t stream_id) {
    return splitmix64(run_seed + 0x9E3779B97F4A7C15ULL * stream_id);
}

std::uint64_t derive_seed(std::uint64_t run_seed, Stream stream) {
    return derive_seed(run_seed, static_cast<std::uint64_t>(stream));
}

double Rng::normal() {
    // 1 - uniform() lies in (0, 1], so the log is finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::index(std::size_t n) {
    if (n == 0) throw PreconditionError("Rng::index: empty range");
    const auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return i < n ? i : n - 1;
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void Rng::deserialize(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
    if (!is) throw IoError("Rng::deserialize: malformed engine state");
}

}  // namespace sdar
