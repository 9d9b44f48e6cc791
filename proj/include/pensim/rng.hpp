#pragma once

#include <cstdint>
#include <random>

namespace pensim {

// Every random draw in the library comes from a stream keyed by
// (root seed, purpose tag, indices...).  Streams never depend on scheduling,
// so results are identical for any worker count.

namespace stream {
// Purpose tags.  Values are arbitrary but fixed forever.
inline constexpr std::uint64_t market = 0x11;
inline constexpr std::uint64_t life = 0x22;
inline constexpr std::uint64_t projection = 0x33;
inline constexpr std::uint64_t synthesis = 0x44;
inline constexpr std::uint64_t records = 0x55;
}  // namespace stream

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return splitmix64(splitmix64(a) ^ (0x9e3779b97f4a7c15ULL + b));
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t tag) {
    return std::mt19937_64(mix_seed(seed, tag));
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t i) {
    return std::mt19937_64(mix_seed(mix_seed(seed, tag), i));
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t i,
                                   std::uint64_t j) {
    return std::mt19937_64(mix_seed(mix_seed(mix_seed(seed, tag), i), j));
}

// Uniform source handed to the life-event simulation.  With `antithetic`
// set it replays the mirrored draws 1-u of the plain stream, which is how
// projection inner paths are paired.
class PathRng {
  public:
    explicit PathRng(std::mt19937_64 gen, bool antithetic = false)
        : gen_(gen), antithetic_(antithetic) {}

    double uniform() {
        double u = dist_(gen_);
        return antithetic_ ? 1.0 - u : u;
    }

    bool bernoulli(double p) { return uniform() < p; }

  private:
    std::mt19937_64 gen_;
    bool antithetic_;
    std::uniform_real_distribution<double> dist_{0.0, 1.0};
};

}  // namespace pensim
