#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace mrn {

// Derives a decorrelated 64-bit seed from (seed, index) pairs. Used to give
// every Monte Carlo sample its own generator so results do not depend on how
// samples are distributed over threads.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(seed ^ splitmix64(index + 1));
}

// Seeded generator with hand-rolled uniform and gaussian draws. mt19937_64 is
// bit-exact across platforms by the standard; the distributions in <random>
// are not, so we map raw 64-bit outputs ourselves.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t bits() { return engine_(); }

    // Uniform on [0, 1): 53 high bits scaled, the usual double construction.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller. Draws are generated in pairs; the spare
    // is cached so consecutive calls stay cheap and the stream stays
    // reproducible for a fixed seed.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double phi = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(phi);
        have_spare_ = true;
        return r * std::cos(phi);
    }

    int uniform_int(int lo, int hi) {  // inclusive range
        std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(engine_() % span);
    }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Worker count for parallel sections: MRN_THREADS if set, else hardware
// concurrency, always at least 1.
int worker_count();

}  // namespace mrn
