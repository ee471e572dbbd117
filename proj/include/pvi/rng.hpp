#pragma once

#include <cmath>
#include <cstdint>

namespace pvi {

// Counter-based Gaussian stream: each (path, step, component) indexes its own
// pair of uniforms, so generation order and worker count cannot change the
// sampled values. Keyed splitmix-style avalanche, Box-Muller transform.
struct CounterRng {
    std::uint64_t seed = 0;

    static std::uint64_t avalanche(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t word(std::uint64_t a, std::uint64_t b, std::uint64_t c) const {
        std::uint64_t h = avalanche(seed + 0x9E3779B97F4A7C15ULL);
        h = avalanche(h ^ (a + 0x9E3779B97F4A7C15ULL));
        h = avalanche(h ^ (b + 0xD1B54A32D192ED03ULL));
        h = avalanche(h ^ (c + 0x8CB92BA72F3D8DD7ULL));
        return h;
    }

    // Uniform in (0, 1), never exactly 0 or 1.
    static double to_unit(std::uint64_t w) {
        return (static_cast<double>(w >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    double gaussian(std::uint64_t path, std::uint64_t step, std::uint64_t component) const {
        const double u1 = to_unit(word(path, step, 2 * component));
        const double u2 = to_unit(word(path, step, 2 * component + 1));
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }
};

} // namespace pvi
