#pragma once

#include <array>
#include <cstdint>

namespace ps {

// Classic 2D gradient-lattice noise with a seeded permutation table.
// Output of sample() is in roughly [-1, 1]; fbm() sums octaves with a
// persistence falloff and frequency doubling.
class PerlinNoise {
public:
    explicit PerlinNoise(std::uint64_t seed);

    double sample(double x, double y) const;
    double fbm(double x, double y, int octaves, double persistence) const;

private:
    std::array<std::uint8_t, 512> perm_{};

    static double fade(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }
    static double grad(std::uint8_t hash, double x, double y);
};

} // namespace ps
