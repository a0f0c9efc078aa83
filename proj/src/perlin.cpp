#include "perturbscope/perlin.hpp"

#include "perturbscope/rng.hpp"

#include <cmath>
#include <numeric>

namespace ps {

PerlinNoise::PerlinNoise(std::uint64_t seed) {
    std::array<std::uint8_t, 256> p;
    std::iota(p.begin(), p.end(), 0);
    Rng rng(seed);
    for (int i = 255; i > 0; --i) {
        const int j = int(rng.next_u64() % std::uint64_t(i + 1));
        std::swap(p[std::size_t(i)], p[std::size_t(j)]);
    }
    for (int i = 0; i < 512; ++i) perm_[std::size_t(i)] = p[std::size_t(i & 255)];
}

double PerlinNoise::grad(std::uint8_t hash, double x, double y) {
    switch (hash & 7) {
        case 0: return x + y;
        case 1: return x - y;
        case 2: return -x + y;
        case 3: return -x - y;
        case 4: return x;
        case 5: return -x;
        case 6: return y;
        default: return -y;
    }
}

double PerlinNoise::sample(double x, double y) const {
    const int xi = int(std::floor(x)) & 255;
    const int yi = int(std::floor(y)) & 255;
    const double xf = x - std::floor(x);
    const double yf = y - std::floor(y);
    const double u = fade(xf);
    const double v = fade(yf);

    const std::uint8_t aa = perm_[std::size_t(perm_[std::size_t(xi)] + yi)];
    const std::uint8_t ab = perm_[std::size_t(perm_[std::size_t(xi)] + yi + 1)];
    const std::uint8_t ba = perm_[std::size_t(perm_[std::size_t(xi + 1)] + yi)];
    const std::uint8_t bb = perm_[std::size_t(perm_[std::size_t(xi + 1)] + yi + 1)];

    const double x1 = std::lerp(grad(aa, xf, yf), grad(ba, xf - 1, yf), u);
    const double x2 = std::lerp(grad(ab, xf, yf - 1), grad(bb, xf - 1, yf - 1), u);
    return std::lerp(x1, x2, v);
}

double PerlinNoise::fbm(double x, double y, int octaves, double persistence) const {
    double total = 0.0, amplitude = 1.0, frequency = 1.0;
    for (int o = 0; o < octaves; ++o) {
        total += amplitude * sample(x * frequency, y * frequency);
        amplitude *= persistence;
        frequency *= 2.0;
    }
    return total;
}

} // namespace ps
