#include "perturbscope/synthesis.hpp"

#include "perturbscope/errors.hpp"
#include "perturbscope/perlin.hpp"
#include "perturbscope/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numbers>

namespace ps {

const std::vector<MaskKind>& all_mask_kinds() {
    static const std::vector<MaskKind> kinds = {
        MaskKind::Uniform,   MaskKind::RadialGradient, MaskKind::Clouds2,
        MaskKind::Directional, MaskKind::PerlinHi,     MaskKind::PerlinLow};
    return kinds;
}

const std::vector<NoiseKind>& all_noise_kinds() {
    static const std::vector<NoiseKind> kinds = {
        NoiseKind::Gauss,         NoiseKind::Gauss2x,       NoiseKind::Gauss4x,
        NoiseKind::ResidualGlaze, NoiseKind::ResidualShade, NoiseKind::ResidualShadeGlaze};
    return kinds;
}

std::string mask_kind_name(MaskKind k) {
    switch (k) {
        case MaskKind::Uniform: return "uniform";
        case MaskKind::RadialGradient: return "radial";
        case MaskKind::Clouds2: return "clouds2";
        case MaskKind::Directional: return "directional";
        case MaskKind::PerlinHi: return "perlin-hi";
        case MaskKind::PerlinLow: return "perlin-low";
    }
    throw ArgumentError("unknown mask kind");
}

std::string noise_kind_name(NoiseKind k) {
    switch (k) {
        case NoiseKind::Gauss: return "gauss";
        case NoiseKind::Gauss2x: return "gauss-2x";
        case NoiseKind::Gauss4x: return "gauss-4x";
        case NoiseKind::ResidualGlaze: return "glazed";
        case NoiseKind::ResidualShade: return "shaded";
        case NoiseKind::ResidualShadeGlaze: return "shaded-glazed";
    }
    throw ArgumentError("unknown noise kind");
}

MaskKind parse_mask_kind(const std::string& name) {
    for (MaskKind k : all_mask_kinds())
        if (mask_kind_name(k) == name) return k;
    throw ArgumentError("unknown mask kind: " + name);
}

NoiseKind parse_noise_kind(const std::string& name) {
    for (NoiseKind k : all_noise_kinds())
        if (noise_kind_name(k) == name) return k;
    throw ArgumentError("unknown noise kind: " + name);
}

bool is_residual(NoiseKind k) {
    return k == NoiseKind::ResidualGlaze || k == NoiseKind::ResidualShade ||
           k == NoiseKind::ResidualShadeGlaze;
}

const PairedSample* ResidualSources::for_kind(NoiseKind k) const {
    switch (k) {
        case NoiseKind::ResidualGlaze: return glaze ? &*glaze : nullptr;
        case NoiseKind::ResidualShade: return shade ? &*shade : nullptr;
        case NoiseKind::ResidualShadeGlaze: return shade_glaze ? &*shade_glaze : nullptr;
        default: return nullptr;
    }
}

// ---------------------------------------------------------------- resampling

ImageF32 bilinear_upscale(const ImageF32& src, int out_h, int out_w) {
    if (src.channels != 1) throw ArgumentError("bilinear_upscale: single-channel only");
    ImageF32 out(out_h, out_w, 1);
    const double sy = double(src.height) / out_h;
    const double sx = double(src.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double fy = y * sy;
        const int y0 = std::min(int(fy), src.height - 1);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = x * sx;
            const int x0 = std::min(int(fx), src.width - 1);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - x0;
            const double top = std::lerp(double(src.at(y0, x0, 0)), double(src.at(y0, x1, 0)), wx);
            const double bot = std::lerp(double(src.at(y1, x0, 0)), double(src.at(y1, x1, 0)), wx);
            out.at(y, x, 0) = float(std::lerp(top, bot, wy));
        }
    }
    return out;
}

ImageF32 nearest_upscale(const ImageF32& src, int out_h, int out_w) {
    if (src.channels != 1) throw ArgumentError("nearest_upscale: single-channel only");
    ImageF32 out(out_h, out_w, 1);
    for (int y = 0; y < out_h; ++y) {
        const int sy = std::min(int(double(y) * src.height / out_h), src.height - 1);
        for (int x = 0; x < out_w; ++x) {
            const int sx = std::min(int(double(x) * src.width / out_w), src.width - 1);
            out.at(y, x, 0) = src.at(sy, sx, 0);
        }
    }
    return out;
}

ImageF32 gaussian_blur(const ImageF32& src, double sigma) {
    if (src.channels != 1) throw ArgumentError("gaussian_blur: single-channel only");
    if (sigma <= 0.0) return src;
    const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(std::size_t(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
        kernel[std::size_t(i + radius)] = v;
        sum += v;
    }
    for (double& v : kernel) v /= sum;

    const int h = src.height, w = src.width;
    ImageF32 tmp(h, w, 1), out(h, w, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xx = std::clamp(x + i, 0, w - 1);
                acc += kernel[std::size_t(i + radius)] * src.at(y, xx, 0);
            }
            tmp.at(y, x, 0) = float(acc);
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yy = std::clamp(y + i, 0, h - 1);
                acc += kernel[std::size_t(i + radius)] * tmp.at(yy, x, 0);
            }
            out.at(y, x, 0) = float(acc);
        }
    return out;
}

// --------------------------------------------------------------------- masks

namespace {

double mask_mean(const ImageF32& img) {
    double s = 0.0;
    for (float v : img.data) s += v;
    return s / double(img.data.size());
}

void rescale_unit(ImageF32& img) {
    float mn = img.data[0], mx = img.data[0];
    for (float v : img.data) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    if (mx > mn) {
        for (float& v : img.data) v = (v - mn) / (mx - mn);
    } else {
        for (float& v : img.data) v = 0.5f;
    }
}

} // namespace

Mask make_mask(MaskKind kind, int h, int w, std::uint64_t seed, const SynthParams& params) {
    if (h < 8 || w < 8) throw ArgumentError("make_mask: dimensions must be >= 8");
    ImageF32 img(h, w, 1);

    switch (kind) {
        case MaskKind::Uniform:
            std::fill(img.data.begin(), img.data.end(), 1.0f);
            break;
        case MaskKind::RadialGradient: {
            const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
            const double maxd = std::hypot(cy, cx); // corners are farthest
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    img.at(y, x, 0) = float(1.0 - std::hypot(y - cy, x - cx) / maxd);
            for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
            break;
        }
        case MaskKind::Directional: {
            const double theta = params.directional_angle_deg * std::numbers::pi / 180.0;
            const double dx = std::cos(theta), dy = std::sin(theta);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    img.at(y, x, 0) = float(x * dx + y * dy);
            rescale_unit(img);
            break;
        }
        case MaskKind::PerlinHi:
        case MaskKind::PerlinLow: {
            const int cells = kind == MaskKind::PerlinHi ? params.perlin_hi_cells
                                                         : params.perlin_low_cells;
            const double cell = double(w) / std::max(1, cells);
            PerlinNoise noise(seed);
            // sample at pixel centers: lattice-aligned samples would all be zero
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    img.at(y, x, 0) = float(noise.sample((x + 0.5) / cell, (y + 0.5) / cell));
            rescale_unit(img);
            break;
        }
        case MaskKind::Clouds2: {
            const double cell = double(w) / std::max(1, params.clouds_cells);
            PerlinNoise noise(seed);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    img.at(y, x, 0) = float(noise.fbm((x + 0.5) / cell, (y + 0.5) / cell,
                                                      params.clouds_octaves,
                                                      params.clouds_persistence));
            rescale_unit(img);
            break;
        }
    }

    const double mean = mask_mean(img);
    return Mask{std::move(img), kind, mean};
}

Mask adjust_lightness(const Mask& mask, double target) {
    if (!(target > 0.0 && target < 1.0))
        throw ArgumentError("adjust_lightness: target must lie in (0,1)");

    // mean(m^gamma) is continuous and strictly decreasing in gamma whenever the
    // mask has a sample strictly inside (0,1).
    auto mean_at = [&](double gamma) {
        double s = 0.0;
        for (float v : mask.image.data) s += std::pow(double(v), gamma);
        return s / double(mask.image.data.size());
    };

    constexpr double kGammaLo = 1e-3, kGammaHi = 1e3, kTol = 1e-5;
    constexpr int kMaxIter = 100;

    const double hi_mean = mean_at(kGammaLo); // largest reachable mean
    const double lo_mean = mean_at(kGammaHi); // smallest reachable mean
    if (target > hi_mean + kTol || target < lo_mean - kTol)
        throw InfeasibleError(fmt::format(
            "adjust_lightness: target {} unreachable (gamma family spans [{}, {}])", target,
            lo_mean, hi_mean));

    double lo = kGammaLo, hi = kGammaHi, gamma = 1.0;
    for (int i = 0; i < kMaxIter; ++i) {
        gamma = std::sqrt(lo * hi); // bisect in log space
        const double m = mean_at(gamma);
        if (std::abs(m - target) <= kTol) break;
        if (m > target)
            lo = gamma;
        else
            hi = gamma;
    }

    Mask out{ImageF32(mask.image.height, mask.image.width, 1), mask.kind, 0.0};
    for (std::size_t i = 0; i < mask.image.data.size(); ++i)
        out.image.data[i] = float(std::pow(double(mask.image.data[i]), gamma));
    out.lightness = mask_mean(out.image);
    if (std::abs(out.lightness - target) > 1e-4)
        throw InfeasibleError(fmt::format("adjust_lightness: bisection stalled at mean {} for target {}",
                                          out.lightness, target));
    return out;
}

Mask mask_at_lightness(const Mask& raw, double target) {
    if (raw.kind == MaskKind::Uniform) {
        // gamma cannot move an all-ones mask; scale instead
        Mask out{ImageF32(raw.image.height, raw.image.width, 1, float(target)), raw.kind, target};
        return out;
    }
    return adjust_lightness(raw, target);
}

// --------------------------------------------------------------------- noise

namespace {

ImageF32 gaussian_field(int h, int w, std::uint64_t seed, const SynthParams& p) {
    ImageF32 img(h, w, 1);
    Rng rng(seed);
    for (float& v : img.data)
        v = float(std::clamp(rng.gaussian(p.gauss_mean, p.gauss_sigma), 0.0, 255.0));
    return img;
}

ImageF32 upscaled_gaussian_field(int h, int w, int ratio, std::uint64_t seed,
                                 const SynthParams& p) {
    const int lh = std::max(2, h / ratio), lw = std::max(2, w / ratio);
    ImageF32 low(lh, lw, 1);
    Rng rng(seed);
    for (float& v : low.data) v = float(rng.gaussian(p.gauss_mean, p.gauss_sigma));

    ImageF32 up;
    switch (p.upscale) {
        case UpscaleFilter::Nearest: up = nearest_upscale(low, h, w); break;
        case UpscaleFilter::Bilinear: up = bilinear_upscale(low, h, w); break;
        case UpscaleFilter::BilinearSmooth:
            up = gaussian_blur(bilinear_upscale(low, h, w), p.smooth_factor * ratio);
            break;
    }
    for (float& v : up.data) v = std::clamp(v, 0.0f, 255.0f);
    return up;
}

ImageF32 residual_field(const PairedSample& source, int h, int w, const SynthParams& p) {
    if (source.clean.height != h || source.clean.width != w)
        throw ArgumentError("make_noise: residual source dimensions do not match");
    // Channel-mean residual in [0,255] level units, recentered at the Gauss
    // mean and variance-matched to the Gauss field.
    const std::size_t n = std::size_t(h) * w;
    std::vector<double> d(n, 0.0);
    const int c = source.clean.channels;
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int k = 0; k < c; ++k)
            acc += double(source.perturbed.data[i * std::size_t(c) + std::size_t(k)]) -
                   double(source.clean.data[i * std::size_t(c) + std::size_t(k)]);
        d[i] = acc / c * 255.0;
    }
    double mean = 0.0;
    for (double v : d) mean += v;
    mean /= double(n);
    double var = 0.0;
    for (double v : d) var += (v - mean) * (v - mean);
    var /= double(n);
    const double sd = std::sqrt(var);

    ImageF32 img(h, w, 1);
    if (sd == 0.0) {
        std::fill(img.data.begin(), img.data.end(), float(p.gauss_mean));
        return img;
    }
    const double gain = p.gauss_sigma / sd;
    for (std::size_t i = 0; i < n; ++i)
        img.data[i] = float(std::clamp(p.gauss_mean + gain * (d[i] - mean), 0.0, 255.0));
    return img;
}

} // namespace

NoiseField make_noise(NoiseKind kind, int h, int w, std::uint64_t seed,
                      const PairedSample* source, const SynthParams& params) {
    if (h < 2 || w < 2) throw ArgumentError("make_noise: dimensions must be >= 2");
    ImageF32 img;
    switch (kind) {
        case NoiseKind::Gauss: img = gaussian_field(h, w, seed, params); break;
        case NoiseKind::Gauss2x: img = upscaled_gaussian_field(h, w, 2, seed, params); break;
        case NoiseKind::Gauss4x: img = upscaled_gaussian_field(h, w, 4, seed, params); break;
        case NoiseKind::ResidualGlaze:
        case NoiseKind::ResidualShade:
        case NoiseKind::ResidualShadeGlaze:
            if (source == nullptr)
                throw ArgumentError("make_noise: " + noise_kind_name(kind) +
                                    " requires a source pair");
            img = residual_field(*source, h, w, params);
            break;
    }
    return NoiseField{std::move(img), kind, seed};
}

// ----------------------------------------------------------------- composite

ImageU8 compose(const ImageU8& base, const NoiseField& noise, const Mask& mask,
                double master_opacity) {
    if (noise.image.height != base.height || noise.image.width != base.width ||
        mask.image.height != base.height || mask.image.width != base.width)
        throw ArgumentError("compose: dimension mismatch");
    if (!(master_opacity > 0.0 && master_opacity <= 1.0))
        throw ArgumentError("compose: master_opacity must lie in (0,1]");

    ImageU8 out(base.height, base.width, base.channels);
    const std::size_t n = std::size_t(base.height) * base.width;
    for (std::size_t i = 0; i < n; ++i) {
        const double inc = double(noise.image.data[i]) * double(mask.image.data[i]) * master_opacity;
        for (int c = 0; c < base.channels; ++c) {
            const std::size_t j = i * std::size_t(base.channels) + std::size_t(c);
            const double v = std::clamp(double(base.data[j]) + inc, 0.0, 255.0);
            out.data[j] = std::uint8_t(std::min(std::floor(v + 0.5), 255.0));
        }
    }
    return out;
}

ImageF32 extract_residual(const PairedSample& pair) {
    if (!pair.clean.same_dims(pair.perturbed))
        throw ArgumentError("extract_residual: dimension mismatch");
    ImageF32 out(pair.clean.height, pair.clean.width, pair.clean.channels);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = pair.perturbed.data[i] - pair.clean.data[i];
    return out;
}

// ---------------------------------------------------------------------- grid

std::uint64_t combo_seed(std::uint64_t master_seed, MaskKind m, NoiseKind n, double lightness) {
    return derive_seed(master_seed, fmt::format("combo/{}/{}/{:.4f}", mask_kind_name(m),
                                                noise_kind_name(n), lightness));
}

SynthOutput synthesize_one(const ImageU8& base, const Mask& raw_mask, NoiseKind noise_kind,
                           double lightness, std::uint64_t master_seed,
                           const ResidualSources& sources, const SynthParams& params) {
    const Mask mask = mask_at_lightness(raw_mask, lightness);
    const std::uint64_t seed = combo_seed(master_seed, raw_mask.kind, noise_kind, lightness);
    const PairedSample* src = sources.for_kind(noise_kind);
    if (is_residual(noise_kind) && src == nullptr)
        throw ArgumentError("grid: missing residual source for " + noise_kind_name(noise_kind));
    const NoiseField noise = make_noise(noise_kind, base.height, base.width, seed, src, params);

    SynthOutput out;
    out.image = compose(base, noise, mask, params.master_opacity);

    // Ground truth is the quantized difference actually present in the output.
    out.delta = ImageF32(base.height, base.width, 1);
    const std::size_t n = std::size_t(base.height) * base.width;
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int c = 0; c < base.channels; ++c) {
            const std::size_t j = i * std::size_t(base.channels) + std::size_t(c);
            acc += double(out.image.data[j]) - double(base.data[j]);
        }
        out.delta.data[i] = float(acc / base.channels / 255.0);
    }
    return out;
}

} // namespace ps
