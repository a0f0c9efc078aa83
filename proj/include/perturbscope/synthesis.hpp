#pragma once

#include "perturbscope/image.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ps {

enum class MaskKind { Uniform, RadialGradient, Clouds2, Directional, PerlinHi, PerlinLow };
enum class NoiseKind { Gauss, Gauss2x, Gauss4x, ResidualGlaze, ResidualShade, ResidualShadeGlaze };

const std::vector<MaskKind>& all_mask_kinds();
const std::vector<NoiseKind>& all_noise_kinds();
std::string mask_kind_name(MaskKind k);
std::string noise_kind_name(NoiseKind k);
MaskKind parse_mask_kind(const std::string& name);
NoiseKind parse_noise_kind(const std::string& name);
bool is_residual(NoiseKind k);

// Single-channel spatial mask, samples in [0,1]; lightness == mean sample.
struct Mask {
    ImageF32 image;
    MaskKind kind;
    double lightness = 0.0;
};

// Single-channel noise field in the [0,255] domain, broadcast per-channel
// at composition time.
struct NoiseField {
    ImageF32 image;
    NoiseKind kind;
    std::uint64_t seed = 0;
};

enum class UpscaleFilter { BilinearSmooth, Bilinear, Nearest };

// Tuning knobs with conventional defaults; documented in the README.
struct SynthParams {
    double gauss_mean = 127.5;
    double gauss_sigma = 40.0;
    UpscaleFilter upscale = UpscaleFilter::BilinearSmooth;
    double smooth_factor = 1.5; // blur sigma = smooth_factor * upscale ratio
    int perlin_hi_cells = 32;   // cell size = w / cells
    int perlin_low_cells = 4;
    int clouds_cells = 8;
    int clouds_octaves = 4;
    double clouds_persistence = 0.5;
    double directional_angle_deg = 45.0;
    double master_opacity = 0.15;
};

// --- resampling helpers shared by the noise pipeline ---
ImageF32 bilinear_upscale(const ImageF32& src, int out_h, int out_w);
ImageF32 nearest_upscale(const ImageF32& src, int out_h, int out_w);
ImageF32 gaussian_blur(const ImageF32& src, double sigma);

// Raw procedural mask, before any lightness targeting.
Mask make_mask(MaskKind kind, int h, int w, std::uint64_t seed, const SynthParams& params = {});

// Gamma-corrects mask samples (m^gamma, gamma found by bisection) until the
// mean intensity hits `target` within 1e-4. Rank order of samples is preserved.
// Throws InfeasibleError when no gamma can reach the target (e.g. all-ones mask).
Mask adjust_lightness(const Mask& mask, double target);

// As used by the grid: Uniform masks cannot be gamma-targeted, so they are
// scaled to the target instead.
Mask mask_at_lightness(const Mask& raw, double target);

NoiseField make_noise(NoiseKind kind, int h, int w, std::uint64_t seed,
                      const PairedSample* source = nullptr, const SynthParams& params = {});

// c = Clip(b + n (.) (mask * master_opacity), 0, 255), rounded to 8 bits.
ImageU8 compose(const ImageU8& base, const NoiseField& noise, const Mask& mask,
                double master_opacity);

// Signed per-channel delta = perturbed - clean, samples in [-1,1].
ImageF32 extract_residual(const PairedSample& pair);

// One grid cell: the composed image plus its ground-truth perturbation plane
// (channel-mean of the quantized composed-minus-base difference, in [-1,1]).
struct SynthOutput {
    ImageU8 image;
    ImageF32 delta; // single channel
};

struct ResidualSources {
    std::optional<PairedSample> glaze;
    std::optional<PairedSample> shade;
    std::optional<PairedSample> shade_glaze;

    const PairedSample* for_kind(NoiseKind k) const;
};

// Per-combination PRNG streams are derived from (master_seed, mask, noise, L)
// so the grid is order- and scheduling-independent. The raw mask is shared per
// kind per run (seeded by master_seed alone) and lightness-adjusted per L.
std::uint64_t combo_seed(std::uint64_t master_seed, MaskKind m, NoiseKind n, double lightness);

SynthOutput synthesize_one(const ImageU8& base, const Mask& raw_mask, NoiseKind noise_kind,
                           double lightness, std::uint64_t master_seed,
                           const ResidualSources& sources, const SynthParams& params);

} // namespace ps
