#pragma once

#include "perturbscope/image.hpp"

#include <memory>
#include <string>

namespace ps {

// Reconstructed perturbation estimate, single channel, signed.
struct PerturbationMap {
    ImageF32 delta_hat;
};

// Multi-channel planes are reduced by channel mean before entropy/purification.
ImageF32 channel_mean_plane(const ImageF32& img);

// Anything that can produce a delta-hat from an image: the ground-truth
// oracle, a paired difference, a blind high-pass residual, or an external
// learned model behind the subprocess adapter.
class Reconstructor {
public:
    virtual ~Reconstructor() = default;
    virtual std::string id() const = 0;
    virtual PerturbationMap reconstruct(const ImageF32& image, const ImageF32* clean_ref) = 0;
};

// Returns a stored ground-truth delta regardless of input.
class OracleReconstructor final : public Reconstructor {
public:
    explicit OracleReconstructor(ImageF32 stored_delta);
    std::string id() const override { return "oracle"; }
    PerturbationMap reconstruct(const ImageF32& image, const ImageF32* clean_ref) override;

private:
    ImageF32 delta_;
};

class PairedDiffReconstructor final : public Reconstructor {
public:
    std::string id() const override { return "paired"; }
    PerturbationMap reconstruct(const ImageF32& image, const ImageF32* clean_ref) override;
};

// Blind stand-in: image minus its 5x5 median-filtered self. Deliberately
// model-free; not a faithful substitute for a learned reconstructor.
class HighPassResidualReconstructor final : public Reconstructor {
public:
    std::string id() const override { return "highpass"; }
    PerturbationMap reconstruct(const ImageF32& image, const ImageF32* clean_ref) override;
};

// Subprocess adapter: `<cmd> <input_png_path> <output_pmap_path>`, exit 0 and
// a well-formed PMAP on success, anything else raises AdapterError with the
// captured diagnostics.
class ExternalReconstructor final : public Reconstructor {
public:
    ExternalReconstructor(std::string command, double timeout_seconds = 120.0);
    std::string id() const override { return "external"; }
    PerturbationMap reconstruct(const ImageF32& image, const ImageF32* clean_ref) override;

private:
    std::string command_;
    double timeout_seconds_;
};

ImageF32 median_filter(const ImageF32& img, int radius); // (2r+1)^2 window, clamped borders

// Histogram entropy in bits of per-image min-max-normalized |delta_hat|.
// Constant maps land in a single bin and score 0.
double shannon_entropy(const ImageF32& map, int bins = 256);

struct DetectionResult {
    double entropy = 0.0;   // bits
    double threshold = 0.0; // bits
    bool detected = false;
    std::string reconstructor_id;
    int histogram_bins = 256;
};

struct DetectionOutput {
    DetectionResult result;
    PerturbationMap delta_hat; // kept so callers can persist it for audit
};

constexpr double kDefaultDetectionThreshold = 0.07;

DetectionOutput detect(const ImageF32& image, Reconstructor& rec,
                       double threshold = kDefaultDetectionThreshold,
                       const ImageF32* clean_ref = nullptr, int bins = 256);

// x_clean = clip(x - delta_hat broadcast, 0, 1)
ImageF32 purify(const ImageF32& image, Reconstructor& rec, const ImageF32* clean_ref = nullptr);
ImageF32 subtract_delta(const ImageF32& image, const ImageF32& delta_hat);

} // namespace ps
