#pragma once

#include "perturbscope/image.hpp"

namespace ps {

enum class OverlapMode { Overwrite, Average };

struct OcclusionConfig {
    int window = 32;
    int stride = 16;
    float baseline_value = 0.0f;
    OverlapMode overlap = OverlapMode::Overwrite;
};

struct SensitivityMap {
    ImageF32 image; // single channel, same H x W as the source
    int window = 0;
    int stride = 0;
    bool normalized = false;
};

// Sliding-window occlusion probe. For each window position on the stride
// lattice, the clean image is occluded with the baseline value and the score
// is the mean absolute difference against the perturbed image over the whole
// plane (all pixels and channels). The window region of the heatmap is filled
// with that score; Overwrite reproduces literal row-major last-write
// semantics, Average blends overlapping fills.
SensitivityMap sensitivity_map(const PairedSample& pair, const OcclusionConfig& cfg);

// Min-max scale to [0,1]. Constant nonzero maps become all-ones; an
// identically-zero map stays zero.
SensitivityMap normalize_map(const SensitivityMap& map);

// Pixelwise mean of equally sized maps.
SensitivityMap aggregate_maps(const std::vector<SensitivityMap>& maps);

// |a-b|^gamma contrast-compressed difference overlay; inputs must be normalized.
ImageF32 map_difference(const SensitivityMap& a, const SensitivityMap& b, float gamma = 0.5f);

} // namespace ps
