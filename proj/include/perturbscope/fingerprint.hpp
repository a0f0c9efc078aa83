#pragma once

#include "perturbscope/image.hpp"
#include "perturbscope/spectral.hpp"

#include <array>
#include <string>
#include <vector>

namespace ps {

inline constexpr int kProfileBins = 64;
inline constexpr int kFingerprintDims = 2 * kProfileBins + 4;

// Fixed-length descriptor: [ radial profile of the image spectrum, 64 |
// radial profile of the spectral difference, 64 (zero for clean images) |
// residual entropy | residual mean | residual std | mean |gradient| ].
struct Fingerprint {
    std::array<double, kFingerprintDims> vector{};
    std::string base_image_id;
    std::string protection_label; // "clean" when no pair exists
};

// Linear resampling of a radial profile onto a fixed number of bins.
std::vector<double> resample_profile(const RadialProfile& profile, int bins);

// Descriptor for a protected image given its paired analysis artifacts.
Fingerprint build_fingerprint(const PairedSample& pair, const PairFingerprint& spectra,
                              std::string base_image_id);

// Descriptor for a clean, unpaired image: difference block and residual
// statistics are identically zero.
Fingerprint build_fingerprint_clean(const ImageF32& image, std::string base_image_id);

// Z-scores features across the set; zero-variance dimensions are dropped.
struct StandardizedSet {
    std::vector<std::vector<double>> rows; // one per fingerprint, kept dims only
    std::vector<int> kept_dims;
};

StandardizedSet standardize(const std::vector<Fingerprint>& fps);

// Symmetric euclidean distance matrix over z-scored features.
std::vector<std::vector<double>> distance_matrix(const std::vector<Fingerprint>& fps);

struct Embedding2D {
    std::vector<std::array<double, 2>> points;
    bool degenerate = false; // data rank < 2, second axis zeroed
    std::string method = "pca";
};

// Deterministic top-2 PCA of z-scored features; sign fixed by making the
// largest-magnitude loading of each axis positive.
Embedding2D project_2d(const std::vector<Fingerprint>& fps);

// Mean silhouette over all points; grouping selects which tag labels clusters.
enum class Grouping { ByBaseImage, ByProtectionLabel };
double cluster_quality(const std::vector<Fingerprint>& fps, Grouping grouping);

} // namespace ps
