#pragma once

#include "perturbscope/image.hpp"

#include <vector>

namespace ps {

// Centered log-magnitude plane: log(1 + |FFT2(g)|) with DC at
// (floor(H/2), floor(W/2)). The transform is the unnormalized forward DFT.
struct Spectrum {
    ImageF32 mag; // single channel
};

// Signed difference of log-magnitude spectra (perturbed minus clean).
struct SpectralDiff {
    ImageF32 delta; // single channel
};

// Ring-averaged 1D curve over rounded radii from the spectrum center.
// Rings that contain no pixels (possible at extreme aspect ratios) carry
// magnitude 0 and ring_size 0.
struct RadialProfile {
    std::vector<double> magnitudes; // index = radius, length r_max + 1
    std::vector<int> ring_sizes;

    int r_max() const { return int(magnitudes.size()) - 1; }
    bool empty_ring(int k) const { return ring_sizes[std::size_t(k)] == 0; }
};

Spectrum fft_log_magnitude(const ImageF32& gray);

SpectralDiff spectral_difference(const Spectrum& clean, const Spectrum& perturbed);

RadialProfile radial_profile(const Spectrum& spec);
RadialProfile radial_profile_of_plane(const ImageF32& plane); // same binning, signed planes

// Quadrant swap placing index 0 at floor(N/2) on each axis. Involution on
// even-dimension planes.
ImageF32 fft_shift(const ImageF32& plane);

// Algorithm steps 1-4 for one pair: grayscale, spectra, signed difference,
// shared-radius profiles.
struct PairFingerprint {
    Spectrum clean_spec;
    Spectrum perturbed_spec;
    SpectralDiff diff;
    RadialProfile clean_profile;
    RadialProfile perturbed_profile;
};

PairFingerprint fingerprint_pair(const PairedSample& pair);

} // namespace ps
