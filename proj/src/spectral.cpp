#include "perturbscope/spectral.hpp"

#include "perturbscope/errors.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>

namespace ps {

namespace {
// FFTW plan creation is not thread-safe; execution of independent plans is.
std::mutex g_plan_mutex;
} // namespace

ImageF32 fft_shift(const ImageF32& plane) {
    if (plane.channels != 1) throw ArgumentError("fft_shift: single-channel only");
    const int h = plane.height, w = plane.width;
    ImageF32 out(h, w, 1);
    for (int y = 0; y < h; ++y) {
        const int yy = (y + h / 2) % h;
        for (int x = 0; x < w; ++x) {
            const int xx = (x + w / 2) % w;
            out.at(yy, xx, 0) = plane.at(y, x, 0);
        }
    }
    return out;
}

Spectrum fft_log_magnitude(const ImageF32& gray) {
    if (gray.channels != 1)
        throw ArgumentError("fft_log_magnitude: input must be grayscale (convert first)");
    const int h = gray.height, w = gray.width;
    if (h < 2 || w < 2) throw ArgumentError("fft_log_magnitude: dimensions must be >= 2");

    const std::size_t n = std::size_t(h) * w;
    fftw_complex* in = fftw_alloc_complex(n);
    fftw_complex* out = fftw_alloc_complex(n);
    for (std::size_t i = 0; i < n; ++i) {
        in[i][0] = double(gray.data[i]);
        in[i][1] = 0.0;
    }

    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(g_plan_mutex);
        plan = fftw_plan_dft_2d(h, w, in, out, FFTW_FORWARD, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(g_plan_mutex);
        fftw_destroy_plan(plan);
    }

    ImageF32 mag(h, w, 1);
    for (std::size_t i = 0; i < n; ++i)
        mag.data[i] = float(std::log1p(std::hypot(out[i][0], out[i][1])));
    fftw_free(in);
    fftw_free(out);

    return Spectrum{fft_shift(mag)};
}

SpectralDiff spectral_difference(const Spectrum& clean, const Spectrum& perturbed) {
    if (!clean.mag.same_dims(perturbed.mag))
        throw ArgumentError("spectral_difference: dimension mismatch");
    ImageF32 d(clean.mag.height, clean.mag.width, 1);
    for (std::size_t i = 0; i < d.data.size(); ++i)
        d.data[i] = perturbed.mag.data[i] - clean.mag.data[i];
    return SpectralDiff{std::move(d)};
}

RadialProfile radial_profile_of_plane(const ImageF32& plane) {
    if (plane.channels != 1) throw ArgumentError("radial_profile: single-channel only");
    const int h = plane.height, w = plane.width;
    const int cy = h / 2, cx = w / 2;

    int r_max = 0;
    for (int corner_y : {0, h - 1})
        for (int corner_x : {0, w - 1})
            r_max = std::max(r_max, int(std::lround(std::hypot(corner_y - cy, corner_x - cx))));

    std::vector<double> sums(std::size_t(r_max) + 1, 0.0);
    std::vector<int> counts(std::size_t(r_max) + 1, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int r = int(std::lround(std::hypot(y - cy, x - cx)));
            sums[std::size_t(r)] += double(plane.at(y, x, 0));
            counts[std::size_t(r)] += 1;
        }

    RadialProfile profile;
    profile.magnitudes.resize(sums.size());
    profile.ring_sizes = counts;
    for (std::size_t k = 0; k < sums.size(); ++k)
        profile.magnitudes[k] = counts[k] > 0 ? sums[k] / counts[k] : 0.0;
    return profile;
}

RadialProfile radial_profile(const Spectrum& spec) { return radial_profile_of_plane(spec.mag); }

PairFingerprint fingerprint_pair(const PairedSample& pair) {
    if (!pair.clean.same_dims(pair.perturbed))
        throw ArgumentError("fingerprint_pair: dimension mismatch");
    PairFingerprint fp;
    fp.clean_spec = fft_log_magnitude(to_grayscale(pair.clean));
    fp.perturbed_spec = fft_log_magnitude(to_grayscale(pair.perturbed));
    fp.diff = spectral_difference(fp.clean_spec, fp.perturbed_spec);
    fp.clean_profile = radial_profile(fp.clean_spec);
    fp.perturbed_profile = radial_profile(fp.perturbed_spec);
    // equal dims guarantee a shared radius vector
    if (fp.clean_profile.r_max() != fp.perturbed_profile.r_max())
        throw ArgumentError("fingerprint_pair: radius vectors diverged");
    return fp;
}

} // namespace ps
