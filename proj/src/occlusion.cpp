#include "perturbscope/occlusion.hpp"

#include "perturbscope/errors.hpp"

#include <algorithm>
#include <cmath>

namespace ps {

SensitivityMap sensitivity_map(const PairedSample& pair, const OcclusionConfig& cfg) {
    const ImageF32& b = pair.clean;
    const ImageF32& p = pair.perturbed;
    if (!b.same_dims(p)) throw ArgumentError("sensitivity_map: dimension mismatch");
    const int h = b.height, w = b.width, c = b.channels;
    if (cfg.window < 1 || cfg.stride < 1 || cfg.stride > cfg.window)
        throw ArgumentError("sensitivity_map: require 1 <= stride <= window");
    if (cfg.window > std::min(h, w))
        throw ArgumentError("sensitivity_map: window larger than image");

    SensitivityMap out;
    out.image = ImageF32(h, w, 1);
    out.window = cfg.window;
    out.stride = cfg.stride;

    ImageF32 acc, cnt;
    if (cfg.overlap == OverlapMode::Average) {
        acc = ImageF32(h, w, 1);
        cnt = ImageF32(h, w, 1);
    }

    const double denom = double(h) * w * c;
    for (int wy = 0; wy + cfg.window <= h; wy += cfg.stride) {
        for (int wx = 0; wx + cfg.window <= w; wx += cfg.stride) {
            // full-plane scan with the occlusion applied implicitly
            double sum = 0.0;
            for (int y = 0; y < h; ++y) {
                const bool in_rows = y >= wy && y < wy + cfg.window;
                for (int x = 0; x < w; ++x) {
                    const bool occluded = in_rows && x >= wx && x < wx + cfg.window;
                    for (int ch = 0; ch < c; ++ch) {
                        const float bv = occluded ? cfg.baseline_value : b.at(y, x, ch);
                        sum += std::abs(double(bv) - double(p.at(y, x, ch)));
                    }
                }
            }
            const float score = float(sum / denom);

            for (int y = wy; y < wy + cfg.window; ++y)
                for (int x = wx; x < wx + cfg.window; ++x) {
                    if (cfg.overlap == OverlapMode::Overwrite) {
                        out.image.at(y, x, 0) = score;
                    } else {
                        acc.at(y, x, 0) += score;
                        cnt.at(y, x, 0) += 1.0f;
                    }
                }
        }
    }

    if (cfg.overlap == OverlapMode::Average) {
        for (std::size_t i = 0; i < out.image.data.size(); ++i)
            out.image.data[i] = cnt.data[i] > 0 ? acc.data[i] / cnt.data[i] : 0.0f;
    }
    return out;
}

SensitivityMap normalize_map(const SensitivityMap& map) {
    SensitivityMap out = map;
    float mn = out.image.data[0], mx = out.image.data[0];
    for (float v : out.image.data) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    if (mx == mn) {
        // constant map: all-ones keeps "higher = more sensitive" ordering;
        // identically-zero stays zero
        const float fill = mx == 0.0f ? 0.0f : 1.0f;
        std::fill(out.image.data.begin(), out.image.data.end(), fill);
    } else {
        for (float& v : out.image.data) v = (v - mn) / (mx - mn);
    }
    out.normalized = true;
    return out;
}

SensitivityMap aggregate_maps(const std::vector<SensitivityMap>& maps) {
    if (maps.empty()) throw ArgumentError("aggregate_maps: empty list");
    SensitivityMap out = maps[0];
    for (std::size_t m = 1; m < maps.size(); ++m) {
        if (!maps[m].image.same_dims(out.image))
            throw ArgumentError("aggregate_maps: dimension mismatch");
        for (std::size_t i = 0; i < out.image.data.size(); ++i)
            out.image.data[i] += maps[m].image.data[i];
    }
    const float n = float(maps.size());
    for (float& v : out.image.data) v /= n;
    return out;
}

ImageF32 map_difference(const SensitivityMap& a, const SensitivityMap& b, float gamma) {
    if (!a.image.same_dims(b.image)) throw ArgumentError("map_difference: dimension mismatch");
    ImageF32 out(a.image.height, a.image.width, 1);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = std::pow(std::abs(a.image.data[i] - b.image.data[i]), gamma);
    return out;
}

} // namespace ps
