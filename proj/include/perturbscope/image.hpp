#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ps {

// 8-bit raster, row-major, interleaved channels. channels is 1 or 3.
struct ImageU8 {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;

    ImageU8() = default;
    ImageU8(int h, int w, int c, std::uint8_t fill = 0);

    std::size_t size() const { return data.size(); }
    std::uint8_t& at(int y, int x, int c) { return data[(std::size_t(y) * width + x) * channels + c]; }
    std::uint8_t at(int y, int x, int c) const { return data[(std::size_t(y) * width + x) * channels + c]; }
    bool operator==(const ImageU8&) const = default;
};

// Float raster, same layout. Analysis-domain images keep samples in [0,1];
// Algorithm-1 noise fields live in [0,255] by contract.
struct ImageF32 {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<float> data;

    ImageF32() = default;
    ImageF32(int h, int w, int c, float fill = 0.0f);

    std::size_t size() const { return data.size(); }
    float& at(int y, int x, int c) { return data[(std::size_t(y) * width + x) * channels + c]; }
    float at(int y, int x, int c) const { return data[(std::size_t(y) * width + x) * channels + c]; }
    bool same_dims(const ImageF32& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
    bool operator==(const ImageF32&) const = default;
};

// Clean/perturbed pair sharing dimensions; unit of every paired analysis.
struct PairedSample {
    ImageF32 clean;
    ImageF32 perturbed;
    std::string label;

    PairedSample() = default;
    PairedSample(ImageF32 c, ImageF32 p, std::string l);
};

// Channel-mean grayscale. 1-channel input passes through unchanged.
ImageF32 to_grayscale(const ImageF32& img);

ImageF32 u8_to_f32(const ImageU8& img);

// round-half-away-from-zero after clamping to [0,1]
ImageU8 f32_to_u8(const ImageF32& img);

ImageF32 clip(const ImageF32& img, float lo, float hi);

} // namespace ps
