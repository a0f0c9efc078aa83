#include "perturbscope/image.hpp"

#include "perturbscope/errors.hpp"

#include <algorithm>
#include <cmath>

namespace ps {

namespace {

void check_channels(int c) {
    if (c != 1 && c != 3) throw ArgumentError("channels must be 1 or 3, got " + std::to_string(c));
}

void check_dims(int h, int w) {
    if (h <= 0 || w <= 0) throw ArgumentError("image dimensions must be positive");
}

} // namespace

ImageU8::ImageU8(int h, int w, int c, std::uint8_t fill)
    : height(h), width(w), channels(c), data(std::size_t(h) * w * c, fill) {
    check_dims(h, w);
    check_channels(c);
}

ImageF32::ImageF32(int h, int w, int c, float fill)
    : height(h), width(w), channels(c), data(std::size_t(h) * w * c, fill) {
    check_dims(h, w);
    check_channels(c);
}

PairedSample::PairedSample(ImageF32 c, ImageF32 p, std::string l)
    : clean(std::move(c)), perturbed(std::move(p)), label(std::move(l)) {
    if (!clean.same_dims(perturbed))
        throw ArgumentError("paired sample: clean and perturbed dimensions differ");
}

ImageF32 to_grayscale(const ImageF32& img) {
    if (img.channels == 1) return img;
    ImageF32 out(img.height, img.width, 1);
    const std::size_t n = std::size_t(img.height) * img.width;
    for (std::size_t i = 0; i < n; ++i) {
        const float* px = &img.data[i * 3];
        out.data[i] = (px[0] + px[1] + px[2]) / 3.0f;
    }
    return out;
}

ImageF32 u8_to_f32(const ImageU8& img) {
    ImageF32 out(img.height, img.width, img.channels);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = float(img.data[i]) / 255.0f;
    return out;
}

ImageU8 f32_to_u8(const ImageF32& img) {
    ImageU8 out(img.height, img.width, img.channels);
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        float v = std::clamp(img.data[i], 0.0f, 1.0f);
        out.data[i] = std::uint8_t(std::floor(v * 255.0f + 0.5f));
    }
    return out;
}

ImageF32 clip(const ImageF32& img, float lo, float hi) {
    if (!(lo < hi)) throw ArgumentError("clip: lo must be < hi");
    ImageF32 out = img;
    for (float& v : out.data) v = std::clamp(v, lo, hi);
    return out;
}

} // namespace ps
