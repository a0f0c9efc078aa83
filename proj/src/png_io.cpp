#include "perturbscope/png_io.hpp"

#include "perturbscope/errors.hpp"

#include <png.h>

#include <cstring>
#include <filesystem>

namespace ps {

namespace {
constexpr png_uint_32 kMaxDim = 1u << 20;
} // namespace

ImageU8 load_png(const std::string& path) {
    if (!std::filesystem::exists(path)) throw IoError("load_png: no such file: " + path);

    png_image pi;
    std::memset(&pi, 0, sizeof(pi));
    pi.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&pi, path.c_str()))
        throw IoError("load_png: " + path + ": " + pi.message);

    if (pi.width == 0 || pi.height == 0 || pi.width > kMaxDim || pi.height > kMaxDim) {
        png_image_free(&pi);
        throw IoError("load_png: " + path + ": unreasonable dimensions");
    }

    const bool color = (pi.format & PNG_FORMAT_FLAG_COLOR) != 0;
    pi.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

    ImageU8 out(int(pi.height), int(pi.width), color ? 3 : 1);
    png_color bg{255, 255, 255}; // composite alpha over white
    if (!png_image_finish_read(&pi, &bg, out.data.data(), 0 /* natural stride */, nullptr)) {
        std::string msg = pi.message;
        png_image_free(&pi);
        throw IoError("load_png: " + path + ": " + msg);
    }
    return out;
}

void save_png(const ImageU8& img, const std::string& path) {
    if (img.data.empty()) throw ArgumentError("save_png: empty image");

    png_image pi;
    std::memset(&pi, 0, sizeof(pi));
    pi.version = PNG_IMAGE_VERSION;
    pi.width = png_uint_32(img.width);
    pi.height = png_uint_32(img.height);
    pi.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

    if (!png_image_write_to_file(&pi, path.c_str(), 0, img.data.data(), 0, nullptr))
        throw IoError("save_png: " + path + ": " + pi.message);
}

} // namespace ps
