#pragma once

#include "perturbscope/image.hpp"

#include <string>

namespace ps {

// 8-bit PNG codec. 16-bit and palette inputs are normalized to 8-bit;
// alpha is composited over white. Output is RGB or grayscale per channel count.
ImageU8 load_png(const std::string& path);
void save_png(const ImageU8& img, const std::string& path);

} // namespace ps
