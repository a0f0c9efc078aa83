#pragma once

#include "perturbscope/image.hpp"

#include <string>

namespace ps {

// PMAP: bit-exact single-plane float format.
//   "PMAP" | version 0x01 | u32 height LE | u32 width LE | H*W little-endian f32, row-major
// Used for perturbation maps, spectra and sensitivity maps.
void save_pmap(const ImageF32& plane, const std::string& path); // requires channels == 1
ImageF32 load_pmap(const std::string& path);

} // namespace ps
