#include "perturbscope/pmap.hpp"

#include "perturbscope/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace ps {

static_assert(std::endian::native == std::endian::little,
              "PMAP I/O assumes a little-endian host");

namespace {
constexpr char kMagic[4] = {'P', 'M', 'A', 'P'};
constexpr std::uint8_t kVersion = 0x01;
constexpr std::uint32_t kMaxDim = 1u << 20;
} // namespace

void save_pmap(const ImageF32& plane, const std::string& path) {
    if (plane.channels != 1) throw ArgumentError("save_pmap: plane must be single-channel");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("save_pmap: cannot open " + path);
    f.write(kMagic, 4);
    f.put(char(kVersion));
    std::uint32_t h = std::uint32_t(plane.height), w = std::uint32_t(plane.width);
    f.write(reinterpret_cast<const char*>(&h), 4);
    f.write(reinterpret_cast<const char*>(&w), 4);
    f.write(reinterpret_cast<const char*>(plane.data.data()),
            std::streamsize(plane.data.size() * sizeof(float)));
    if (!f) throw IoError("save_pmap: write failed for " + path);
}

ImageF32 load_pmap(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load_pmap: cannot open " + path);
    char magic[4];
    std::uint8_t ver = 0;
    std::uint32_t h = 0, w = 0;
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(&ver), 1);
    f.read(reinterpret_cast<char*>(&h), 4);
    f.read(reinterpret_cast<char*>(&w), 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("load_pmap: " + path + ": bad magic");
    if (ver != kVersion) throw FormatError("load_pmap: " + path + ": unsupported version");
    if (h == 0 || w == 0 || h > kMaxDim || w > kMaxDim)
        throw FormatError("load_pmap: " + path + ": bad dimensions");
    ImageF32 out(int(h), int(w), 1);
    f.read(reinterpret_cast<char*>(out.data.data()),
           std::streamsize(out.data.size() * sizeof(float)));
    if (!f || std::size_t(f.gcount()) != out.data.size() * sizeof(float))
        throw FormatError("load_pmap: " + path + ": truncated payload");
    return out;
}

} // namespace ps
