#include "perturbscope/detection.hpp"

#include "perturbscope/errors.hpp"
#include "perturbscope/image.hpp"
#include "perturbscope/pmap.hpp"
#include "perturbscope/png_io.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <thread>
#include <vector>

namespace ps {

ImageF32 channel_mean_plane(const ImageF32& img) {
    if (img.channels == 1) return img;
    ImageF32 out(img.height, img.width, 1);
    const std::size_t n = std::size_t(img.height) * img.width;
    for (std::size_t i = 0; i < n; ++i) {
        const float* px = &img.data[i * 3];
        out.data[i] = (px[0] + px[1] + px[2]) / 3.0f;
    }
    return out;
}

OracleReconstructor::OracleReconstructor(ImageF32 stored_delta) : delta_(std::move(stored_delta)) {
    if (delta_.channels != 1) delta_ = channel_mean_plane(delta_);
}

PerturbationMap OracleReconstructor::reconstruct(const ImageF32& image, const ImageF32*) {
    if (delta_.height != image.height || delta_.width != image.width)
        throw ArgumentError("oracle reconstructor: stored delta does not match image dims");
    return PerturbationMap{delta_};
}

PerturbationMap PairedDiffReconstructor::reconstruct(const ImageF32& image,
                                                     const ImageF32* clean_ref) {
    if (clean_ref == nullptr)
        throw ArgumentError("paired reconstructor requires a clean reference");
    if (!image.same_dims(*clean_ref))
        throw ArgumentError("paired reconstructor: dimension mismatch");
    ImageF32 diff(image.height, image.width, image.channels);
    for (std::size_t i = 0; i < diff.data.size(); ++i)
        diff.data[i] = image.data[i] - clean_ref->data[i];
    return PerturbationMap{channel_mean_plane(diff)};
}

ImageF32 median_filter(const ImageF32& img, int radius) {
    if (radius < 1) throw ArgumentError("median_filter: radius must be >= 1");
    ImageF32 out(img.height, img.width, img.channels);
    std::vector<float> window;
    window.reserve(std::size_t(2 * radius + 1) * std::size_t(2 * radius + 1));
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                window.clear();
                for (int dy = -radius; dy <= radius; ++dy)
                    for (int dx = -radius; dx <= radius; ++dx) {
                        const int yy = std::clamp(y + dy, 0, img.height - 1);
                        const int xx = std::clamp(x + dx, 0, img.width - 1);
                        window.push_back(img.at(yy, xx, c));
                    }
                auto mid = window.begin() + std::ptrdiff_t(window.size() / 2);
                std::nth_element(window.begin(), mid, window.end());
                out.at(y, x, c) = *mid;
            }
    return out;
}

PerturbationMap HighPassResidualReconstructor::reconstruct(const ImageF32& image,
                                                           const ImageF32*) {
    const ImageF32 smoothed = median_filter(image, 2); // 5x5
    ImageF32 residual(image.height, image.width, image.channels);
    for (std::size_t i = 0; i < residual.data.size(); ++i)
        residual.data[i] = image.data[i] - smoothed.data[i];
    return PerturbationMap{channel_mean_plane(residual)};
}

// ----------------------------------------------------------- external adapter

ExternalReconstructor::ExternalReconstructor(std::string command, double timeout_seconds)
    : command_(std::move(command)), timeout_seconds_(timeout_seconds) {
    if (command_.empty()) throw ArgumentError("external reconstructor: empty command");
}

namespace {

std::string slurp(const std::string& path, std::size_t limit = 4096) {
    std::ifstream f(path);
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (s.size() > limit) s.resize(limit);
    return s;
}

} // namespace

PerturbationMap ExternalReconstructor::reconstruct(const ImageF32& image, const ImageF32*) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() /
                         fmt::format("perturbscope-ext-{}", ::getpid());
    fs::create_directories(dir);
    const std::string in_png = (dir / fmt::format("in-{}.png", std::uintptr_t(this))).string();
    const std::string out_pmap = (dir / fmt::format("out-{}.pmap", std::uintptr_t(this))).string();
    const std::string err_log = (dir / fmt::format("err-{}.log", std::uintptr_t(this))).string();
    save_png(f32_to_u8(image), in_png);
    std::error_code ec;
    fs::remove(out_pmap, ec);

    const std::string shell_cmd =
        fmt::format("{} '{}' '{}' 2> '{}'", command_, in_png, out_pmap, err_log);

    const pid_t pid = ::fork();
    if (pid < 0) throw AdapterError("external reconstructor: fork failed");
    if (pid == 0) {
        ::execl("/bin/sh", "sh", "-c", shell_cmd.c_str(), (char*)nullptr);
        ::_exit(127);
    }

    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(long(timeout_seconds_ * 1000));
    int status = 0;
    for (;;) {
        const pid_t r = ::waitpid(pid, &status, WNOHANG);
        if (r == pid) break;
        if (r < 0) throw AdapterError("external reconstructor: waitpid failed");
        if (std::chrono::steady_clock::now() > deadline) {
            ::kill(pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            throw AdapterError(fmt::format(
                "external reconstructor timed out after {}s: {}", timeout_seconds_, command_));
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }

    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
        throw AdapterError(fmt::format(
            "external reconstructor '{}' exited with status {}; stderr: {}", command_,
            WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err_log)));

    ImageF32 plane;
    try {
        plane = load_pmap(out_pmap);
    } catch (const std::exception& e) {
        throw AdapterError(fmt::format(
            "external reconstructor '{}' produced malformed output: {}; stderr: {}", command_,
            e.what(), slurp(err_log)));
    }
    if (plane.height != image.height || plane.width != image.width)
        throw AdapterError(fmt::format(
            "external reconstructor '{}' returned a {}x{} plane for a {}x{} image", command_,
            plane.height, plane.width, image.height, image.width));
    return PerturbationMap{std::move(plane)};
}

// ------------------------------------------------------------------- entropy

double shannon_entropy(const ImageF32& map, int bins) {
    if (map.data.empty()) throw ArgumentError("shannon_entropy: empty map");
    if (bins < 2) throw ArgumentError("shannon_entropy: bins must be >= 2");

    float mn = std::abs(map.data[0]), mx = mn;
    for (float v : map.data) {
        if (!std::isfinite(v)) throw ArgumentError("shannon_entropy: non-finite sample");
        const float a = std::abs(v);
        mn = std::min(mn, a);
        mx = std::max(mx, a);
    }

    std::vector<std::size_t> hist(std::size_t(bins), 0);
    if (mx == mn) {
        hist[0] = map.data.size(); // constant map: single occupied bin
    } else {
        const double scale = double(bins) / (double(mx) - double(mn));
        for (float v : map.data) {
            int idx = int((double(std::abs(v)) - double(mn)) * scale);
            idx = std::clamp(idx, 0, bins - 1);
            hist[std::size_t(idx)] += 1;
        }
    }

    const double n = double(map.data.size());
    double h = 0.0;
    for (std::size_t c : hist)
        if (c > 0) {
            const double p = double(c) / n;
            h -= p * std::log2(p);
        }
    return h;
}

DetectionOutput detect(const ImageF32& image, Reconstructor& rec, double threshold,
                       const ImageF32* clean_ref, int bins) {
    DetectionOutput out;
    out.delta_hat = rec.reconstruct(image, clean_ref);
    out.result.entropy = shannon_entropy(out.delta_hat.delta_hat, bins);
    out.result.threshold = threshold;
    out.result.detected = out.result.entropy > threshold;
    out.result.reconstructor_id = rec.id();
    out.result.histogram_bins = bins;
    return out;
}

ImageF32 subtract_delta(const ImageF32& image, const ImageF32& delta_hat) {
    if (delta_hat.height != image.height || delta_hat.width != image.width)
        throw ArgumentError("purify: delta dimensions do not match image");
    ImageF32 out(image.height, image.width, image.channels);
    const std::size_t n = std::size_t(image.height) * image.width;
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < image.channels; ++c) {
            const std::size_t j = i * std::size_t(image.channels) + std::size_t(c);
            out.data[j] = std::clamp(image.data[j] - delta_hat.data[i], 0.0f, 1.0f);
        }
    return out;
}

ImageF32 purify(const ImageF32& image, Reconstructor& rec, const ImageF32* clean_ref) {
    const PerturbationMap map = rec.reconstruct(image, clean_ref);
    return subtract_delta(image, map.delta_hat);
}

} // namespace ps
