#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "perturbscope/detection.hpp"
#include "perturbscope/errors.hpp"
#include "perturbscope/pmap.hpp"

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace ps;
namespace fs = std::filesystem;

namespace {

fs::path make_script(const char* name, const std::string& body) {
    const fs::path path = fs::temp_directory_path() / name;
    std::ofstream f(path);
    f << "#!/bin/sh\n" << body;
    f.close();
    fs::permissions(path, fs::perms::owner_all);
    return path;
}

} // namespace

TEST_CASE("entropy of a constant map is zero") {
    CHECK(shannon_entropy(ImageF32(16, 16, 1, 0.37f)) == 0.0);
    CHECK(shannon_entropy(ImageF32(16, 16, 1, 0.0f)) == 0.0);
}

TEST_CASE("entropy of a balanced two-value map is one bit") {
    ImageF32 map(16, 16, 1);
    for (std::size_t i = 0; i < map.data.size(); ++i) map.data[i] = i % 2 == 0 ? 0.1f : 0.9f;
    CHECK(shannon_entropy(map) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("entropy of a full-uniform map is exactly eight bits") {
    // 256 equally frequent levels k/255: each lands in its own bin
    ImageF32 map(16, 16, 1);
    for (std::size_t i = 0; i < map.data.size(); ++i) map.data[i] = float(i % 256) / 255.0f;
    CHECK(shannon_entropy(map) == doctest::Approx(8.0).epsilon(1e-12));
}

TEST_CASE("entropy stays within [0, 8] bits at 256 bins") {
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const ImageF32 map = oracle::random_plane(8, 8, 1, seed);
        const double h = shannon_entropy(map);
        CHECK(h >= 0.0);
        CHECK(h <= 8.0);
    }
}

TEST_CASE("entropy is permutation and sign-flip invariant") {
    ImageF32 map = oracle::random_plane(12, 12, 1, 3);
    const double base = shannon_entropy(map);

    ImageF32 reversed = map;
    std::reverse(reversed.data.begin(), reversed.data.end());
    CHECK(shannon_entropy(reversed) == base);

    ImageF32 flipped = map;
    for (float& v : flipped.data) v = -v;
    CHECK(shannon_entropy(flipped) == base);
}

TEST_CASE("entropy rejects bad input") {
    CHECK_THROWS_AS(shannon_entropy(ImageF32()), ArgumentError);
    CHECK_THROWS_AS(shannon_entropy(ImageF32(4, 4, 1), 1), ArgumentError);
    ImageF32 nan_map(2, 2, 1);
    nan_map.data[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(shannon_entropy(nan_map), ArgumentError);
}

TEST_CASE("channel_mean_plane averages the three channels") {
    ImageF32 img(1, 2, 3);
    img.data = {0.0f, 0.3f, 0.6f, 1.0f, 1.0f, 1.0f};
    const ImageF32 plane = channel_mean_plane(img);
    CHECK(plane.channels == 1);
    CHECK(plane.data[0] == doctest::Approx(0.3f));
    CHECK(plane.data[1] == doctest::Approx(1.0f));
}

TEST_CASE("oracle reconstructor returns the stored plane") {
    const ImageF32 delta = oracle::random_plane(8, 8, 1, 1);
    OracleReconstructor rec(delta);
    const PerturbationMap map = rec.reconstruct(ImageF32(8, 8, 3), nullptr);
    CHECK(map.delta_hat == delta);
    CHECK_THROWS_AS(rec.reconstruct(ImageF32(4, 4, 1), nullptr), ArgumentError);
}

TEST_CASE("paired reconstructor needs the clean reference") {
    PairedDiffReconstructor rec;
    const ImageF32 img = oracle::random_plane(8, 8, 1, 2);
    CHECK_THROWS_AS(rec.reconstruct(img, nullptr), ArgumentError);

    const ImageF32 clean = oracle::random_dyadic_plane(8, 8, 3);
    ImageF32 perturbed = clean;
    perturbed.data[5] += 0.25f;
    const PerturbationMap map = rec.reconstruct(perturbed, &clean);
    CHECK(map.delta_hat.data[5] == 0.25f);
    CHECK(map.delta_hat.data[0] == 0.0f);
}

TEST_CASE("highpass reconstructor removes smooth content") {
    // constant image: residual identically zero
    HighPassResidualReconstructor rec;
    const PerturbationMap flat = rec.reconstruct(ImageF32(16, 16, 1, 0.5f), nullptr);
    for (float v : flat.delta_hat.data) CHECK(v == 0.0f);

    // isolated spike survives the median
    ImageF32 spike(16, 16, 1, 0.5f);
    spike.at(8, 8, 0) = 1.0f;
    const PerturbationMap hp = rec.reconstruct(spike, nullptr);
    CHECK(hp.delta_hat.at(8, 8, 0) == doctest::Approx(0.5f));
}

TEST_CASE("median filter on a known 3x3 neighborhood") {
    ImageF32 img(3, 3, 1);
    for (int i = 0; i < 9; ++i) img.data[std::size_t(i)] = float(i);
    const ImageF32 med = median_filter(img, 1);
    CHECK(med.at(1, 1, 0) == 4.0f); // median of 0..8
    CHECK_THROWS_AS(median_filter(img, 0), ArgumentError);
}

TEST_CASE("detect thresholds entropy and reports provenance") {
    const ImageF32 delta = oracle::random_plane(16, 16, 1, 9);
    OracleReconstructor rec(delta);
    const ImageF32 img(16, 16, 1, 0.5f);

    const DetectionOutput hot = detect(img, rec, 0.07);
    CHECK(hot.result.detected);
    CHECK(hot.result.entropy == shannon_entropy(delta));
    CHECK(hot.result.reconstructor_id == "oracle");
    CHECK(hot.result.histogram_bins == 256);

    OracleReconstructor flat_rec(ImageF32(16, 16, 1, 0.2f));
    const DetectionOutput cold = detect(img, flat_rec, 0.07);
    CHECK_FALSE(cold.result.detected);
    CHECK(cold.result.entropy == 0.0);
}

TEST_CASE("purify subtracts the reconstruction with clipping") {
    ImageF32 img(4, 4, 1, 0.5f);
    OracleReconstructor rec(ImageF32(4, 4, 1, 0.2f));
    const ImageF32 out = purify(img, rec);
    for (float v : out.data) CHECK(v == doctest::Approx(0.3f));

    OracleReconstructor big(ImageF32(4, 4, 1, 0.9f));
    for (float v : purify(img, big).data) CHECK(v == 0.0f); // clipped at zero
}

TEST_CASE("subtract_delta broadcasts a single plane over three channels") {
    ImageF32 img(2, 2, 3, 0.5f);
    ImageF32 delta(2, 2, 1, 0.25f);
    const ImageF32 out = subtract_delta(img, delta);
    for (float v : out.data) CHECK(v == 0.25f);
    CHECK_THROWS_AS(subtract_delta(img, ImageF32(4, 4, 1)), ArgumentError);
}

TEST_CASE("external adapter: well-behaved script round trips") {
    const ImageF32 fixed = oracle::random_plane(8, 8, 1, 77);
    const fs::path pmap_path = fs::temp_directory_path() / "ps-fixture.pmap";
    save_pmap(fixed, pmap_path.string());
    const fs::path script =
        make_script("ps-adapter-ok.sh", "cp '" + pmap_path.string() + "' \"$2\"\n");

    ExternalReconstructor rec(script.string(), 30.0);
    const PerturbationMap map = rec.reconstruct(ImageF32(8, 8, 1, 0.5f), nullptr);
    CHECK(map.delta_hat == fixed);

    fs::remove(pmap_path);
    fs::remove(script);
}

TEST_CASE("external adapter: failure modes raise AdapterError") {
    SUBCASE("nonzero exit") {
        const fs::path script =
            make_script("ps-adapter-fail.sh", "echo boom >&2\nexit 3\n");
        ExternalReconstructor rec(script.string(), 30.0);
        CHECK_THROWS_AS(rec.reconstruct(ImageF32(8, 8, 1, 0.5f), nullptr), AdapterError);
        fs::remove(script);
    }
    SUBCASE("malformed output") {
        const fs::path script =
            make_script("ps-adapter-garbage.sh", "printf garbage > \"$2\"\n");
        ExternalReconstructor rec(script.string(), 30.0);
        CHECK_THROWS_AS(rec.reconstruct(ImageF32(8, 8, 1, 0.5f), nullptr), AdapterError);
        fs::remove(script);
    }
    SUBCASE("timeout") {
        const fs::path script = make_script("ps-adapter-slow.sh", "sleep 30\n");
        ExternalReconstructor rec(script.string(), 0.2);
        CHECK_THROWS_AS(rec.reconstruct(ImageF32(8, 8, 1, 0.5f), nullptr), AdapterError);
        fs::remove(script);
    }
    SUBCASE("wrong dimensions") {
        const fs::path pmap_path = fs::temp_directory_path() / "ps-wrongdim.pmap";
        save_pmap(ImageF32(4, 4, 1, 0.1f), pmap_path.string());
        const fs::path script =
            make_script("ps-adapter-dims.sh", "cp '" + pmap_path.string() + "' \"$2\"\n");
        ExternalReconstructor rec(script.string(), 30.0);
        CHECK_THROWS_AS(rec.reconstruct(ImageF32(8, 8, 1, 0.5f), nullptr), AdapterError);
        fs::remove(pmap_path);
        fs::remove(script);
    }
}
