#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "perturbscope/errors.hpp"
#include "perturbscope/fingerprint.hpp"
#include "perturbscope/rng.hpp"
#include "perturbscope/spectral.hpp"

#include "oracles.hpp"

#include <cmath>
#include <map>

using namespace ps;

namespace {

Fingerprint synthetic_fp(std::uint64_t seed, const std::string& base, const std::string& label,
                         double offset = 0.0) {
    Fingerprint fp;
    fp.base_image_id = base;
    fp.protection_label = label;
    Rng rng(seed);
    for (double& v : fp.vector) v = rng.uniform() + offset;
    return fp;
}

} // namespace

TEST_CASE("resample_profile keeps endpoints and interpolates linearly") {
    RadialProfile p;
    p.magnitudes = {0.0, 1.0, 2.0, 3.0};
    p.ring_sizes = {1, 1, 1, 1};
    const auto out = resample_profile(p, 7);
    REQUIRE(out.size() == 7);
    CHECK(out.front() == doctest::Approx(0.0));
    CHECK(out.back() == doctest::Approx(3.0));
    CHECK(out[2] == doctest::Approx(1.0)); // t = 2*3/6
    CHECK_THROWS_AS(resample_profile(p, 1), ArgumentError);
}

TEST_CASE("fingerprint layout: spectrum block, difference block, statistics") {
    const PairedSample pair(oracle::random_plane(16, 16, 1, 1), oracle::random_plane(16, 16, 1, 2),
                            "labelled");
    const PairFingerprint spectra = fingerprint_pair(pair);
    const Fingerprint fp = build_fingerprint(pair, spectra, "img-0");
    CHECK(fp.base_image_id == "img-0");
    CHECK(fp.protection_label == "labelled");

    const auto mag = resample_profile(spectra.perturbed_profile, kProfileBins);
    for (int i = 0; i < kProfileBins; ++i) CHECK(fp.vector[std::size_t(i)] == mag[std::size_t(i)]);

    // entropy slot is entropy of the residual, strictly positive here
    CHECK(fp.vector[2 * kProfileBins] > 0.0);
}

TEST_CASE("clean fingerprint zeroes the difference block and statistics") {
    const ImageF32 img = oracle::random_plane(16, 16, 3, 5);
    const Fingerprint fp = build_fingerprint_clean(img, "img-1");
    CHECK(fp.protection_label == "clean");
    for (int i = kProfileBins; i < kFingerprintDims; ++i) CHECK(fp.vector[std::size_t(i)] == 0.0);
    double mag_sum = 0.0;
    for (int i = 0; i < kProfileBins; ++i) mag_sum += std::abs(fp.vector[std::size_t(i)]);
    CHECK(mag_sum > 0.0);
}

TEST_CASE("standardize yields zero mean, unit variance, and drops constants") {
    std::vector<Fingerprint> fps;
    for (std::uint64_t s = 0; s < 6; ++s) {
        Fingerprint fp = synthetic_fp(s, "b", "l");
        fp.vector[3] = 1.25; // constant dimension
        fps.push_back(fp);
    }
    const StandardizedSet set = standardize(fps);
    for (int d : set.kept_dims) CHECK(d != 3);
    CHECK(set.kept_dims.size() == std::size_t(kFingerprintDims - 1));

    for (std::size_t d = 0; d < set.kept_dims.size(); ++d) {
        double mean = 0.0, var = 0.0;
        for (const auto& row : set.rows) mean += row[d];
        mean /= double(set.rows.size());
        for (const auto& row : set.rows) var += (row[d] - mean) * (row[d] - mean);
        var /= double(set.rows.size());
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK_THROWS_AS(standardize({fps[0]}), ArgumentError);
}

TEST_CASE("distance matrix is symmetric with a zero diagonal") {
    std::vector<Fingerprint> fps;
    for (std::uint64_t s = 0; s < 5; ++s) fps.push_back(synthetic_fp(s, "b", "l"));
    const auto dist = distance_matrix(fps);
    for (std::size_t i = 0; i < fps.size(); ++i) {
        CHECK(dist[i][i] == 0.0);
        for (std::size_t j = 0; j < fps.size(); ++j) CHECK(dist[i][j] == dist[j][i]);
    }
}

TEST_CASE("silhouette matches the by-definition oracle") {
    // two well separated groups of three, plus mild within-group jitter
    std::vector<Fingerprint> fps;
    std::vector<int> labels;
    for (std::uint64_t s = 0; s < 3; ++s) {
        fps.push_back(synthetic_fp(s, "a", "g0", 0.0));
        labels.push_back(0);
    }
    for (std::uint64_t s = 10; s < 13; ++s) {
        fps.push_back(synthetic_fp(s, "b", "g1", 5.0));
        labels.push_back(1);
    }
    const double got = cluster_quality(fps, Grouping::ByProtectionLabel);
    const double want = oracle::silhouette(distance_matrix(fps), labels);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
    CHECK(got > 0.8); // strongly separated by construction
}

TEST_CASE("silhouette grouping switches between tags") {
    std::vector<Fingerprint> fps;
    // base tags split the offset structure, labels do not
    fps.push_back(synthetic_fp(1, "base0", "x", 0.0));
    fps.push_back(synthetic_fp(2, "base0", "y", 0.0));
    fps.push_back(synthetic_fp(3, "base1", "x", 7.0));
    fps.push_back(synthetic_fp(4, "base1", "y", 7.0));
    CHECK(cluster_quality(fps, Grouping::ByBaseImage) >
          cluster_quality(fps, Grouping::ByProtectionLabel));
}

TEST_CASE("silhouette input validation") {
    std::vector<Fingerprint> fps = {synthetic_fp(1, "a", "l"), synthetic_fp(2, "a", "l")};
    CHECK_THROWS_AS(cluster_quality(fps, Grouping::ByBaseImage), ArgumentError); // one group
    fps[1].base_image_id = "b";
    CHECK_THROWS_AS(cluster_quality(fps, Grouping::ByBaseImage), ArgumentError); // all singletons
}

TEST_CASE("PCA projection is deterministic with a fixed sign convention") {
    std::vector<Fingerprint> fps;
    for (std::uint64_t s = 0; s < 8; ++s)
        fps.push_back(synthetic_fp(s, "b", "l", s < 4 ? 0.0 : 2.0));

    const Embedding2D a = project_2d(fps);
    const Embedding2D b = project_2d(fps);
    REQUIRE(a.points.size() == fps.size());
    for (std::size_t i = 0; i < fps.size(); ++i) {
        CHECK(a.points[i][0] == b.points[i][0]);
        CHECK(a.points[i][1] == b.points[i][1]);
    }
    CHECK_FALSE(a.degenerate);

    // first axis carries at least as much variance as the second
    double v1 = 0.0, v2 = 0.0;
    for (const auto& pt : a.points) {
        v1 += pt[0] * pt[0];
        v2 += pt[1] * pt[1];
    }
    CHECK(v1 >= v2);

    CHECK_THROWS_AS(project_2d({fps[0], fps[1]}), ArgumentError);
}

TEST_CASE("rank-deficient sets are flagged degenerate") {
    // three points on a line in feature space
    std::vector<Fingerprint> fps;
    for (int i = 0; i < 3; ++i) {
        Fingerprint fp;
        fp.base_image_id = "b";
        fp.protection_label = "l";
        for (std::size_t d = 0; d < fp.vector.size(); ++d) fp.vector[d] = double(i) * (d + 1);
        fps.push_back(fp);
    }
    const Embedding2D emb = project_2d(fps);
    CHECK(emb.degenerate);
    for (const auto& pt : emb.points) CHECK(pt[1] == 0.0);
}
