#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "perturbscope/errors.hpp"
#include "perturbscope/pipeline.hpp"
#include "perturbscope/pmap.hpp"
#include "perturbscope/png_io.hpp"

#include "oracles.hpp"

#include <filesystem>
#include <fmt/format.h>
#include <fstream>

using namespace ps;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const char* tag) {
        path = fs::temp_directory_path() / (std::string("ps-pipe-") + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string write_base_png(const fs::path& dir, int h = 64, int w = 64) {
    ImageU8 base = oracle::random_u8(h, w, 3, 12345);
    for (std::uint8_t& v : base.data) v = std::uint8_t(10 + (v % 207)); // headroom, no clipping
    const std::string path = (dir / "base.png").string();
    save_png(base, path);
    return path;
}

RunConfig small_grid_config(const fs::path& dir, int workers) {
    RunConfig cfg;
    cfg.master_seed = 7;
    cfg.out_dir = (dir / "run").string();
    cfg.workers = workers;
    cfg.synthesis.base_image = write_base_png(dir);
    cfg.synthesis.masks = {"uniform", "clouds2"};
    cfg.synthesis.noises = {"gauss", "glazed"};
    cfg.synthesis.lightness_levels = {0.2, 0.6};
    cfg.occlusion.window = 16;
    cfg.occlusion.stride = 8;
    cfg.detection.threshold = 0.07;
    cfg.detection.threshold_explicit = true;
    return cfg;
}

json read_json(const fs::path& path) {
    std::ifstream f(path);
    REQUIRE(f.good());
    return json::parse(f);
}

} // namespace

TEST_CASE("RunConfig JSON round trip") {
    RunConfig cfg;
    cfg.master_seed = 99;
    cfg.out_dir = "somewhere";
    cfg.workers = 3;
    cfg.synthesis.base_image = "b.png";
    cfg.synthesis.masks = {"radial"};
    cfg.synthesis.lightness_levels = {0.25, 0.75};
    cfg.synthesis.residual_pairs["glaze"] = {"c.png", "p.png"};
    cfg.occlusion.window = 24;
    cfg.occlusion.overlap = OverlapMode::Average;
    cfg.detection.threshold = 0.5;
    cfg.detection.threshold_explicit = true;
    cfg.detection.reconstructor = "highpass";

    const RunConfig back = RunConfig::from_json(cfg.to_json());
    CHECK(back.master_seed == 99);
    CHECK(back.out_dir == "somewhere");
    CHECK(back.workers == 3);
    CHECK(back.synthesis.masks == std::vector<std::string>{"radial"});
    CHECK(back.synthesis.residual_pairs.at("glaze").second == "p.png");
    CHECK(back.occlusion.window == 24);
    CHECK(back.occlusion.overlap == OverlapMode::Average);
    CHECK(back.detection.threshold == 0.5);
    CHECK(back.detection.threshold_explicit);
    CHECK(back.detection.reconstructor == "highpass");
    CHECK_FALSE(back.timestamp.has_value());
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS(RunConfig::from_json(json{{"workers", 0}}), ArgumentError);
    CHECK_THROWS_AS(RunConfig::from_json(json{{"occlusion", {{"overlap", "sometimes"}}}}),
                    ArgumentError);
    RunConfig empty;
    empty.synthesis.base_image.clear();
    CHECK_THROWS_AS(cmd_synth(empty), ArgumentError);
}

TEST_CASE("synth writes the grid with per-combo artifacts and a manifest") {
    TempDir tmp("synth");
    const RunConfig cfg = small_grid_config(tmp.path, 2);
    const auto rows = cmd_synth(cfg);
    REQUIRE(rows.size() == 2 * 2 * 2);

    for (const auto& row : rows) {
        const fs::path img = fs::path(cfg.out_dir) / row.image_path;
        const fs::path delta = fs::path(cfg.out_dir) / row.delta_path;
        REQUIRE(fs::exists(img));
        REQUIRE(fs::exists(delta));
        const ImageU8 perturbed = load_png(img.string());
        CHECK(perturbed.height == 64);
        const ImageF32 d = load_pmap(delta.string());
        CHECK(d.height == 64);
        CHECK(row.seed != 0);
    }

    const json gm = read_json(fs::path(cfg.out_dir) / "grid_manifest.json");
    CHECK(gm.at("rows").size() == rows.size());
    CHECK(gm.at("base_image").get<std::string>() == cfg.synthesis.base_image);

    const json manifest = read_json(fs::path(cfg.out_dir) / "manifest.json");
    CHECK_FALSE(manifest.contains("timestamp"));
    for (const auto& a : manifest.at("artifacts")) {
        const fs::path p = fs::path(cfg.out_dir) / a.at("path").get<std::string>();
        CHECK(sha256_file(p.string()) == a.at("sha256").get<std::string>());
    }
}

TEST_CASE("synth is deterministic across reruns and worker counts") {
    TempDir tmp_a("synth-a"), tmp_b("synth-b");
    RunConfig a = small_grid_config(tmp_a.path, 1);
    RunConfig b = small_grid_config(tmp_b.path, 4);
    b.master_seed = a.master_seed;
    const auto rows_a = cmd_synth(a);
    const auto rows_b = cmd_synth(b);
    REQUIRE(rows_a.size() == rows_b.size());
    for (std::size_t i = 0; i < rows_a.size(); ++i) {
        CHECK(sha256_file((fs::path(a.out_dir) / rows_a[i].image_path).string()) ==
              sha256_file((fs::path(b.out_dir) / rows_b[i].image_path).string()));
        CHECK(sha256_file((fs::path(a.out_dir) / rows_a[i].delta_path).string()) ==
              sha256_file((fs::path(b.out_dir) / rows_b[i].delta_path).string()));
    }
}

TEST_CASE("analyze-pair emits the full artifact set") {
    TempDir tmp("pair");
    RunConfig cfg;
    cfg.out_dir = (tmp.path / "run").string();
    cfg.occlusion.window = 8;
    cfg.occlusion.stride = 8;
    cfg.detection.reconstructor = "paired";
    cfg.detection.threshold = 0.07;
    cfg.detection.threshold_explicit = true;

    const std::string clean_path = write_base_png(tmp.path, 32, 32);
    ImageU8 perturbed = load_png(clean_path);
    Rng rng(5);
    for (std::uint8_t& v : perturbed.data)
        v = std::uint8_t(std::clamp(int(v) + int(rng.gaussian(0.0, 6.0)), 0, 255));
    const std::string pert_path = (tmp.path / "perturbed.png").string();
    save_png(perturbed, pert_path);

    const PairAnalysis res = cmd_analyze_pair(cfg, clean_path, pert_path, "demo");
    CHECK(res.pair_id == "demo");
    CHECK(res.detection.reconstructor_id == "paired");
    CHECK(res.detection.detected); // real noise has high residual entropy

    const fs::path dir = fs::path(cfg.out_dir) / "pairs" / "demo";
    for (const char* name :
         {"occlusion.pmap", "occlusion.png", "occlusion.json", "spectrum_clean.pmap",
          "spectrum_perturbed.pmap", "spectral_diff.pmap", "spectrum_perturbed.png",
          "spectral_diff.png", "radial_clean.csv", "radial_perturbed.csv", "delta_hat.pmap",
          "detection.json"})
        CHECK(fs::exists(dir / name));

    const json det = read_json(dir / "detection.json");
    CHECK(det.at("entropy_bits").get<double>() == res.detection.entropy);

    std::ifstream csv(dir / "radial_clean.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "radius,magnitude,ring_size,empty_flag");
}

TEST_CASE("batch over a grid: summaries, fingerprints, aggregates, report") {
    TempDir tmp("batch");
    RunConfig cfg = small_grid_config(tmp.path, 2);
    cmd_synth(cfg);

    RunConfig bcfg = cfg;
    bcfg.out_dir = (tmp.path / "analysis").string();
    bcfg.grid_manifest = (fs::path(cfg.out_dir) / "grid_manifest.json").string();
    const BatchResult res = cmd_batch(bcfg);
    CHECK(res.failures.empty());
    CHECK(res.analyses.size() == 8);

    const fs::path out(bcfg.out_dir);
    for (const char* name : {"detections.csv", "summary.csv", "fingerprints.csv", "embedding.csv",
                             "embedding.svg", "manifest.json"})
        CHECK(fs::exists(out / name));
    CHECK(fs::exists(out / "aggregates" / "gauss.png"));
    CHECK(fs::exists(out / "aggregates" / "glazed.pmap"));

    // summary has the three grid blocks
    std::ifstream f(out / "summary.csv");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(text.find("mask,uniform") != std::string::npos);
    CHECK(text.find("noise,gauss") != std::string::npos);
    CHECK(text.find("lightness,0.20") != std::string::npos);

    // report renders and honors its manifest check
    const fs::path report = tmp.path / "report.html";
    cmd_report(bcfg.out_dir, report.string());
    REQUIRE(fs::exists(report));
    std::ifstream rf(report);
    std::string html((std::istreambuf_iterator<char>(rf)), std::istreambuf_iterator<char>());
    CHECK(html.find("Per-sample detection results") != std::string::npos);
    CHECK(html.find("<svg") != std::string::npos);

    fs::remove(out / "summary.csv");
    CHECK_THROWS_AS(cmd_report(bcfg.out_dir, report.string()), IoError);
}

TEST_CASE("batch over a pairs directory with labels") {
    TempDir tmp("pairsdir");
    const fs::path pairs = tmp.path / "pairs";
    fs::create_directories(pairs);

    Rng rng(3);
    for (int i = 0; i < 3; ++i) {
        ImageU8 clean = oracle::random_u8(32, 32, 3, 50 + std::uint64_t(i));
        ImageU8 pert = clean;
        for (std::uint8_t& v : pert.data)
            v = std::uint8_t(std::clamp(int(v) + int(rng.gaussian(0.0, 5.0)), 0, 255));
        save_png(clean, (pairs / fmt::format("s{}_clean.png", i)).string());
        save_png(pert, (pairs / fmt::format("s{}_perturbed.png", i)).string());
    }
    {
        std::ofstream lf(pairs / "labels.json");
        lf << R"({"s0": "toolA", "s1": "toolA", "s2": "toolB"})";
    }

    RunConfig cfg;
    cfg.out_dir = (tmp.path / "analysis").string();
    cfg.pairs_dir = pairs.string();
    cfg.occlusion.window = 8;
    cfg.occlusion.stride = 8;
    cfg.detection.reconstructor = "paired";
    cfg.detection.threshold = 0.07;
    cfg.detection.threshold_explicit = true;

    const BatchResult res = cmd_batch(cfg);
    CHECK(res.failures.empty());
    REQUIRE(res.analyses.size() == 3);
    CHECK(res.analyses[0].label == "toolA");
    CHECK(res.analyses[2].label == "toolB");
    CHECK(fs::exists(fs::path(cfg.out_dir) / "aggregates" / "toolA.png"));

    std::ifstream f(fs::path(cfg.out_dir) / "summary.csv");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    CHECK(text.find("label,toolA,2,") != std::string::npos);
    CHECK(text.find("label,toolB,1,") != std::string::npos);
}

TEST_CASE("batch records individual sample failures without aborting") {
    TempDir tmp("fail");
    const fs::path pairs = tmp.path / "pairs";
    fs::create_directories(pairs);
    const ImageU8 clean = oracle::random_u8(32, 32, 1, 1);
    save_png(clean, (pairs / "ok_clean.png").string());
    save_png(clean, (pairs / "ok_perturbed.png").string());
    save_png(clean, (pairs / "broken_clean.png").string());
    // broken_perturbed.png intentionally absent

    RunConfig cfg;
    cfg.out_dir = (tmp.path / "analysis").string();
    cfg.pairs_dir = pairs.string();
    cfg.occlusion.window = 8;
    cfg.occlusion.stride = 8;
    cfg.detection.reconstructor = "paired";
    cfg.detection.threshold = 0.07;
    cfg.detection.threshold_explicit = true;

    const BatchResult res = cmd_batch(cfg);
    REQUIRE(res.failures.size() == 1);
    CHECK(res.failures[0].find("broken") != std::string::npos);
    CHECK(res.analyses.size() == 1);
}

TEST_CASE("single-image detect and purify") {
    TempDir tmp("single");
    const std::string img_path = write_base_png(tmp.path, 32, 32);

    RunConfig cfg;
    cfg.detection.reconstructor = "highpass";
    cfg.detection.threshold = 0.07;
    cfg.detection.threshold_explicit = true;

    const std::string delta_out = (tmp.path / "delta.pmap").string();
    const DetectionResult res = cmd_detect(cfg, img_path, delta_out);
    CHECK(res.reconstructor_id == "highpass");
    CHECK(fs::exists(delta_out));
    const ImageF32 delta = load_pmap(delta_out);
    CHECK(delta.height == 32);

    const std::string purified = (tmp.path / "purified.png").string();
    cmd_purify(cfg, img_path, purified);
    CHECK(fs::exists(purified));
    CHECK(load_png(purified).height == 32);
}

TEST_CASE("render helpers cover the full output range") {
    ImageF32 plane(2, 2, 1);
    plane.data = {-1.0f, 0.0f, 0.5f, 1.0f};
    const ImageU8 gray = render_plane_grayscale(plane);
    CHECK(gray.data[0] == 0);
    CHECK(gray.data[3] == 255);

    const ImageU8 signed_img = render_signed_plane(plane);
    CHECK(signed_img.channels == 3);
    CHECK(signed_img.at(0, 0, 2) == 255); // most negative is full blue
    CHECK(signed_img.at(1, 1, 0) == 255); // most positive is full red
    CHECK(signed_img.at(0, 1, 0) == 0);
    CHECK(signed_img.at(0, 1, 2) == 0);
}
