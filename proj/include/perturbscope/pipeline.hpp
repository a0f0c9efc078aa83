#pragma once

#include "perturbscope/detection.hpp"
#include "perturbscope/occlusion.hpp"
#include "perturbscope/synthesis.hpp"

#include "json.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ps {

struct DetectionParams {
    double threshold = kDefaultDetectionThreshold;
    bool threshold_explicit = false; // CLI/config set it; silences the calibration warning
    int bins = 256;
    std::string reconstructor = "oracle"; // oracle | paired | highpass | external
    std::string external_cmd;
    double timeout_seconds = 120.0;
    std::string oracle_delta; // PMAP path for single-image detect/purify
    std::string clean_ref;    // PNG path for the paired reconstructor
};

struct SynthesisConfig {
    std::string base_image; // PNG path
    std::vector<std::string> masks;     // empty = all six
    std::vector<std::string> noises;    // empty = all six
    std::vector<double> lightness_levels = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
    SynthParams params;
    // label ("glaze" | "shade" | "shade-glaze") -> {clean_png, perturbed_png}.
    // When absent, deterministic stand-in pairs are synthesized from the base.
    std::map<std::string, std::pair<std::string, std::string>> residual_pairs;
};

struct RunConfig {
    std::uint64_t master_seed = 42;
    std::string out_dir = "out";
    int workers = 4;
    SynthesisConfig synthesis;
    OcclusionConfig occlusion;
    DetectionParams detection;
    std::string pairs_dir;      // batch input: directory of <id>_clean.png / <id>_perturbed.png
    std::string grid_manifest;  // batch input: manifest from a synth run
    std::optional<std::string> timestamp; // only recorded when supplied; keeps reruns byte-identical

    static RunConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct GridRow {
    std::string mask;
    std::string noise;
    double lightness = 0.0;
    std::uint64_t seed = 0;
    std::string image_path; // relative to out_dir
    std::string delta_path;
};

struct ManifestEntry {
    std::string stage;
    std::string input_ids;
    std::string output_path; // relative to out_dir
    std::string sha256;
};

std::string sha256_file(const std::string& path);

// synth: full mask x noise x lightness grid plus grid_manifest.json and the
// run manifest. Fails on the first failing combination, naming it.
std::vector<GridRow> cmd_synth(const RunConfig& cfg);

struct PairAnalysis {
    std::string pair_id;
    std::string label;
    DetectionResult detection;
};

// analyze-pair: occlusion map, spectra, spectral difference, radial profiles
// and detection result for one clean/perturbed pair, under out_dir/<pair_id>/.
PairAnalysis cmd_analyze_pair(const RunConfig& cfg, const std::string& clean_path,
                              const std::string& perturbed_path, const std::string& pair_id);

struct BatchResult {
    std::vector<PairAnalysis> analyses;
    std::vector<std::string> failures; // human-readable, one per failed sample
};

// batch: per-pair analyses, Table-style marginal summaries, fingerprint
// embedding, aggregate sensitivity maps, manifest.
BatchResult cmd_batch(const RunConfig& cfg);

// report: self-contained static HTML over a completed run directory.
void cmd_report(const std::string& run_dir, const std::string& out_path);

DetectionResult cmd_detect(const RunConfig& cfg, const std::string& image_path,
                           const std::string& delta_out_pmap);
void cmd_purify(const RunConfig& cfg, const std::string& image_path, const std::string& out_png);

// visualization helpers (also used by tests)
ImageU8 render_plane_grayscale(const ImageF32& plane);            // min-max to 8-bit
ImageU8 render_signed_plane(const ImageF32& plane);               // negative=blue, positive=red

} // namespace ps
