// Command-line front end. Talks to the core exclusively through the shared
// C API; all it does is assemble a JSON run configuration from flags.

#include "perturbscope.h"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <optional>
#include <string>

using nlohmann::json;

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> workers;
    std::optional<double> threshold;
    std::optional<std::string> reconstructor;
    std::optional<int> window;
    std::optional<int> stride;
    std::optional<std::string> overlap;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON run configuration file");
    cmd->add_option("--seed", f.seed, "master seed for all derived PRNG streams");
    cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_option("--workers", f.workers, "worker thread count")->check(CLI::PositiveNumber);
    cmd->add_option("--threshold", f.threshold, "detection threshold in bits");
    cmd->add_option("--reconstructor", f.reconstructor,
                    "oracle | paired | highpass | external:CMD");
    cmd->add_option("--window", f.window, "occlusion window size")->check(CLI::PositiveNumber);
    cmd->add_option("--stride", f.stride, "occlusion stride")->check(CLI::PositiveNumber);
    cmd->add_option("--overlap", f.overlap, "occlusion overlap mode")
        ->check(CLI::IsMember({"overwrite", "average"}));
}

json build_config(const CommonFlags& f) {
    json cfg = json::object();
    if (!f.config_path.empty()) {
        std::ifstream in(f.config_path);
        if (!in) {
            std::fprintf(stderr, "error: cannot open config file %s\n", f.config_path.c_str());
            std::exit(2);
        }
        cfg = json::parse(in, nullptr, /*allow_exceptions=*/false);
        if (cfg.is_discarded()) {
            std::fprintf(stderr, "error: %s is not valid JSON\n", f.config_path.c_str());
            std::exit(2);
        }
    }
    if (f.seed) cfg["master_seed"] = *f.seed;
    if (f.out_dir) cfg["out_dir"] = *f.out_dir;
    if (f.workers) {
        cfg["workers"] = *f.workers;
    } else if (!cfg.contains("workers")) {
        if (const char* env = std::getenv("PERTURBSCOPE_WORKERS")) {
            const int w = std::atoi(env);
            if (w >= 1) cfg["workers"] = w;
        }
    }
    if (f.threshold) cfg["detection"]["threshold"] = *f.threshold;
    if (f.reconstructor) {
        const std::string& r = *f.reconstructor;
        if (r.starts_with("external:")) {
            cfg["detection"]["reconstructor"] = "external";
            cfg["detection"]["external_cmd"] = r.substr(9);
        } else {
            cfg["detection"]["reconstructor"] = r;
        }
    }
    if (f.window) cfg["occlusion"]["window"] = *f.window;
    if (f.stride) cfg["occlusion"]["stride"] = *f.stride;
    if (f.overlap) cfg["occlusion"]["overlap"] = *f.overlap;
    return cfg;
}

struct RunDeleter {
    void operator()(ps_run* r) const { ps_run_destroy(r); }
};
using RunPtr = std::unique_ptr<ps_run, RunDeleter>;

RunPtr open_run(const json& cfg) {
    ps_run* raw = nullptr;
    if (ps_run_create(cfg.dump().c_str(), &raw) != PS_OK) {
        std::fprintf(stderr, "error: %s\n", ps_last_error());
        std::exit(2);
    }
    return RunPtr(raw);
}

int check(ps_status st) {
    if (st == PS_OK) return 0;
    std::fprintf(stderr, "error: %s\n", ps_last_error());
    return st == PS_ERR_ARGUMENT ? 2 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"black-box forensics for adversarial image perturbations"};
    app.set_version_flag("--version", ps_version());
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate the mask x noise x lightness grid");
    CommonFlags synth_flags;
    std::string base_image;
    add_common_flags(synth, synth_flags);
    synth->add_option("--base", base_image, "base image PNG (overrides config)");

    // analyze-pair
    auto* analyze = app.add_subcommand("analyze-pair", "full analysis of one clean/perturbed pair");
    CommonFlags analyze_flags;
    std::string ap_clean, ap_perturbed, ap_id = "pair";
    std::string ap_oracle_delta;
    add_common_flags(analyze, analyze_flags);
    analyze->add_option("clean", ap_clean, "clean PNG")->required();
    analyze->add_option("perturbed", ap_perturbed, "perturbed PNG")->required();
    analyze->add_option("--id", ap_id, "pair identifier used for output paths");
    analyze->add_option("--oracle-delta", ap_oracle_delta,
                        "ground-truth delta PMAP for the oracle reconstructor");

    // batch
    auto* batch = app.add_subcommand("batch", "analyze a grid or a directory of pairs");
    CommonFlags batch_flags;
    std::string batch_grid, batch_pairs;
    add_common_flags(batch, batch_flags);
    batch->add_option("--grid", batch_grid, "grid_manifest.json from a synth run");
    batch->add_option("--pairs", batch_pairs, "directory of <id>_clean.png / <id>_perturbed.png");

    // report
    auto* report = app.add_subcommand("report", "render a static HTML report for a run");
    std::string report_dir, report_out = "report.html";
    report->add_option("run_dir", report_dir, "completed run directory")->required();
    report->add_option("--out", report_out, "output HTML path");

    // detect
    auto* det = app.add_subcommand("detect", "entropy-based perturbation detection");
    CommonFlags det_flags;
    std::string det_image, det_delta_out, det_oracle_delta, det_clean_ref;
    add_common_flags(det, det_flags);
    det->add_option("image", det_image, "image PNG")->required();
    det->add_option("--delta-out", det_delta_out, "persist the reconstructed delta as PMAP");
    det->add_option("--oracle-delta", det_oracle_delta, "ground-truth delta PMAP (oracle)");
    det->add_option("--clean-ref", det_clean_ref, "clean reference PNG (paired)");

    // purify
    auto* pur = app.add_subcommand("purify", "reconstruct-and-subtract purification");
    CommonFlags pur_flags;
    std::string pur_image, pur_out, pur_oracle_delta, pur_clean_ref;
    add_common_flags(pur, pur_flags);
    pur->add_option("image", pur_image, "image PNG")->required();
    pur->add_option("output", pur_out, "purified PNG path")->required();
    pur->add_option("--oracle-delta", pur_oracle_delta, "ground-truth delta PMAP (oracle)");
    pur->add_option("--clean-ref", pur_clean_ref, "clean reference PNG (paired)");

    CLI11_PARSE(app, argc, argv);

    if (synth->parsed()) {
        json cfg = build_config(synth_flags);
        if (!base_image.empty()) cfg["synthesis"]["base_image"] = base_image;
        RunPtr run = open_run(cfg);
        return check(ps_run_synth(run.get()));
    }

    if (analyze->parsed()) {
        json cfg = build_config(analyze_flags);
        if (!ap_oracle_delta.empty()) cfg["detection"]["oracle_delta"] = ap_oracle_delta;
        RunPtr run = open_run(cfg);
        return check(ps_run_analyze_pair(run.get(), ap_clean.c_str(), ap_perturbed.c_str(),
                                         ap_id.c_str()));
    }

    if (batch->parsed()) {
        json cfg = build_config(batch_flags);
        if (!batch_grid.empty()) cfg["grid_manifest"] = batch_grid;
        if (!batch_pairs.empty()) cfg["pairs_dir"] = batch_pairs;
        RunPtr run = open_run(cfg);
        size_t failed = 0;
        const int rc = check(ps_run_batch(run.get(), &failed));
        if (rc != 0) return rc;
        if (failed > 0) {
            std::fprintf(stderr, "batch finished with %zu failed sample(s); see the run output\n",
                         failed);
            return 1;
        }
        return 0;
    }

    if (report->parsed()) return check(ps_report(report_dir.c_str(), report_out.c_str()));

    if (det->parsed()) {
        json cfg = build_config(det_flags);
        if (!det_oracle_delta.empty()) cfg["detection"]["oracle_delta"] = det_oracle_delta;
        if (!det_clean_ref.empty()) cfg["detection"]["clean_ref"] = det_clean_ref;
        RunPtr run = open_run(cfg);
        ps_detection result{};
        const int rc = check(ps_detect_file(run.get(), det_image.c_str(),
                                            det_delta_out.empty() ? nullptr : det_delta_out.c_str(),
                                            &result));
        if (rc != 0) return rc;
        std::printf("entropy_bits=%.6f threshold_bits=%.6f detected=%s\n", result.entropy_bits,
                    result.threshold_bits, result.detected ? "yes" : "no");
        return result.detected ? 0 : 3; // distinct exit code for "clean"
    }

    if (pur->parsed()) {
        json cfg = build_config(pur_flags);
        if (!pur_oracle_delta.empty()) cfg["detection"]["oracle_delta"] = pur_oracle_delta;
        if (!pur_clean_ref.empty()) cfg["detection"]["clean_ref"] = pur_clean_ref;
        RunPtr run = open_run(cfg);
        return check(ps_purify_file(run.get(), pur_image.c_str(), pur_out.c_str()));
    }

    return 2;
}
