#include "perturbscope/pipeline.hpp"

#include "perturbscope/errors.hpp"
#include "perturbscope/fingerprint.hpp"
#include "perturbscope/pmap.hpp"
#include "perturbscope/png_io.hpp"
#include "perturbscope/rng.hpp"
#include "perturbscope/spectral.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace ps {

// ------------------------------------------------------------------- config

static OverlapMode parse_overlap(const std::string& s) {
    if (s == "overwrite") return OverlapMode::Overwrite;
    if (s == "average") return OverlapMode::Average;
    throw ArgumentError("unknown overlap mode: " + s);
}

static std::string overlap_name(OverlapMode m) {
    return m == OverlapMode::Overwrite ? "overwrite" : "average";
}

static UpscaleFilter parse_upscale(const std::string& s) {
    if (s == "bilinear-smooth") return UpscaleFilter::BilinearSmooth;
    if (s == "bilinear") return UpscaleFilter::Bilinear;
    if (s == "nearest") return UpscaleFilter::Nearest;
    throw ArgumentError("unknown upscale filter: " + s);
}

static std::string upscale_name(UpscaleFilter f) {
    switch (f) {
        case UpscaleFilter::BilinearSmooth: return "bilinear-smooth";
        case UpscaleFilter::Bilinear: return "bilinear";
        case UpscaleFilter::Nearest: return "nearest";
    }
    return "bilinear-smooth";
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    c.master_seed = j.value("master_seed", std::uint64_t(42));
    c.out_dir = j.value("out_dir", std::string("out"));
    c.workers = j.value("workers", 4);
    if (c.workers < 1) throw ArgumentError("config: workers must be >= 1");
    c.pairs_dir = j.value("pairs_dir", std::string());
    c.grid_manifest = j.value("grid_manifest", std::string());
    if (j.contains("timestamp")) c.timestamp = j.at("timestamp").get<std::string>();

    if (j.contains("synthesis")) {
        const json& s = j.at("synthesis");
        c.synthesis.base_image = s.value("base_image", std::string());
        c.synthesis.masks = s.value("masks", std::vector<std::string>{});
        c.synthesis.noises = s.value("noises", std::vector<std::string>{});
        c.synthesis.lightness_levels =
            s.value("lightness", c.synthesis.lightness_levels);
        SynthParams& p = c.synthesis.params;
        p.gauss_mean = s.value("gauss_mean", p.gauss_mean);
        p.gauss_sigma = s.value("gauss_sigma", p.gauss_sigma);
        p.upscale = parse_upscale(s.value("upscale", upscale_name(p.upscale)));
        p.smooth_factor = s.value("smooth_factor", p.smooth_factor);
        p.perlin_hi_cells = s.value("perlin_hi_cells", p.perlin_hi_cells);
        p.perlin_low_cells = s.value("perlin_low_cells", p.perlin_low_cells);
        p.clouds_cells = s.value("clouds_cells", p.clouds_cells);
        p.clouds_octaves = s.value("clouds_octaves", p.clouds_octaves);
        p.clouds_persistence = s.value("clouds_persistence", p.clouds_persistence);
        p.directional_angle_deg = s.value("directional_angle_deg", p.directional_angle_deg);
        p.master_opacity = s.value("master_opacity", p.master_opacity);
        if (s.contains("residual_pairs"))
            for (const auto& [label, paths] : s.at("residual_pairs").items())
                c.synthesis.residual_pairs[label] = {paths.at(0).get<std::string>(),
                                                     paths.at(1).get<std::string>()};
    }
    if (j.contains("occlusion")) {
        const json& o = j.at("occlusion");
        c.occlusion.window = o.value("window", c.occlusion.window);
        c.occlusion.stride = o.value("stride", c.occlusion.stride);
        c.occlusion.baseline_value = o.value("baseline", c.occlusion.baseline_value);
        c.occlusion.overlap = parse_overlap(o.value("overlap", overlap_name(c.occlusion.overlap)));
    }
    if (j.contains("detection")) {
        const json& d = j.at("detection");
        if (d.contains("threshold")) {
            c.detection.threshold = d.at("threshold").get<double>();
            c.detection.threshold_explicit = true;
        }
        c.detection.bins = d.value("bins", c.detection.bins);
        c.detection.reconstructor = d.value("reconstructor", c.detection.reconstructor);
        c.detection.external_cmd = d.value("external_cmd", c.detection.external_cmd);
        c.detection.timeout_seconds = d.value("timeout_seconds", c.detection.timeout_seconds);
        c.detection.oracle_delta = d.value("oracle_delta", c.detection.oracle_delta);
        c.detection.clean_ref = d.value("clean_ref", c.detection.clean_ref);
    }
    return c;
}

json RunConfig::to_json() const {
    json s;
    s["base_image"] = synthesis.base_image;
    s["masks"] = synthesis.masks;
    s["noises"] = synthesis.noises;
    s["lightness"] = synthesis.lightness_levels;
    s["gauss_mean"] = synthesis.params.gauss_mean;
    s["gauss_sigma"] = synthesis.params.gauss_sigma;
    s["upscale"] = upscale_name(synthesis.params.upscale);
    s["smooth_factor"] = synthesis.params.smooth_factor;
    s["perlin_hi_cells"] = synthesis.params.perlin_hi_cells;
    s["perlin_low_cells"] = synthesis.params.perlin_low_cells;
    s["clouds_cells"] = synthesis.params.clouds_cells;
    s["clouds_octaves"] = synthesis.params.clouds_octaves;
    s["clouds_persistence"] = synthesis.params.clouds_persistence;
    s["directional_angle_deg"] = synthesis.params.directional_angle_deg;
    s["master_opacity"] = synthesis.params.master_opacity;
    json rp = json::object();
    for (const auto& [label, paths] : synthesis.residual_pairs)
        rp[label] = {paths.first, paths.second};
    s["residual_pairs"] = rp;

    json o;
    o["window"] = occlusion.window;
    o["stride"] = occlusion.stride;
    o["baseline"] = occlusion.baseline_value;
    o["overlap"] = overlap_name(occlusion.overlap);

    json d;
    if (detection.threshold_explicit) d["threshold"] = detection.threshold;
    d["bins"] = detection.bins;
    d["reconstructor"] = detection.reconstructor;
    d["external_cmd"] = detection.external_cmd;
    d["timeout_seconds"] = detection.timeout_seconds;
    d["oracle_delta"] = detection.oracle_delta;
    d["clean_ref"] = detection.clean_ref;

    json j;
    j["master_seed"] = master_seed;
    j["out_dir"] = out_dir;
    j["workers"] = workers;
    j["pairs_dir"] = pairs_dir;
    j["grid_manifest"] = grid_manifest;
    if (timestamp) j["timestamp"] = *timestamp;
    j["synthesis"] = s;
    j["occlusion"] = o;
    j["detection"] = d;
    return j;
}

// ------------------------------------------------------------------- digest

std::string sha256_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("sha256: cannot open " + path);
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[65536];
    while (f) {
        f.read(buf, sizeof(buf));
        EVP_DigestUpdate(ctx, buf, std::size_t(f.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    hex.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

// ----------------------------------------------------------------- utilities

namespace {

constexpr const char* kToolVersion = "0.1.0";

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    const int k = std::max(1, std::min<int>(workers, int(n)));
    if (k == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (int t = 0; t < k; ++t)
        threads.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    for (auto& th : threads) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

std::string fmt_double(double v) { return fmt::format("{}", v); }

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path.string());
    f << text;
    if (!f) throw IoError("write failed: " + path.string());
}

class Manifest {
public:
    Manifest(const RunConfig& cfg) : cfg_(cfg) {}

    void add(std::string stage, std::string input_ids, std::string rel_path) {
        std::lock_guard<std::mutex> lock(mutex_);
        entries_.push_back({std::move(stage), std::move(input_ids), std::move(rel_path), ""});
    }

    // Digest pass runs single-threaded after all workers complete.
    void finalize_and_write() {
        std::sort(entries_.begin(), entries_.end(),
                  [](const ManifestEntry& a, const ManifestEntry& b) {
                      return a.output_path < b.output_path;
                  });
        for (auto& e : entries_)
            e.sha256 = sha256_file((fs::path(cfg_.out_dir) / e.output_path).string());

        json rows = json::array();
        for (const auto& e : entries_) {
            json r;
            r["stage"] = e.stage;
            r["inputs"] = e.input_ids;
            r["path"] = e.output_path;
            r["sha256"] = e.sha256;
            rows.push_back(r);
        }
        json m;
        m["tool_version"] = kToolVersion;
        m["config"] = cfg_.to_json();
        if (cfg_.timestamp) m["timestamp"] = *cfg_.timestamp;
        m["artifacts"] = rows;
        write_text(fs::path(cfg_.out_dir) / "manifest.json", m.dump(2) + "\n");
    }

private:
    const RunConfig& cfg_;
    std::mutex mutex_;
    std::vector<ManifestEntry> entries_;
};

ImageF32 load_png_f32(const std::string& path) { return u8_to_f32(load_png(path)); }

PairedSample load_pair(const std::string& clean_path, const std::string& perturbed_path,
                       const std::string& label) {
    ImageF32 clean = load_png_f32(clean_path);
    ImageF32 perturbed = load_png_f32(perturbed_path);
    if (!clean.same_dims(perturbed))
        throw ArgumentError(fmt::format("pair rejected: {} and {} have different dimensions",
                                        clean_path, perturbed_path));
    return PairedSample(std::move(clean), std::move(perturbed), label);
}

} // namespace

// ----------------------------------------------------------- visualizations

ImageU8 render_plane_grayscale(const ImageF32& plane) {
    float mn = plane.data[0], mx = plane.data[0];
    for (float v : plane.data) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    ImageF32 norm(plane.height, plane.width, 1);
    if (mx > mn)
        for (std::size_t i = 0; i < plane.data.size(); ++i)
            norm.data[i] = (plane.data[i] - mn) / (mx - mn);
    return f32_to_u8(norm);
}

ImageU8 render_signed_plane(const ImageF32& plane) {
    float amax = 0.0f;
    for (float v : plane.data) amax = std::max(amax, std::abs(v));
    ImageU8 out(plane.height, plane.width, 3);
    const std::size_t n = plane.data.size();
    for (std::size_t i = 0; i < n; ++i) {
        const float t = amax > 0 ? plane.data[i] / amax : 0.0f; // [-1,1]
        const float pos = std::max(t, 0.0f), neg = std::max(-t, 0.0f);
        out.data[i * 3 + 0] = std::uint8_t(std::floor(pos * 255.0f + 0.5f));
        out.data[i * 3 + 1] = 0;
        out.data[i * 3 + 2] = std::uint8_t(std::floor(neg * 255.0f + 0.5f));
    }
    return out;
}

// ------------------------------------------------------------ reconstructors

namespace {

std::unique_ptr<Reconstructor> make_reconstructor(const DetectionParams& d,
                                                  const std::string& oracle_delta_path) {
    if (d.reconstructor == "oracle") {
        const std::string path = !oracle_delta_path.empty() ? oracle_delta_path : d.oracle_delta;
        if (path.empty())
            throw ArgumentError("oracle reconstructor requires a ground-truth delta PMAP");
        return std::make_unique<OracleReconstructor>(load_pmap(path));
    }
    if (d.reconstructor == "paired") return std::make_unique<PairedDiffReconstructor>();
    if (d.reconstructor == "highpass") return std::make_unique<HighPassResidualReconstructor>();
    if (d.reconstructor == "external") {
        if (d.external_cmd.empty())
            throw ArgumentError("external reconstructor requires a command");
        return std::make_unique<ExternalReconstructor>(d.external_cmd, d.timeout_seconds);
    }
    throw ArgumentError("unknown reconstructor: " + d.reconstructor);
}

void maybe_warn_threshold(const DetectionParams& d) {
    if (!d.threshold_explicit && d.reconstructor != "external") {
        static std::once_flag warned;
        std::call_once(warned, [&] {
            std::cerr << "warning: the default detection threshold (0.07 bits) was calibrated "
                         "for an external learned reconstructor; built-in reconstructors use a "
                         "different entropy scale. Pass --threshold to silence this warning.\n";
        });
    }
}

} // namespace

// -------------------------------------------------------------------- synth

namespace {

ResidualSources prepare_residual_sources(const RunConfig& cfg, const ImageU8& base) {
    const auto& conf = cfg.synthesis.residual_pairs;
    ResidualSources src;

    auto from_config = [&](const char* label) -> std::optional<PairedSample> {
        auto it = conf.find(label);
        if (it == conf.end()) return std::nullopt;
        return load_pair(it->second.first, it->second.second, label);
    };
    src.glaze = from_config("glaze");
    src.shade = from_config("shade");
    src.shade_glaze = from_config("shade-glaze");

    // Stand-ins keep the default grid self-contained when no tool-protected
    // pairs are on hand: structured perturbations of the base itself.
    const SynthParams& p = cfg.synthesis.params;
    const ImageF32 base_f = u8_to_f32(base);
    auto standin = [&](const char* tag, MaskKind mk, NoiseKind nk) {
        const std::uint64_t seed = derive_seed(cfg.master_seed, fmt::format("standin/{}", tag));
        const Mask mask = mask_at_lightness(make_mask(mk, base.height, base.width, seed, p), 0.5);
        const NoiseField noise = make_noise(nk, base.height, base.width, seed + 1, nullptr, p);
        const ImageU8 pert = compose(base, noise, mask, p.master_opacity);
        return PairedSample(base_f, u8_to_f32(pert), std::string("standin-") + tag);
    };
    if (!src.glaze) src.glaze = standin("glaze", MaskKind::PerlinLow, NoiseKind::Gauss);
    if (!src.shade) src.shade = standin("shade", MaskKind::Clouds2, NoiseKind::Gauss2x);
    if (!src.shade_glaze) {
        // sequential: re-perturb the shade stand-in with the glaze recipe
        const std::uint64_t seed = derive_seed(cfg.master_seed, "standin/shade-glaze");
        const ImageU8 shaded = f32_to_u8(src.shade->perturbed);
        const Mask mask =
            mask_at_lightness(make_mask(MaskKind::PerlinLow, base.height, base.width, seed, p), 0.5);
        const NoiseField noise =
            make_noise(NoiseKind::Gauss, base.height, base.width, seed + 1, nullptr, p);
        src.shade_glaze =
            PairedSample(base_f, u8_to_f32(compose(shaded, noise, mask, p.master_opacity)),
                         "standin-shade-glaze");
    }
    return src;
}

std::vector<MaskKind> selected_masks(const SynthesisConfig& s) {
    if (s.masks.empty()) return all_mask_kinds();
    std::vector<MaskKind> out;
    for (const auto& name : s.masks) out.push_back(parse_mask_kind(name));
    return out;
}

std::vector<NoiseKind> selected_noises(const SynthesisConfig& s) {
    if (s.noises.empty()) return all_noise_kinds();
    std::vector<NoiseKind> out;
    for (const auto& name : s.noises) out.push_back(parse_noise_kind(name));
    return out;
}

std::string combo_id(MaskKind m, NoiseKind n, double lightness) {
    return fmt::format("{}_{}_L{:.2f}", mask_kind_name(m), noise_kind_name(n), lightness);
}

} // namespace

std::vector<GridRow> cmd_synth(const RunConfig& cfg) {
    if (cfg.synthesis.base_image.empty())
        throw ArgumentError("synth: config must name a base image");
    const ImageU8 base = load_png(cfg.synthesis.base_image);

    const auto masks = selected_masks(cfg.synthesis);
    const auto noises = selected_noises(cfg.synthesis);
    const auto& levels = cfg.synthesis.lightness_levels;
    if (masks.empty() || noises.empty() || levels.empty())
        throw ArgumentError("synth: empty grid");

    const ResidualSources sources = prepare_residual_sources(cfg, base);

    // one raw mask per kind per run, shared across the grid
    std::map<MaskKind, Mask> raw_masks;
    for (MaskKind mk : masks)
        raw_masks[mk] = make_mask(mk, base.height, base.width,
                                  derive_seed(cfg.master_seed, "mask/" + mask_kind_name(mk)),
                                  cfg.synthesis.params);

    struct Combo {
        MaskKind mask;
        NoiseKind noise;
        double lightness;
    };
    std::vector<Combo> combos;
    for (MaskKind mk : masks)
        for (NoiseKind nk : noises)
            for (double L : levels) combos.push_back({mk, nk, L});

    fs::create_directories(fs::path(cfg.out_dir) / "images");
    fs::create_directories(fs::path(cfg.out_dir) / "deltas");

    Manifest manifest(cfg);
    std::vector<GridRow> rows(combos.size());
    parallel_for(combos.size(), cfg.workers, [&](std::size_t i) {
        const Combo& c = combos[i];
        const std::string id = combo_id(c.mask, c.noise, c.lightness);
        try {
            const SynthOutput out =
                synthesize_one(base, raw_masks.at(c.mask), c.noise, c.lightness, cfg.master_seed,
                               sources, cfg.synthesis.params);
            GridRow row;
            row.mask = mask_kind_name(c.mask);
            row.noise = noise_kind_name(c.noise);
            row.lightness = c.lightness;
            row.seed = combo_seed(cfg.master_seed, c.mask, c.noise, c.lightness);
            row.image_path = "images/" + id + ".png";
            row.delta_path = "deltas/" + id + ".pmap";
            save_png(out.image, (fs::path(cfg.out_dir) / row.image_path).string());
            save_pmap(out.delta, (fs::path(cfg.out_dir) / row.delta_path).string());
            manifest.add("synth", id, row.image_path);
            manifest.add("synth", id, row.delta_path);
            rows[i] = std::move(row);
        } catch (const std::exception& e) {
            throw IoError(fmt::format("grid combination '{}' failed: {}", id, e.what()));
        }
    });

    json grid = json::array();
    for (const auto& r : rows) {
        json jr;
        jr["mask"] = r.mask;
        jr["noise"] = r.noise;
        jr["lightness"] = r.lightness;
        jr["seed"] = r.seed;
        jr["image_path"] = r.image_path;
        jr["delta_path"] = r.delta_path;
        grid.push_back(jr);
    }
    json gm;
    gm["base_image"] = cfg.synthesis.base_image;
    gm["rows"] = grid;
    write_text(fs::path(cfg.out_dir) / "grid_manifest.json", gm.dump(2) + "\n");
    manifest.add("synth", "grid", "grid_manifest.json");
    manifest.finalize_and_write();
    return rows;
}

// ------------------------------------------------------------- pair analysis

namespace {

struct SampleSpec {
    std::string pair_id;
    std::string label;
    std::string clean_path;
    std::string perturbed_path;
    std::string oracle_delta_path; // empty unless a grid ground truth exists
    std::string mask, noise;       // grid metadata, empty otherwise
    double lightness = -1.0;
};

struct SampleArtifacts {
    PairAnalysis analysis;
    Fingerprint fingerprint;
    SensitivityMap normalized_map;
};

std::string radial_csv(const RadialProfile& p) {
    std::string csv = "radius,magnitude,ring_size,empty_flag\n";
    for (int k = 0; k <= p.r_max(); ++k)
        csv += fmt::format("{},{},{},{}\n", k, fmt_double(p.magnitudes[std::size_t(k)]),
                           p.ring_sizes[std::size_t(k)], p.empty_ring(k) ? 1 : 0);
    return csv;
}

SampleArtifacts analyze_sample(const RunConfig& cfg, const SampleSpec& spec,
                               Manifest* manifest) {
    const PairedSample pair = load_pair(spec.clean_path, spec.perturbed_path, spec.label);
    const fs::path dir = fs::path(cfg.out_dir) / "pairs" / spec.pair_id;
    fs::create_directories(dir);
    auto rel = [&](const std::string& name) { return "pairs/" + spec.pair_id + "/" + name; };
    auto emit = [&](const std::string& name, const std::string& stage) {
        if (manifest) manifest->add(stage, spec.pair_id, rel(name));
    };

    // occlusion
    const SensitivityMap raw_map = sensitivity_map(pair, cfg.occlusion);
    const SensitivityMap norm_map = normalize_map(raw_map);
    save_pmap(norm_map.image, (dir / "occlusion.pmap").string());
    save_png(render_plane_grayscale(norm_map.image), (dir / "occlusion.png").string());
    const bool uncovered_border = (pair.clean.height - cfg.occlusion.window) % cfg.occlusion.stride != 0 ||
                                  (pair.clean.width - cfg.occlusion.window) % cfg.occlusion.stride != 0;
    json side;
    side["window"] = cfg.occlusion.window;
    side["stride"] = cfg.occlusion.stride;
    side["overlap"] = overlap_name(cfg.occlusion.overlap);
    side["normalized"] = true;
    side["uncovered_border"] = uncovered_border;
    write_text(dir / "occlusion.json", side.dump(2) + "\n");
    emit("occlusion.pmap", "occlusion");
    emit("occlusion.png", "occlusion");
    emit("occlusion.json", "occlusion");

    // spectra
    const PairFingerprint spectra = fingerprint_pair(pair);
    save_pmap(spectra.clean_spec.mag, (dir / "spectrum_clean.pmap").string());
    save_pmap(spectra.perturbed_spec.mag, (dir / "spectrum_perturbed.pmap").string());
    save_pmap(spectra.diff.delta, (dir / "spectral_diff.pmap").string());
    save_png(render_plane_grayscale(spectra.perturbed_spec.mag),
             (dir / "spectrum_perturbed.png").string());
    save_png(render_signed_plane(spectra.diff.delta), (dir / "spectral_diff.png").string());
    write_text(dir / "radial_clean.csv", radial_csv(spectra.clean_profile));
    write_text(dir / "radial_perturbed.csv", radial_csv(spectra.perturbed_profile));
    for (const char* n : {"spectrum_clean.pmap", "spectrum_perturbed.pmap", "spectral_diff.pmap",
                          "spectrum_perturbed.png", "spectral_diff.png", "radial_clean.csv",
                          "radial_perturbed.csv"})
        emit(n, "spectral");

    // detection
    maybe_warn_threshold(cfg.detection);
    std::unique_ptr<Reconstructor> rec = make_reconstructor(cfg.detection, spec.oracle_delta_path);
    const DetectionOutput det =
        detect(pair.perturbed, *rec, cfg.detection.threshold, &pair.clean, cfg.detection.bins);
    save_pmap(det.delta_hat.delta_hat, (dir / "delta_hat.pmap").string());
    json dj;
    dj["entropy_bits"] = det.result.entropy;
    dj["threshold_bits"] = det.result.threshold;
    dj["detected"] = det.result.detected;
    dj["reconstructor"] = det.result.reconstructor_id;
    dj["histogram_bins"] = det.result.histogram_bins;
    write_text(dir / "detection.json", dj.dump(2) + "\n");
    emit("delta_hat.pmap", "detection");
    emit("detection.json", "detection");

    SampleArtifacts art;
    art.analysis = PairAnalysis{spec.pair_id, spec.label, det.result};
    art.fingerprint = build_fingerprint(pair, spectra,
                                        spec.mask.empty() ? spec.pair_id : "base");
    art.fingerprint.protection_label = spec.label;
    art.normalized_map = norm_map;
    return art;
}

} // namespace

PairAnalysis cmd_analyze_pair(const RunConfig& cfg, const std::string& clean_path,
                              const std::string& perturbed_path, const std::string& pair_id) {
    SampleSpec spec;
    spec.pair_id = pair_id;
    spec.label = "pair";
    spec.clean_path = clean_path;
    spec.perturbed_path = perturbed_path;
    spec.oracle_delta_path = cfg.detection.oracle_delta;

    Manifest manifest(cfg);
    const SampleArtifacts art = analyze_sample(cfg, spec, &manifest);
    manifest.finalize_and_write();
    return art.analysis;
}

// --------------------------------------------------------------------- batch

namespace {

std::vector<SampleSpec> gather_grid_samples(const RunConfig& cfg) {
    std::ifstream f(cfg.grid_manifest);
    if (!f) throw IoError("batch: cannot open grid manifest " + cfg.grid_manifest);
    const json gm = json::parse(f);
    const std::string base = gm.at("base_image").get<std::string>();
    const fs::path grid_dir = fs::path(cfg.grid_manifest).parent_path();

    std::vector<SampleSpec> specs;
    for (const auto& r : gm.at("rows")) {
        SampleSpec s;
        s.mask = r.at("mask").get<std::string>();
        s.noise = r.at("noise").get<std::string>();
        s.lightness = r.at("lightness").get<double>();
        s.pair_id = fmt::format("{}_{}_L{:.2f}", s.mask, s.noise, s.lightness);
        s.label = s.noise; // protection family, Table-style
        s.clean_path = base;
        s.perturbed_path = (grid_dir / r.at("image_path").get<std::string>()).string();
        s.oracle_delta_path = (grid_dir / r.at("delta_path").get<std::string>()).string();
        specs.push_back(std::move(s));
    }
    return specs;
}

std::vector<SampleSpec> gather_dir_samples(const RunConfig& cfg) {
    std::map<std::string, std::string> labels;
    const fs::path labels_path = fs::path(cfg.pairs_dir) / "labels.json";
    if (fs::exists(labels_path)) {
        std::ifstream f(labels_path);
        const json lj = json::parse(f);
        for (const auto& [k, v] : lj.items()) labels[k] = v.get<std::string>();
    }

    std::vector<SampleSpec> specs;
    std::vector<fs::path> entries;
    for (const auto& e : fs::directory_iterator(cfg.pairs_dir)) entries.push_back(e.path());
    std::sort(entries.begin(), entries.end());
    for (const auto& p : entries) {
        const std::string name = p.filename().string();
        const std::string suffix = "_clean.png";
        if (name.size() <= suffix.size() || !name.ends_with(suffix)) continue;
        const std::string id = name.substr(0, name.size() - suffix.size());
        SampleSpec s;
        s.pair_id = id;
        s.label = labels.contains(id) ? labels[id] : "unlabeled";
        s.clean_path = p.string();
        s.perturbed_path = (fs::path(cfg.pairs_dir) / (id + "_perturbed.png")).string();
        specs.push_back(std::move(s));
    }
    return specs;
}

struct GroupStats {
    int n = 0;
    double entropy_sum = 0.0;
    int detected = 0;
};

std::string summary_block(const std::string& kind,
                          const std::map<std::string, GroupStats>& groups) {
    std::string csv;
    for (const auto& [value, g] : groups)
        csv += fmt::format("{},{},{},{},{}\n", kind, value, g.n,
                           fmt_double(g.n > 0 ? g.entropy_sum / g.n : 0.0),
                           fmt_double(g.n > 0 ? 100.0 * g.detected / g.n : 0.0));
    return csv;
}

std::string embedding_svg(const std::vector<Fingerprint>& fps, const Embedding2D& emb) {
    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
    std::map<std::string, int> label_idx;
    for (const auto& fp : fps)
        if (!label_idx.contains(fp.protection_label))
            label_idx[fp.protection_label] = int(label_idx.size());

    double mn_x = 0, mx_x = 0, mn_y = 0, mx_y = 0;
    for (const auto& pt : emb.points) {
        mn_x = std::min(mn_x, pt[0]);
        mx_x = std::max(mx_x, pt[0]);
        mn_y = std::min(mn_y, pt[1]);
        mx_y = std::max(mx_y, pt[1]);
    }
    const double span_x = std::max(mx_x - mn_x, 1e-9), span_y = std::max(mx_y - mn_y, 1e-9);
    const int w = 640, h = 480, margin = 40;

    std::string svg = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\">\n"
        "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        w, h);
    for (std::size_t i = 0; i < emb.points.size(); ++i) {
        const double px = margin + (emb.points[i][0] - mn_x) / span_x * (w - 2 * margin);
        const double py = h - margin - (emb.points[i][1] - mn_y) / span_y * (h - 2 * margin);
        const char* color = kColors[std::size_t(label_idx[fps[i].protection_label]) % 8];
        svg += fmt::format(
            "<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"5\" fill=\"{}\" fill-opacity=\"0.8\">"
            "<title>{} / {}</title></circle>\n",
            px, py, color, fps[i].base_image_id, fps[i].protection_label);
    }
    int ly = 20;
    for (const auto& [label, idx] : label_idx) {
        svg += fmt::format(
            "<circle cx=\"15\" cy=\"{}\" r=\"5\" fill=\"{}\"/>"
            "<text x=\"25\" y=\"{}\" font-size=\"12\" font-family=\"sans-serif\">{}</text>\n",
            ly, kColors[std::size_t(idx) % 8], ly + 4, label);
        ly += 18;
    }
    svg += "</svg>\n";
    return svg;
}

} // namespace

BatchResult cmd_batch(const RunConfig& cfg) {
    std::vector<SampleSpec> specs;
    const bool from_grid = !cfg.grid_manifest.empty();
    if (from_grid)
        specs = gather_grid_samples(cfg);
    else if (!cfg.pairs_dir.empty())
        specs = gather_dir_samples(cfg);
    else
        throw ArgumentError("batch: config must provide grid_manifest or pairs_dir");
    if (specs.empty()) throw ArgumentError("batch: no samples");

    fs::create_directories(cfg.out_dir);
    Manifest manifest(cfg);

    std::vector<std::optional<SampleArtifacts>> results(specs.size());
    std::vector<std::string> failures(specs.size());
    parallel_for(specs.size(), cfg.workers, [&](std::size_t i) {
        try {
            results[i] = analyze_sample(cfg, specs[i], &manifest);
        } catch (const std::exception& e) {
            failures[i] = fmt::format("{}: {}", specs[i].pair_id, e.what());
        }
    });

    BatchResult out;
    for (const auto& f : failures)
        if (!f.empty()) out.failures.push_back(f);

    // per-sample detection table
    std::string det_csv = "pair_id,label,mask,noise,lightness,entropy_bits,threshold_bits,detected\n";
    std::map<std::string, GroupStats> by_mask, by_noise, by_light, by_label;
    std::vector<Fingerprint> fps;
    std::map<std::string, std::vector<SensitivityMap>> maps_by_label;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (!results[i]) {
            det_csv += fmt::format("{},{},{},{},{},,,MISSING\n", specs[i].pair_id, specs[i].label,
                                   specs[i].mask, specs[i].noise,
                                   specs[i].lightness >= 0 ? fmt_double(specs[i].lightness) : "");
            continue;
        }
        const auto& art = *results[i];
        const auto& r = art.analysis.detection;
        det_csv += fmt::format("{},{},{},{},{},{},{},{}\n", specs[i].pair_id, specs[i].label,
                               specs[i].mask, specs[i].noise,
                               specs[i].lightness >= 0 ? fmt_double(specs[i].lightness) : "",
                               fmt_double(r.entropy), fmt_double(r.threshold),
                               r.detected ? 1 : 0);
        auto tally = [&](std::map<std::string, GroupStats>& m, const std::string& key) {
            if (key.empty()) return;
            GroupStats& g = m[key];
            g.n += 1;
            g.entropy_sum += r.entropy;
            g.detected += r.detected ? 1 : 0;
        };
        tally(by_mask, specs[i].mask);
        tally(by_noise, specs[i].noise);
        tally(by_light, specs[i].lightness >= 0 ? fmt::format("{:.2f}", specs[i].lightness) : "");
        tally(by_label, specs[i].label);

        fps.push_back(art.fingerprint);
        maps_by_label[specs[i].label].push_back(art.normalized_map);
        out.analyses.push_back(art.analysis);
    }
    write_text(fs::path(cfg.out_dir) / "detections.csv", det_csv);
    manifest.add("summary", "batch", "detections.csv");

    // Table-style marginal summary: mask block, noise block, lightness block
    std::string summary = "group_kind,group_value,n,mean_entropy_bits,detect_rate_pct\n";
    if (from_grid) {
        summary += summary_block("mask", by_mask);
        summary += summary_block("noise", by_noise);
        summary += summary_block("lightness", by_light);
    } else {
        summary += summary_block("label", by_label);
    }
    write_text(fs::path(cfg.out_dir) / "summary.csv", summary);
    manifest.add("summary", "batch", "summary.csv");

    // fingerprints + 2D embedding
    if (!fps.empty()) {
        std::string fp_csv = "pair_id,base_image_id,protection_label";
        for (int d = 0; d < kFingerprintDims; ++d) fp_csv += fmt::format(",f{}", d);
        fp_csv += "\n";
        for (std::size_t i = 0; i < fps.size(); ++i) {
            fp_csv += fmt::format("{},{},{}", out.analyses[i].pair_id, fps[i].base_image_id,
                                  fps[i].protection_label);
            for (double v : fps[i].vector) fp_csv += "," + fmt_double(v);
            fp_csv += "\n";
        }
        write_text(fs::path(cfg.out_dir) / "fingerprints.csv", fp_csv);
        manifest.add("fingerprint", "batch", "fingerprints.csv");

        if (fps.size() >= 3) {
            const Embedding2D emb = project_2d(fps);
            std::string emb_csv = "pair_id,base_image_id,protection_label,x,y\n";
            for (std::size_t i = 0; i < fps.size(); ++i)
                emb_csv += fmt::format("{},{},{},{},{}\n", out.analyses[i].pair_id,
                                       fps[i].base_image_id, fps[i].protection_label,
                                       fmt_double(emb.points[i][0]), fmt_double(emb.points[i][1]));
            write_text(fs::path(cfg.out_dir) / "embedding.csv", emb_csv);
            write_text(fs::path(cfg.out_dir) / "embedding.svg", embedding_svg(fps, emb));
            manifest.add("fingerprint", "batch", "embedding.csv");
            manifest.add("fingerprint", "batch", "embedding.svg");
        }
    }

    // aggregate sensitivity maps per protection family
    fs::create_directories(fs::path(cfg.out_dir) / "aggregates");
    for (const auto& [label, maps] : maps_by_label) {
        const SensitivityMap agg = aggregate_maps(maps);
        const std::string stem = "aggregates/" + label;
        save_pmap(agg.image, (fs::path(cfg.out_dir) / (stem + ".pmap")).string());
        save_png(render_plane_grayscale(agg.image),
                 (fs::path(cfg.out_dir) / (stem + ".png")).string());
        manifest.add("occlusion-aggregate", label, stem + ".pmap");
        manifest.add("occlusion-aggregate", label, stem + ".png");
    }

    manifest.finalize_and_write();
    return out;
}

// ------------------------------------------------------------ single images

DetectionResult cmd_detect(const RunConfig& cfg, const std::string& image_path,
                           const std::string& delta_out_pmap) {
    maybe_warn_threshold(cfg.detection);
    const ImageF32 image = load_png_f32(image_path);
    std::unique_ptr<Reconstructor> rec = make_reconstructor(cfg.detection, "");
    std::optional<ImageF32> clean;
    if (!cfg.detection.clean_ref.empty()) clean = load_png_f32(cfg.detection.clean_ref);
    const DetectionOutput det = detect(image, *rec, cfg.detection.threshold,
                                       clean ? &*clean : nullptr, cfg.detection.bins);
    if (!delta_out_pmap.empty()) save_pmap(det.delta_hat.delta_hat, delta_out_pmap);
    return det.result;
}

void cmd_purify(const RunConfig& cfg, const std::string& image_path, const std::string& out_png) {
    const ImageF32 image = load_png_f32(image_path);
    std::unique_ptr<Reconstructor> rec = make_reconstructor(cfg.detection, "");
    std::optional<ImageF32> clean;
    if (!cfg.detection.clean_ref.empty()) clean = load_png_f32(cfg.detection.clean_ref);
    const ImageF32 cleaned = purify(image, *rec, clean ? &*clean : nullptr);
    save_png(f32_to_u8(cleaned), out_png);
}

} // namespace ps
