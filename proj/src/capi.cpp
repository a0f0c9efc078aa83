#include "perturbscope.h"

#include "perturbscope/errors.hpp"
#include "perturbscope/pipeline.hpp"

#include <memory>
#include <string>

using nlohmann::json;

namespace {

thread_local std::string g_last_error = "no error";

ps_status fail(ps_status code, const std::string& message) {
    g_last_error = message;
    return code;
}

template <typename Fn>
ps_status guarded(Fn&& fn) {
    try {
        fn();
        return PS_OK;
    } catch (const ps::ArgumentError& e) {
        return fail(PS_ERR_ARGUMENT, e.what());
    } catch (const ps::InfeasibleError& e) {
        return fail(PS_ERR_INFEASIBLE, e.what());
    } catch (const ps::AdapterError& e) {
        return fail(PS_ERR_ADAPTER, e.what());
    } catch (const ps::FormatError& e) {
        return fail(PS_ERR_FORMAT, e.what());
    } catch (const ps::IoError& e) {
        return fail(PS_ERR_IO, e.what());
    } catch (const ps::DependencyError& e) {
        return fail(PS_ERR_DEPENDENCY, e.what());
    } catch (const json::exception& e) {
        return fail(PS_ERR_FORMAT, e.what());
    } catch (const std::exception& e) {
        return fail(PS_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(PS_ERR_INTERNAL, "unknown error");
    }
}

} // namespace

struct ps_run {
    ps::RunConfig config;
};

extern "C" {

const char* ps_last_error(void) { return g_last_error.c_str(); }

const char* ps_version(void) { return "0.1.0"; }

ps_status ps_run_create(const char* config_json, ps_run** out) {
    if (out == nullptr) return fail(PS_ERR_ARGUMENT, "ps_run_create: out is NULL");
    *out = nullptr;
    if (config_json == nullptr) return fail(PS_ERR_ARGUMENT, "ps_run_create: config is NULL");
    return guarded([&] {
        auto run = std::make_unique<ps_run>();
        run->config = ps::RunConfig::from_json(json::parse(config_json));
        *out = run.release();
    });
}

void ps_run_destroy(ps_run* run) { delete run; }

ps_status ps_run_synth(ps_run* run) {
    if (run == nullptr) return fail(PS_ERR_ARGUMENT, "ps_run_synth: run is NULL");
    return guarded([&] { ps::cmd_synth(run->config); });
}

ps_status ps_run_analyze_pair(ps_run* run, const char* clean_png, const char* perturbed_png,
                              const char* pair_id) {
    if (run == nullptr || clean_png == nullptr || perturbed_png == nullptr || pair_id == nullptr)
        return fail(PS_ERR_ARGUMENT, "ps_run_analyze_pair: NULL argument");
    return guarded([&] { ps::cmd_analyze_pair(run->config, clean_png, perturbed_png, pair_id); });
}

ps_status ps_run_batch(ps_run* run, size_t* failed_samples) {
    if (run == nullptr) return fail(PS_ERR_ARGUMENT, "ps_run_batch: run is NULL");
    return guarded([&] {
        const ps::BatchResult res = ps::cmd_batch(run->config);
        if (failed_samples != nullptr) *failed_samples = res.failures.size();
    });
}

ps_status ps_report(const char* run_dir, const char* out_html) {
    if (run_dir == nullptr || out_html == nullptr)
        return fail(PS_ERR_ARGUMENT, "ps_report: NULL argument");
    return guarded([&] { ps::cmd_report(run_dir, out_html); });
}

ps_status ps_detect_file(ps_run* run, const char* image_png, const char* delta_out_pmap,
                         ps_detection* out) {
    if (run == nullptr || image_png == nullptr || out == nullptr)
        return fail(PS_ERR_ARGUMENT, "ps_detect_file: NULL argument");
    return guarded([&] {
        const ps::DetectionResult r =
            ps::cmd_detect(run->config, image_png, delta_out_pmap ? delta_out_pmap : "");
        out->entropy_bits = r.entropy;
        out->threshold_bits = r.threshold;
        out->detected = r.detected ? 1 : 0;
    });
}

ps_status ps_purify_file(ps_run* run, const char* image_png, const char* out_png) {
    if (run == nullptr || image_png == nullptr || out_png == nullptr)
        return fail(PS_ERR_ARGUMENT, "ps_purify_file: NULL argument");
    return guarded([&] { ps::cmd_purify(run->config, image_png, out_png); });
}

} // extern "C"
