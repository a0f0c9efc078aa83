#ifndef PERTURBSCOPE_H
#define PERTURBSCOPE_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ps_status {
    PS_OK = 0,
    PS_ERR_ARGUMENT = 1,   /* bad input value or configuration */
    PS_ERR_IO = 2,         /* file missing or unreadable/unwritable */
    PS_ERR_FORMAT = 3,     /* malformed PNG, PMAP or JSON */
    PS_ERR_INFEASIBLE = 4, /* requested target cannot be reached */
    PS_ERR_ADAPTER = 5,    /* external reconstructor failed */
    PS_ERR_DEPENDENCY = 6, /* a required artifact from an earlier stage is missing */
    PS_ERR_INTERNAL = 7
} ps_status;

/* Thread-local message for the most recent failing call on this thread.
 * Valid until the next failing call; never NULL. */
const char* ps_last_error(void);

const char* ps_version(void);

/* A run handle wraps one validated JSON configuration. The configuration
 * schema matches what the CLI accepts via --config. */
typedef struct ps_run ps_run;

ps_status ps_run_create(const char* config_json, ps_run** out);
void ps_run_destroy(ps_run* run);

/* Full mask x noise x lightness grid into the configured output directory. */
ps_status ps_run_synth(ps_run* run);

/* Occlusion map, spectra and detection verdict for one clean/perturbed pair. */
ps_status ps_run_analyze_pair(ps_run* run, const char* clean_png, const char* perturbed_png,
                              const char* pair_id);

/* Batch over a synthesis grid or a directory of pairs; on success,
 * *failed_samples holds the number of samples that failed individually
 * (their errors are recorded in the run output). */
ps_status ps_run_batch(ps_run* run, size_t* failed_samples);

/* Static HTML report over a completed run directory. */
ps_status ps_report(const char* run_dir, const char* out_html);

typedef struct ps_detection {
    double entropy_bits;
    double threshold_bits;
    int detected;
} ps_detection;

/* Single-image detection; delta_out_pmap may be NULL to skip persisting the
 * reconstructed perturbation plane. */
ps_status ps_detect_file(ps_run* run, const char* image_png, const char* delta_out_pmap,
                         ps_detection* out);

/* Reconstruct-and-subtract purification of a single image. */
ps_status ps_purify_file(ps_run* run, const char* image_png, const char* out_png);

#ifdef __cplusplus
}
#endif

#endif /* PERTURBSCOPE_H */
