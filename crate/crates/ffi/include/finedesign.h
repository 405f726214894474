#ifndef FINEDESIGN_H
#define FINEDESIGN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Success.
 */
#define FD_OK 0

/**
 * Invalid input: bad argument, schema violation or parse failure.
 */
#define FD_ERR_VALIDATION 1

/**
 * File could not be read or written.
 */
#define FD_ERR_IO 2

/**
 * Training diverged or produced non-finite values.
 */
#define FD_ERR_NUMERICAL 3

/**
 * A Rust panic was caught at the boundary.
 */
#define FD_ERR_INTERNAL 4

/**
 * Opaque manifest handle.
 */
typedef struct FdManifest FdManifest;

/**
 * Opaque trained-model handle.
 */
typedef struct FdModel FdModel;

/**
 * Opaque ablation-report handle.
 */
typedef struct FdReport FdReport;

/**
 * Test-set metrics of one model.
 */
typedef struct FdEvalMetrics {
  /**
   * Fraction of true negatives predicted positive.
   */
  double far;
  double positive_recall;
  /**
   * NaN when the model predicted no positives.
   */
  double positive_precision;
} FdEvalMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next `fd_*` call on the same thread.
 */
const char *fd_last_error_message(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be NULL or a string returned by this library, freed once.
 */
void fd_string_free(char *s);

/**
 * Loads and validates a JSONL manifest.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
int32_t fd_manifest_load(const char *path, struct FdManifest **out_manifest);

/**
 * Validates and writes a manifest as JSONL.
 *
 * # Safety
 * `manifest` must be a live handle; `path` a NUL-terminated string.
 */
int32_t fd_manifest_save(const struct FdManifest *manifest, const char *path);

/**
 * Number of samples in the manifest (0 for NULL).
 *
 * # Safety
 * `manifest` must be NULL or a live handle.
 */
size_t fd_manifest_len(const struct FdManifest *manifest);

/**
 * Number of samples in the named category, or in the category with that
 * abbreviation.
 *
 * # Safety
 * `manifest` must be a live handle; `category` a NUL-terminated string;
 * `out_count` writable.
 */
int32_t fd_manifest_category_count(const struct FdManifest *manifest,
                                   const char *category,
                                   size_t *out_count);

/**
 * Per-category counts as a JSON object; release with `fd_string_free`.
 *
 * # Safety
 * `manifest` must be a live handle; `out_json` writable.
 */
int32_t fd_manifest_summary_json(const struct FdManifest *manifest, char **out_json);

/**
 * # Safety
 * `manifest` must be NULL or a handle not yet freed.
 */
void fd_manifest_free(struct FdManifest *manifest);

/**
 * Generates the synthetic train and test manifests. `config_json` may be NULL
 * for the default configuration.
 *
 * # Safety
 * `config_json` must be NULL or NUL-terminated; out-pointers writable.
 */
int32_t fd_synth_generate(const char *config_json,
                          struct FdManifest **out_train,
                          struct FdManifest **out_test);

/**
 * Applies a design and trains a model. `extract` is a comma-separated list of
 * category names or abbreviations (NULL or empty for the original design);
 * `train_config_json` may be NULL for defaults.
 *
 * # Safety
 * `manifest` must be a live handle; strings NULL or NUL-terminated;
 * `out_model` writable.
 */
int32_t fd_train(const struct FdManifest *manifest,
                 const char *extract,
                 const char *train_config_json,
                 struct FdModel **out_model);

/**
 * # Safety
 * `path` must be NUL-terminated; `out_model` writable.
 */
int32_t fd_model_load(const char *path, struct FdModel **out_model);

/**
 * # Safety
 * `model` must be a live handle; `path` NUL-terminated.
 */
int32_t fd_model_save(const struct FdModel *model, const char *path);

/**
 * Number of output classes (0 for NULL).
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t fd_model_num_classes(const struct FdModel *model);

/**
 * Expected feature dimension (0 for NULL).
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t fd_model_feature_dim(const struct FdModel *model);

/**
 * Classifies one feature vector. Class indices are 0 POSITIVE, 1 NEGATIVE,
 * 2 UNCERTAIN. When `out_probabilities` is non-NULL it receives
 * `probabilities_len` entries, which must equal the class count.
 *
 * # Safety
 * `features` must point to `features_len` doubles; `out_probabilities` to
 * `probabilities_len` writable doubles or be NULL; `out_class` writable.
 */
int32_t fd_model_predict(const struct FdModel *model,
                         const double *features,
                         size_t features_len,
                         size_t *out_class,
                         double *out_probabilities,
                         size_t probabilities_len);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void fd_model_free(struct FdModel *model);

/**
 * Scores `model` on a clear-only test manifest.
 *
 * # Safety
 * Handles must be live; `out_metrics` writable.
 */
int32_t fd_evaluate(const struct FdModel *model,
                    const struct FdManifest *test,
                    struct FdEvalMetrics *out_metrics);

/**
 * Runs the ablation described by a config file. `workers` = 0 uses all cores;
 * the result does not depend on it.
 *
 * # Safety
 * `config_path` must be NUL-terminated; `out_report` writable.
 */
int32_t fd_ablation_run(const char *config_path, size_t workers, struct FdReport **out_report);

/**
 * Loads an ablation report written as JSON.
 *
 * # Safety
 * `path` must be NUL-terminated; `out_report` writable.
 */
int32_t fd_report_load(const char *path, struct FdReport **out_report);

/**
 * Renders a report as `markdown`, `csv` or `json`; release the result with
 * `fd_string_free`.
 *
 * # Safety
 * `report` must be a live handle; `format` NUL-terminated; `out_text` writable.
 */
int32_t fd_report_render(const struct FdReport *report, const char *format, char **out_text);

/**
 * Mean FAR of the row with the given design name; NaN when every run of that
 * design failed.
 *
 * # Safety
 * `report` must be a live handle; `design_name` NUL-terminated; `out_far` writable.
 */
int32_t fd_report_mean_far(const struct FdReport *report, const char *design_name, double *out_far);

/**
 * # Safety
 * `report` must be NULL or a handle not yet freed.
 */
void fd_report_free(struct FdReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FINEDESIGN_H */
