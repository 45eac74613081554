#ifndef CDF_H
#define CDF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define CDF_VARIANT_RAW 0

#define CDF_VARIANT_EA 1

#define CDF_VARIANT_PCA 2

#define CDF_VARIANT_EA_PCA 3

#define CDF_ALGORITHM_FCM 0

#define CDF_ALGORITHM_PROBCP 1

#define CDF_ALGORITHM_POSSCP 2

/**
 * Result code of every fallible call.
 */
typedef enum CdfStatus {
  CDF_STATUS_OK = 0,
  CDF_STATUS_NULL_POINTER = 1,
  CDF_STATUS_INVALID_ARGUMENT = 2,
  CDF_STATUS_INVALID_CONFIG = 3,
  CDF_STATUS_INSUFFICIENT_DATA = 4,
  CDF_STATUS_SHAPE_MISMATCH = 5,
  CDF_STATUS_MISSING_FEATURE = 6,
  CDF_STATUS_DEGENERATE_DATA = 7,
  CDF_STATUS_INVALID_DATA = 8,
  CDF_STATUS_IO = 9,
  CDF_STATUS_PARSE = 10,
  CDF_STATUS_EMPTY_RESULT = 11,
  CDF_STATUS_PANIC = 12,
} CdfStatus;

/**
 * Named telemetry matrix (row-major values).
 */
typedef struct CdfMatrix CdfMatrix;

/**
 * Fitted detection pipeline.
 */
typedef struct CdfPipeline CdfPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cdf_version(void);

/**
 * Message of the last failed call on this thread, or NULL after a success.
 * Valid until the next call into the library from the same thread.
 */
const char *cdf_last_error(void);

/**
 * Robust distance between `x` and `c`; `scale` may be NULL for unit scales.
 *
 * # Safety
 * `x` and `c` (and `scale` if non-null) must point to `len` doubles; `out`
 * must be writable.
 */
enum CdfStatus cdf_robust_distance(const double *x,
                                   const double *c,
                                   const double *scale,
                                   size_t len,
                                   double *out);

/**
 * Copies `rows * cols` row-major values into a new matrix. `names` may be
 * NULL, giving columns `x1..xN`; otherwise it holds `cols` C strings.
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `out` must be writable.
 */
enum CdfStatus cdf_matrix_new(const double *values,
                              size_t rows,
                              size_t cols,
                              const char *const *names,
                              struct CdfMatrix **out);

/**
 * # Safety
 * `matrix` must be a live handle or NULL.
 */
size_t cdf_matrix_rows(const struct CdfMatrix *matrix);

/**
 * # Safety
 * `matrix` must be a live handle or NULL.
 */
size_t cdf_matrix_cols(const struct CdfMatrix *matrix);

/**
 * Name of column `index`, or NULL if out of range. Owned by the matrix.
 *
 * # Safety
 * `matrix` must be a live handle or NULL.
 */
const char *cdf_matrix_column_name(const struct CdfMatrix *matrix, size_t index);

/**
 * Copies the row-major values into `out`, which must hold exactly
 * `rows * cols` doubles.
 *
 * # Safety
 * `out` must be writable for `len` doubles.
 */
enum CdfStatus cdf_matrix_copy_values(const struct CdfMatrix *matrix, double *out, size_t len);

/**
 * # Safety
 * `matrix` must come from this library and not be used afterwards.
 */
void cdf_matrix_free(struct CdfMatrix *matrix);

/**
 * Nominal telemetry from the default generator settings.
 *
 * # Safety
 * `out` must be writable.
 */
enum CdfStatus cdf_generate(size_t samples, uint64_t seed, struct CdfMatrix **out);

/**
 * Labeled telemetry (half drifted by default); `labels` receives one 0/1
 * byte per sample.
 *
 * # Safety
 * `labels` must be writable for `samples` bytes; `out` must be writable.
 */
enum CdfStatus cdf_generate_labeled(size_t samples,
                                    uint64_t seed,
                                    uint8_t *labels,
                                    struct CdfMatrix **out);

/**
 * Fits a pipeline on `matrix` with 0/1 `labels`, using the benchmark stage
 * settings (70/30 split, 95 % PCA variance, two clusters).
 *
 * # Safety
 * `labels` must hold one byte per matrix row; `out` must be writable.
 */
enum CdfStatus cdf_pipeline_fit(const struct CdfMatrix *matrix,
                                const uint8_t *labels,
                                size_t n_labels,
                                uint32_t variant,
                                uint32_t algorithm,
                                uint64_t seed,
                                struct CdfPipeline **out);

/**
 * Fits a pipeline on the bundled benchmark data set.
 *
 * # Safety
 * `out` must be writable.
 */
enum CdfStatus cdf_pipeline_fit_benchmark(uint32_t variant,
                                          uint32_t algorithm,
                                          uint64_t seed,
                                          struct CdfPipeline **out);

/**
 * Number of clusters, or 0 for NULL.
 *
 * # Safety
 * `pipeline` must be a live handle or NULL.
 */
size_t cdf_pipeline_clusters(const struct CdfPipeline *pipeline);

/**
 * Writes 1 for each row assigned to the anomaly cluster, else 0.
 *
 * # Safety
 * `out` must be writable for `len` bytes, `len` equal to the row count.
 */
enum CdfStatus cdf_pipeline_classify(const struct CdfPipeline *pipeline,
                                     const struct CdfMatrix *matrix,
                                     uint8_t *out,
                                     size_t len);

/**
 * Row-major `rows * clusters` membership weights.
 *
 * # Safety
 * `out` must be writable for `len` doubles.
 */
enum CdfStatus cdf_pipeline_memberships(const struct CdfPipeline *pipeline,
                                        const struct CdfMatrix *matrix,
                                        double *out,
                                        size_t len);

/**
 * Classifies the rows as consecutive inspections and smooths them over a
 * trailing `window`. `states` (nullable) receives 1 for nOK, 0 for OK;
 * `transition` receives the first nOK index or -1.
 *
 * # Safety
 * `states`, if non-null, must be writable for `len` bytes; `transition` must
 * be writable.
 */
enum CdfStatus cdf_detect_stream(const struct CdfPipeline *pipeline,
                                 const struct CdfMatrix *matrix,
                                 size_t window,
                                 uint8_t *states,
                                 size_t len,
                                 int64_t *transition);

/**
 * Serializes the pipeline; release the string with `cdf_string_free`.
 *
 * # Safety
 * `out` must be writable.
 */
enum CdfStatus cdf_pipeline_to_json(const struct CdfPipeline *pipeline, char **out);

/**
 * # Safety
 * `json` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
enum CdfStatus cdf_pipeline_from_json(const char *json, struct CdfPipeline **out);

/**
 * # Safety
 * `text` must come from `cdf_pipeline_to_json` and not be used afterwards.
 */
void cdf_string_free(char *text);

/**
 * # Safety
 * `pipeline` must come from this library and not be used afterwards.
 */
void cdf_pipeline_free(struct CdfPipeline *pipeline);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CDF_H */
