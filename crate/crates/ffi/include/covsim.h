#ifndef COVSIM_H
#define COVSIM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CovsimStatus {
  COVSIM_STATUS_OK = 0,
  COVSIM_STATUS_NULL_POINTER = 1,
  COVSIM_STATUS_INVALID_UTF8 = 2,
  COVSIM_STATUS_INVALID_INPUT = 3,
  /**
   * a file was missing or unreadable
   */
  COVSIM_STATUS_IO = 4,
  /**
   * the simulation failed; see the message
   */
  COVSIM_STATUS_SIMULATION = 5,
  /**
   * an internal panic was caught at the boundary
   */
  COVSIM_STATUS_PANIC = 6,
} CovsimStatus;

/**
 * Opaque multinomial-logit choice model.
 */
typedef struct CovsimChoiceModel CovsimChoiceModel;

/**
 * Opaque, mergeable sociability aggregate.
 */
typedef struct CovsimSociability CovsimSociability;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next failing call on this thread.
 */
const char *covsim_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *covsim_version(void);

/**
 * # Safety
 * `s` must come from this library, or be null.
 */
void covsim_string_free(char *s);

/**
 * Parse a choice model from JSON (`{"asc": {...}, "beta_time", "beta_cost",
 * "reference_mode"}`).
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum CovsimStatus covsim_choice_model_from_json(const char *json, struct CovsimChoiceModel **out);

/**
 * # Safety
 * `model` must come from [`covsim_choice_model_from_json`], or be null.
 */
void covsim_choice_model_free(struct CovsimChoiceModel *model);

/**
 * Choice probabilities for one trip. Arrays have six entries in mode order
 * car, transit, walk, bike, ridehail, bikeshare; times are hours. Bit `k` of
 * `available` enables mode `k`.
 *
 * # Safety
 * `model` must be a live handle; `time_h`, `cost` and `out` must each point
 * to six doubles.
 */
enum CovsimStatus covsim_choice_probabilities(const struct CovsimChoiceModel *model,
                                              const double *time_h,
                                              const double *cost,
                                              uint32_t available,
                                              double *out);

/**
 * Projected distance in feet between two person boxes given as
 * `[x, y, w, h]` pixels.
 *
 * # Safety
 * `a` and `b` must point to four doubles; `out` must be writable.
 */
enum CovsimStatus covsim_pair_distance_ft(const double *a, const double *b, double *out);

struct CovsimSociability *covsim_sociability_new(void);

/**
 * # Safety
 * `acc` must come from [`covsim_sociability_new`], or be null.
 */
void covsim_sociability_free(struct CovsimSociability *acc);

/**
 * Add one detection frame given as a JSON object
 * `{"camera_id", "t", "objects": [{"class", "bbox": [x, y, w, h]}]}`.
 *
 * # Safety
 * `acc` must be a live handle and `frame_json` a NUL-terminated string.
 */
enum CovsimStatus covsim_sociability_add_frame(struct CovsimSociability *acc,
                                               const char *frame_json);

/**
 * Fold `other` into `acc`; `other` is left unchanged.
 *
 * # Safety
 * Both must be live handles.
 */
enum CovsimStatus covsim_sociability_merge(struct CovsimSociability *acc,
                                           const struct CovsimSociability *other);

/**
 * Report JSON for everything added so far. Release with
 * [`covsim_string_free`].
 *
 * # Safety
 * `acc` must be a live handle; `out` must be writable.
 */
enum CovsimStatus covsim_sociability_report(const struct CovsimSociability *acc, char **out);

/**
 * Run the scenario matrix at `matrix_path` against the assets directory
 * and return the mode-share table as CSV. Release with
 * [`covsim_string_free`].
 *
 * # Safety
 * Path arguments must be NUL-terminated strings; `out_csv` must be writable.
 */
enum CovsimStatus covsim_run_matrix(const char *matrix_path,
                                    const char *assets_dir,
                                    char **out_csv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COVSIM_H */
