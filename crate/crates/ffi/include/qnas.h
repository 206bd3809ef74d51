#ifndef QNAS_H
#define QNAS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum QnasStatus {
  QNAS_STATUS_OK = 0,
  QNAS_STATUS_NULL_POINTER = 1,
  QNAS_STATUS_DIMENSION_MISMATCH = 2,
  QNAS_STATUS_INVALID_INPUT = 3,
  QNAS_STATUS_OVERLOADED_STATION = 4,
  QNAS_STATUS_INFEASIBLE_CONFIGURATION = 5,
  QNAS_STATUS_UNATTAINABLE_SLA = 6,
  QNAS_STATUS_ITERATION_CAP = 7,
  QNAS_STATUS_PANIC = 99,
} QnasStatus;

/**
 * Opaque baseline snapshot.
 */
typedef struct QnasSnapshot QnasSnapshot;

/**
 * Result of [`qnas_plan_step`].
 */
typedef struct QnasPlanStats {
  uint64_t acquire_iterations;
  uint64_t precondition_additions;
  uint64_t release_iterations;
  /**
   * 1 when every predicted response meets its threshold.
   */
  uint8_t feasible;
} QnasPlanStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL. Valid until the next
 * call into this library on the same thread.
 */
const char *qnas_last_error_message(void);

/**
 * Builds a snapshot from a reference configuration (`stations` counts),
 * arrival rates (`classes`) and per-instance demands (`classes * stations`,
 * row-major). Utilizations are derived from rates and demands.
 */
enum QnasStatus qnas_snapshot_new(size_t classes,
                                  size_t stations,
                                  const uint32_t *ref_config,
                                  const double *rates,
                                  const double *demands,
                                  struct QnasSnapshot **out);

void qnas_snapshot_free(struct QnasSnapshot *snapshot);

size_t qnas_snapshot_classes(const struct QnasSnapshot *snapshot);

size_t qnas_snapshot_stations(const struct QnasSnapshot *snapshot);

/**
 * Writes the per-instance utilizations at the reference configuration.
 */
enum QnasStatus qnas_snapshot_utilizations(const struct QnasSnapshot *snapshot, double *out);

/**
 * Creates a new snapshot referenced at `target`.
 */
enum QnasStatus qnas_snapshot_rescale(const struct QnasSnapshot *snapshot,
                                      const uint32_t *target,
                                      struct QnasSnapshot **out);

/**
 * Predicted response at `target`: `per_class` receives `classes` values,
 * `per_class_station` (may be NULL) receives `classes * stations` station
 * contributions.
 */
enum QnasStatus qnas_predict_response(const struct QnasSnapshot *snapshot,
                                      const uint32_t *target,
                                      double *per_class,
                                      double *per_class_station);

/**
 * Real-valued capacity floor per station.
 */
enum QnasStatus qnas_capacity_floor(const struct QnasSnapshot *snapshot, double *out);

/**
 * Smallest configuration strictly above the capacity floor.
 */
enum QnasStatus qnas_min_feasible_config(const struct QnasSnapshot *snapshot, uint32_t *out);

/**
 * One acquire/release planning step. `thresholds` has `classes` entries;
 * `new_config` receives `stations` counts, `predicted` (may be NULL)
 * `classes` responses and `stats` (may be NULL) the iteration counts.
 * `iteration_cap` of 0 selects the default cap.
 */
enum QnasStatus qnas_plan_step(const struct QnasSnapshot *snapshot,
                               const double *thresholds,
                               uint64_t iteration_cap,
                               uint32_t *new_config,
                               double *predicted,
                               struct QnasPlanStats *stats);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QNAS_H */
