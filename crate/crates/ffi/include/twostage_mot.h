#ifndef TWOSTAGE_MOT_H
#define TWOSTAGE_MOT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TsmStatus {
  TSM_STATUS_OK = 0,
  TSM_STATUS_NULL_POINTER = 1,
  TSM_STATUS_INVALID_ARGUMENT = 2,
  TSM_STATUS_INVALID_CONFIG = 3,
  TSM_STATUS_TEMPORAL_ORDER = 4,
  TSM_STATUS_BUFFER_TOO_SMALL = 5,
  TSM_STATUS_NUMERIC = 6,
  TSM_STATUS_INTERNAL = 7,
  TSM_STATUS_PANIC = 8,
} TsmStatus;

typedef enum TsmClass {
  TSM_CLASS_CAR_LIKE = 0,
  TSM_CLASS_PEDESTRIAN = 1,
} TsmClass;

/**
 * Opaque tracker handle.
 */
typedef struct TsmTracker TsmTracker;

/**
 * One input box. `class_label` is 0 for car-like, 1 for pedestrian.
 */
typedef struct TsmDetection {
  double center[3];
  double size[3];
  double heading;
  double score;
  uint32_t class_label;
} TsmDetection;

/**
 * One reported track.
 */
typedef struct TsmTrack {
  uint64_t id;
  double center[3];
  double size[3];
  double heading;
  double score;
  uint32_t class_label;
  /**
   * 1 when reported from prediction only.
   */
  uint8_t coasting;
} TsmTrack;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Create a tracker. `config_json` may be null for the embedded default.
 *
 * # Safety
 * `config_json` must be null or a NUL-terminated string; `out` must be a valid pointer.
 */
enum TsmStatus tsm_tracker_new(const char *config_json, struct TsmTracker **out);

/**
 * Destroy a tracker. Null is ignored.
 *
 * # Safety
 * `tracker` must be null or a handle from [`tsm_tracker_new`] not yet freed.
 */
void tsm_tracker_free(struct TsmTracker *tracker);

/**
 * Process one frame. The number of reported tracks goes to `out_count`;
 * fetch them with [`tsm_tracker_tracks`].
 *
 * # Safety
 * `tracker` must be a live handle; `detections` must point to `count` items (or be null
 * when `count` is 0); `out_count` must be null or valid.
 */
enum TsmStatus tsm_tracker_step(struct TsmTracker *tracker,
                                const struct TsmDetection *detections,
                                size_t count,
                                double timestamp,
                                size_t *out_count);

/**
 * Copy the tracks of the last step into `out`. Fails with `BufferTooSmall`
 * (copying nothing) when `capacity` is short; `written` always receives the count needed.
 *
 * # Safety
 * `tracker` must be a live handle; `out` must hold `capacity` items; `written` must be valid.
 */
enum TsmStatus tsm_tracker_tracks(const struct TsmTracker *tracker,
                                  struct TsmTrack *out,
                                  size_t capacity,
                                  size_t *written);

/**
 * Number of live tracklets, including ones not currently reported.
 *
 * # Safety
 * `tracker` must be a live handle; `out` must be valid.
 */
enum TsmStatus tsm_tracker_live_count(const struct TsmTracker *tracker, size_t *out);

/**
 * Error message of the previous call on this thread, or null if it succeeded.
 * Valid until the next call.
 */
const char *tsm_last_error_message(void);

/**
 * The embedded default config as JSON. Free with [`tsm_string_free`].
 */
char *tsm_default_config_json(void);

/**
 * Free a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or come from this library and not be freed twice.
 */
void tsm_string_free(char *s);

/**
 * Library version, static storage.
 */
const char *tsm_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TWOSTAGE_MOT_H */
