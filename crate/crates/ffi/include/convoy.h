#ifndef CONVOY_H
#define CONVOY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum ConvoyStatus {
  CONVOY_STATUS_OK = 0,
  CONVOY_STATUS_NULL_POINTER = 1,
  CONVOY_STATUS_INVALID_UTF8 = 2,
  CONVOY_STATUS_INVALID_CONFIG = 3,
  /**
   * The run left the corridor. The handle is still produced and holds
   * the partial trajectory, but no metrics.
   */
  CONVOY_STATUS_ABORTED = 4,
  CONVOY_STATUS_IO = 5,
  CONVOY_STATUS_INVALID_ARGUMENT = 6,
  CONVOY_STATUS_PANIC = 7,
} ConvoyStatus;

/**
 * Parsed simulation configuration.
 */
typedef struct ConvoyConfigHandle ConvoyConfigHandle;

/**
 * Arc-length parameterized teach path.
 */
typedef struct ConvoyPathHandle ConvoyPathHandle;

/**
 * Output of one simulation.
 */
typedef struct ConvoyRunHandle ConvoyRunHandle;

/**
 * Planar pose; `theta` in radians from the +x axis.
 */
typedef struct ConvoyPose2 {
  double x;
  double y;
  double theta;
} ConvoyPose2;

/**
 * se(2) tangent vector.
 */
typedef struct ConvoyTwist2 {
  double rho_x;
  double rho_y;
  double phi;
} ConvoyTwist2;

/**
 * Projection of a point onto a path.
 */
typedef struct ConvoyPathCoord {
  double s;
  double lateral;
  double heading_err;
} ConvoyPathCoord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread. The pointer stays
 * valid until the next failing call on the same thread; do not free it.
 */
const char *convoy_last_error_message(void);

/**
 * Static description of a status code. Do not free.
 */
const char *convoy_status_name(enum ConvoyStatus status);

/**
 * Library version string. Do not free.
 */
const char *convoy_version(void);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void convoy_string_free(char *s);

/**
 * Parse a JSON configuration document. Missing fields take defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum ConvoyStatus convoy_config_from_json(const char *json, struct ConvoyConfigHandle **out);

/**
 * Serialize a configuration with every default filled in.
 *
 * # Safety
 * `config` must be a live handle; `out` must be writable.
 */
enum ConvoyStatus convoy_config_to_json(const struct ConvoyConfigHandle *config, char **out);

/**
 * # Safety
 * `config` must be null or a handle not yet freed.
 */
void convoy_config_free(struct ConvoyConfigHandle *config);

/**
 * Simulate `config` with `seed`. On [`ConvoyStatus::Aborted`] `*out` still
 * receives a handle with the partial trajectory.
 *
 * # Safety
 * `config` must be a live handle; `out` must be writable.
 */
enum ConvoyStatus convoy_run(const struct ConvoyConfigHandle *config,
                             uint64_t seed,
                             struct ConvoyRunHandle **out);

/**
 * Number of logged ticks.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
size_t convoy_run_row_count(const struct ConvoyRunHandle *run);

/**
 * True pose of `robot` at log row `row`.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum ConvoyStatus convoy_run_pose(const struct ConvoyRunHandle *run,
                                  size_t row,
                                  size_t robot,
                                  struct ConvoyPose2 *out);

/**
 * Metrics report as JSON. Fails with [`ConvoyStatus::Aborted`] for an
 * aborted run.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum ConvoyStatus convoy_run_metrics_json(const struct ConvoyRunHandle *run, char **out);

/**
 * Write the trajectory log as CSV.
 *
 * # Safety
 * `run` must be a live handle; `path` a NUL-terminated string.
 */
enum ConvoyStatus convoy_run_write_csv(const struct ConvoyRunHandle *run, const char *path);

/**
 * # Safety
 * `run` must be null or a handle not yet freed.
 */
void convoy_run_free(struct ConvoyRunHandle *run);

/**
 * # Safety
 * `out` must be writable.
 */
enum ConvoyStatus convoy_se2_exp(struct ConvoyTwist2 xi, struct ConvoyPose2 *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum ConvoyStatus convoy_se2_log(struct ConvoyPose2 pose, struct ConvoyTwist2 *out);

/**
 * Geodesic interpolation, `alpha` in [0, 1].
 *
 * # Safety
 * `out` must be writable.
 */
enum ConvoyStatus convoy_se2_interpolate(struct ConvoyPose2 a,
                                         struct ConvoyPose2 b,
                                         double alpha,
                                         struct ConvoyPose2 *out);

/**
 * Build a path from `count` waypoints; headings are derived from the
 * polyline.
 *
 * # Safety
 * `points` must reference `count` readable poses; `out` must be writable.
 */
enum ConvoyStatus convoy_path_build(const struct ConvoyPose2 *points,
                                    size_t count,
                                    double corridor_half_width,
                                    bool closed,
                                    struct ConvoyPathHandle **out);

/**
 * Total arc length; negative for a null handle.
 *
 * # Safety
 * `path` must be null or a live handle.
 */
double convoy_path_length(const struct ConvoyPathHandle *path);

/**
 * # Safety
 * `path` must be a live handle; `out` must be writable.
 */
enum ConvoyStatus convoy_path_pose_at(const struct ConvoyPathHandle *path,
                                      double s,
                                      struct ConvoyPose2 *out);

/**
 * # Safety
 * `path` must be a live handle; `out` must be writable.
 */
enum ConvoyStatus convoy_path_project(const struct ConvoyPathHandle *path,
                                      struct ConvoyPose2 pose,
                                      struct ConvoyPathCoord *out);

/**
 * # Safety
 * `path` must be null or a handle not yet freed.
 */
void convoy_path_free(struct ConvoyPathHandle *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONVOY_H */
