#ifndef RELAYPLAN_H
#define RELAYPLAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>

typedef enum RpStatus {
  RP_STATUS_OK = 0,
  RP_STATUS_NULL_POINTER = 1,
  RP_STATUS_INVALID_ARGUMENT = 2,
  RP_STATUS_PARSE = 3,
  RP_STATUS_SOLVER = 4,
  RP_STATUS_BUFFER_TOO_SMALL = 5,
  RP_STATUS_PANIC = 6,
} RpStatus;

typedef struct RpPlan RpPlan;

/**
 * Topology plus the solver settings to use with it.
 */
typedef struct RpTopology RpTopology;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null if there was none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *rp_last_error(void);

/**
 * Builds a topology from coordinates. `dest_xy` holds `n_dest` pairs
 * `x0, y0, x1, y1, ...`. Solver settings start at their defaults.
 *
 * # Safety
 * `dest_xy` must point to `2 * n_dest` readable doubles and `out` must be
 * a valid pointer to write the handle to.
 */
enum RpStatus rp_topology_new(double source_x,
                              double source_y,
                              const double *dest_xy,
                              size_t n_dest,
                              double p_source,
                              double p_relay,
                              double n0,
                              double alpha,
                              struct RpTopology **out);

/**
 * Parses a topology file (JSON text, NUL terminated), including its
 * optional solver block.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum RpStatus rp_topology_from_json(const char *json, struct RpTopology **out);

/**
 * Overrides the switch sharpness and surrogate exponent used by [`rp_plan`].
 *
 * # Safety
 * `topology` must be a live handle from this library.
 */
enum RpStatus rp_topology_set_solver(struct RpTopology *topology, double gamma, double p);

/**
 * # Safety
 * `topology` must be null or a handle from this library not yet freed.
 */
void rp_topology_free(struct RpTopology *topology);

/**
 * Optimized relay position and powers.
 *
 * # Safety
 * `topology` must be a live handle and `out` a valid pointer.
 */
enum RpStatus rp_plan(const struct RpTopology *topology, struct RpPlan **out);

/**
 * Best relay on a grid with `resolution` intervals per axis.
 *
 * # Safety
 * `topology` must be a live handle and `out` a valid pointer.
 */
enum RpStatus rp_grid_oracle(const struct RpTopology *topology,
                             size_t resolution,
                             struct RpPlan **out);

/**
 * Relay fixed at the hull centroid.
 *
 * # Safety
 * `topology` must be a live handle and `out` a valid pointer.
 */
enum RpStatus rp_centroid_plan(const struct RpTopology *topology, struct RpPlan **out);

/**
 * Optimal multicast rate with the relay fixed at `(x, y)`.
 *
 * # Safety
 * `topology` must be a live handle and `rate` a valid pointer.
 */
enum RpStatus rp_fixed_relay_rate(const struct RpTopology *topology,
                                  double x,
                                  double y,
                                  double *rate);

/**
 * Relay position of a plan.
 *
 * # Safety
 * `plan` must be a live handle; `x` and `y` valid pointers.
 */
enum RpStatus rp_plan_relay(const struct RpPlan *plan, double *x, double *y);

/**
 * Multicast rate of a plan; NaN for a null handle.
 *
 * # Safety
 * `plan` must be null or a live handle.
 */
double rp_plan_multicast_rate(const struct RpPlan *plan);

/**
 * Whether the smooth solver converged (always true for grid and centroid
 * plans); false for a null handle.
 *
 * # Safety
 * `plan` must be null or a live handle.
 */
bool rp_plan_converged(const struct RpPlan *plan);

/**
 * Copies the per-destination rates into `buf`. `len` always receives the
 * number of destinations; [`RpStatus::BufferTooSmall`] is returned when
 * `capacity` is smaller, with nothing copied.
 *
 * # Safety
 * `plan` must be a live handle, `buf` must hold `capacity` doubles (it
 * may be null when `capacity` is 0) and `len` must be a valid pointer.
 */
enum RpStatus rp_plan_destination_rates(const struct RpPlan *plan,
                                        double *buf,
                                        size_t capacity,
                                        size_t *len);

/**
 * The full plan as JSON. Free the string with [`rp_string_free`]. Null for
 * a null handle.
 *
 * # Safety
 * `plan` must be null or a live handle.
 */
char *rp_plan_to_json(const struct RpPlan *plan);

/**
 * # Safety
 * `plan` must be null or a handle from this library not yet freed.
 */
void rp_plan_free(struct RpPlan *plan);

/**
 * # Safety
 * `s` must be null or a string returned by this library not yet freed.
 */
void rp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELAYPLAN_H */
