#ifndef SPINPULSE_H
#define SPINPULSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a call. The numeric values of the first four match the exit
 * codes of the `spinpulse` command.
 */
typedef enum SpStatus {
  SP_STATUS_OK = 0,
  /**
   * A parameter is outside the model's domain.
   */
  SP_STATUS_VALIDATION = 1,
  /**
   * Malformed input data.
   */
  SP_STATUS_PARSE = 2,
  /**
   * A numerical method failed (convergence, fit).
   */
  SP_STATUS_NUMERICAL = 3,
  SP_STATUS_NULL_POINTER = 4,
  SP_STATUS_PANIC = 5,
} SpStatus;

typedef enum SpEnvelope {
  SP_ENVELOPE_ERROR_FUNCTION = 0,
  SP_ENVELOPE_RECTANGULAR = 1,
} SpEnvelope;

/**
 * Offset-sine π pulse.
 */
typedef struct SpPulse SpPulse;

/**
 * Driven two-level system.
 */
typedef struct SpSystem SpSystem;

/**
 * Sampled evolution from spin up.
 */
typedef struct SpTrajectory SpTrajectory;

/**
 * Refined landscape optimum.
 */
typedef struct SpOptimum {
  double best_phase;
  double best_offset;
  double best_fidelity;
  double zero_offset_best_phase;
  double zero_offset_best_fidelity;
} SpOptimum;

/**
 * Damped-sine fit of a Rabi trace; frequencies in kHz for times in µs.
 */
typedef struct SpRabiFit {
  double rabi_frequency;
  double frequency_stderr;
  /**
   * µs; zero when the fitted decay rate is not positive.
   */
  double decay_time;
  double amplitude;
  double phase;
  double baseline;
} SpRabiFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *spinpulse_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *spinpulse_version(void);

/**
 * Creates a system with splitting `omega0`, drive amplitude `omega_d` and
 * tilt `theta_d` (radians).
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum SpStatus spinpulse_system_new(double omega0,
                                   double omega_d,
                                   double theta_d,
                                   struct SpSystem **out);

/**
 * Creates the system whose amplitude cancels the splitting, `Ωd = ω0 / (2 tan θd)`.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum SpStatus spinpulse_system_exact_cancellation(double omega0,
                                                  double theta_d,
                                                  struct SpSystem **out);

/**
 * Drive amplitude of `sys`, or NaN for NULL.
 *
 * # Safety
 * `sys` must be NULL or a live handle.
 */
double spinpulse_system_omega_d(const struct SpSystem *sys);

/**
 * # Safety
 * `sys` must be NULL or a handle from this library not yet freed.
 */
void spinpulse_system_free(struct SpSystem *sys);

/**
 * Creates the standard π pulse for `sys` with offset `a` in `[-1, 1]` and
 * phase `phi`; the rise time is `π/(10 ω0)`.
 *
 * # Safety
 * `sys` must be a live handle and `out` valid for a pointer write.
 */
enum SpStatus spinpulse_pulse_new(const struct SpSystem *sys,
                                  double offset,
                                  double phase,
                                  enum SpEnvelope envelope,
                                  struct SpPulse **out);

/**
 * Creates a pulse with explicit rise time and duration.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum SpStatus spinpulse_pulse_custom(double offset,
                                     double phase,
                                     double rise_time,
                                     double duration,
                                     enum SpEnvelope envelope,
                                     struct SpPulse **out);

/**
 * Duration of `pulse`, or NaN for NULL.
 *
 * # Safety
 * `pulse` must be NULL or a live handle.
 */
double spinpulse_pulse_duration(const struct SpPulse *pulse);

/**
 * # Safety
 * `pulse` must be NULL or a handle from this library not yet freed.
 */
void spinpulse_pulse_free(struct SpPulse *pulse);

/**
 * Converged π-pulse fidelity `|⟨ψ(T)|↓⟩|²` starting from spin up.
 *
 * # Safety
 * `sys` and `pulse` must be live handles; `fidelity` valid for a write.
 */
enum SpStatus spinpulse_pulse_fidelity(const struct SpSystem *sys,
                                       const struct SpPulse *pulse,
                                       double *fidelity);

/**
 * Propagates spin up through `pulse`, keeping `samples` uniform output
 * samples (at least 2).
 *
 * # Safety
 * `sys` and `pulse` must be live handles; `out` valid for a pointer write.
 */
enum SpStatus spinpulse_simulate(const struct SpSystem *sys,
                                 const struct SpPulse *pulse,
                                 uintptr_t samples,
                                 struct SpTrajectory **out);

/**
 * Number of samples in `traj`, zero for NULL.
 *
 * # Safety
 * `traj` must be NULL or a live handle.
 */
uintptr_t spinpulse_trajectory_len(const struct SpTrajectory *traj);

/**
 * Final fidelity of `traj`, or NaN for NULL.
 *
 * # Safety
 * `traj` must be NULL or a live handle.
 */
double spinpulse_trajectory_fidelity(const struct SpTrajectory *traj);

/**
 * Time and populations of sample `index`.
 *
 * # Safety
 * `traj` must be a live handle; the outputs valid for writes.
 */
enum SpStatus spinpulse_trajectory_sample(const struct SpTrajectory *traj,
                                          uintptr_t index,
                                          double *t,
                                          double *p_up,
                                          double *p_down);

/**
 * # Safety
 * `traj` must be NULL or a handle from this library not yet freed.
 */
void spinpulse_trajectory_free(struct SpTrajectory *traj);

/**
 * Scans a `phase_n × offset_n` landscape of erf-enveloped π pulses and
 * refines the optimum to `refine_tol`.
 *
 * # Safety
 * `sys` must be a live handle; `out` valid for a write.
 */
enum SpStatus spinpulse_optimize(const struct SpSystem *sys,
                                 uintptr_t phase_n,
                                 uintptr_t offset_n,
                                 double refine_tol,
                                 struct SpOptimum *out);

/**
 * Field per unit current (G/A) of the default spiral antenna at `(x, y, z)`
 * in µm, converged to relative `tol`. Writes three components to `b`.
 *
 * # Safety
 * `b` must be valid for writing three doubles.
 */
enum SpStatus spinpulse_spiral_field(double x, double y, double z, double tol, double *b);

/**
 * Fits a damped sine to `n` samples (times in µs, ascending).
 *
 * # Safety
 * `times` and `signal` must point to `n` readable doubles; `out` valid for a write.
 */
enum SpStatus spinpulse_fit_rabi(const double *times,
                                 const double *signal,
                                 uintptr_t n,
                                 struct SpRabiFit *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPINPULSE_H */
