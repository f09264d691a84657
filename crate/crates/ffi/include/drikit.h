#ifndef DRIKIT_H
#define DRIKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/*
 Result codes shared by all functions.
 */
typedef enum DrikitStatus {
  DRIKIT_STATUS_OK = 0,
  DRIKIT_STATUS_NULL_POINTER = 1,
  DRIKIT_STATUS_INVALID_ARGUMENT = 2,
  DRIKIT_STATUS_NUMERICAL = 3,
  DRIKIT_STATUS_IO = 4,
  DRIKIT_STATUS_PANIC = 5,
} DrikitStatus;

/*
 Verdict of [`drikit_dri_verdict`], numerically equal to the CLI exit codes.
 */
typedef enum DrikitVerdict {
  DRIKIT_VERDICT_VERIFIED = 0,
  DRIKIT_VERDICT_INCONCLUSIVE = 2,
  DRIKIT_VERDICT_UPPER_SUM_DIVERGES = 3,
} DrikitVerdict;

/*
 A probability density.
 */
typedef struct DrikitDensity DrikitDensity;

/*
 Samples of a function on a uniform grid.
 */
typedef struct DrikitGrid DrikitGrid;

/*
 A truncated renewal density series.
 */
typedef struct DrikitRenewal DrikitRenewal;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty if none. The
 pointer stays valid until the next failing call on the same thread.
 */
const char *drikit_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *drikit_version(void);

/*
 Builds a density from a JSON descriptor such as
 `{"name": "pareto", "params": {"alpha": 0.6}}`.

 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DrikitStatus drikit_density_from_json(const char *json, struct DrikitDensity **out);

/*
 # Safety
 `out` must be a valid pointer.
 */
enum DrikitStatus drikit_density_exponential(double rate, struct DrikitDensity **out);

/*
 # Safety
 `out` must be a valid pointer.
 */
enum DrikitStatus drikit_density_uniform(double a, double b, struct DrikitDensity **out);

/*
 # Safety
 `out` must be a valid pointer.
 */
enum DrikitStatus drikit_density_pareto(double alpha, double scale, struct DrikitDensity **out);

/*
 # Safety
 `d` must come from a density constructor and not be used afterwards.
 */
void drikit_density_free(struct DrikitDensity *d);

/*
 # Safety
 `d` must be a live density handle and `out` a valid pointer.
 */
enum DrikitStatus drikit_density_eval(const struct DrikitDensity *d, double x, double *out);

/*
 # Safety
 `d` must be a live density handle and `out` a valid pointer.
 */
enum DrikitStatus drikit_density_cdf(const struct DrikitDensity *d, double x, double *out);

/*
 Cell averages of `d` on `[lo, hi]` with spacing `h`.

 # Safety
 `d` must be a live density handle and `out` a valid pointer.
 */
enum DrikitStatus drikit_grid_discretize(const struct DrikitDensity *d,
                                         double lo,
                                         double hi,
                                         double h,
                                         struct DrikitGrid **out);

/*
 A grid from `len` samples starting at `origin`.

 # Safety
 `values` must point to `len` readable doubles and `out` be valid.
 */
enum DrikitStatus drikit_grid_new(double origin,
                                  double spacing,
                                  const double *values,
                                  size_t len,
                                  struct DrikitGrid **out);

/*
 # Safety
 `g` must come from a grid constructor and not be used afterwards.
 */
void drikit_grid_free(struct DrikitGrid *g);

/*
 Number of samples, or 0 for a null handle.

 # Safety
 `g` must be null or a live grid handle.
 */
size_t drikit_grid_len(const struct DrikitGrid *g);

/*
 Writes origin and spacing.

 # Safety
 `g` must be a live grid handle; the outputs valid pointers.
 */
enum DrikitStatus drikit_grid_geometry(const struct DrikitGrid *g, double *origin, double *spacing);

/*
 Copies up to `cap` samples into `buf` and stores the count in `written`.

 # Safety
 `buf` must have room for `cap` doubles.
 */
enum DrikitStatus drikit_grid_values(const struct DrikitGrid *g,
                                     double *buf,
                                     size_t cap,
                                     size_t *written);

/*
 Linear interpolation of the samples; zero outside the window.

 # Safety
 `g` must be a live grid handle and `out` a valid pointer.
 */
enum DrikitStatus drikit_grid_eval(const struct DrikitGrid *g, double x, double *out);

/*
 `k`-fold convolution power of `g`.

 # Safety
 `g` must be a live grid handle and `out` a valid pointer.
 */
enum DrikitStatus drikit_grid_convolution_power(const struct DrikitGrid *g,
                                                size_t k,
                                                struct DrikitGrid **out);

/*
 d.R.i. verdict over a strictly decreasing mesh ladder.

 # Safety
 `ladder` must point to `n` doubles; `g` and `out` must be valid.
 */
enum DrikitStatus drikit_dri_verdict(const struct DrikitGrid *g,
                                     const double *ladder,
                                     size_t n,
                                     double tol,
                                     enum DrikitVerdict *out);

/*
 `u_N = Σ_{n≤N} f_n` on `[0, x_max]` with spacing `h`; the window shrinks
 until the certified remainder is at most `tol`.

 # Safety
 `d` must be a live density handle and `out` a valid pointer.
 */
enum DrikitStatus drikit_renewal_new(const struct DrikitDensity *d,
                                     size_t n_terms,
                                     double x_max,
                                     double h,
                                     double tol,
                                     struct DrikitRenewal **out);

/*
 # Safety
 `r` must come from [`drikit_renewal_new`] and not be used afterwards.
 */
void drikit_renewal_free(struct DrikitRenewal *r);

/*
 Reported window end and remainder bound.

 # Safety
 `r` must be a live handle; the outputs valid pointers.
 */
enum DrikitStatus drikit_renewal_info(const struct DrikitRenewal *r,
                                      double *x_max,
                                      double *remainder);

/*
 `u_N(x)`.

 # Safety
 `r` must be a live handle and `out` a valid pointer.
 */
enum DrikitStatus drikit_renewal_eval(const struct DrikitRenewal *r, double x, double *out);

/*
 Monte Carlo estimate and standard error of `U([x, x + delta))`.

 # Safety
 `d` must be a live density handle; the outputs valid pointers.
 */
enum DrikitStatus drikit_simulate_window(const struct DrikitDensity *d,
                                         double x,
                                         double delta,
                                         uint64_t paths,
                                         uint64_t seed,
                                         double *estimate,
                                         double *std_error);

/*
 `1 / (Γ(α) Γ(2 − α))`; NaN outside `(0, 1]`.
 */
double drikit_heavy_tail_constant(double alpha);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DRIKIT_H */
