/* C interface for the loopsoup sampler library. */

#ifndef LOOPSOUP_H
#define LOOPSOUP_H

/* Generated by cbindgen from the loopsoup-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible call in this interface.
typedef enum LsStatus {
  // The call succeeded.
  LS_STATUS_OK = 0,
  // A required pointer argument was null.
  LS_STATUS_NULL_POINTER = 1,
  // An argument failed validation; see `ls_last_error_message`.
  LS_STATUS_INVALID_ARGUMENT = 2,
  // The operation failed while running; see `ls_last_error_message`.
  LS_STATUS_RUNTIME_ERROR = 3,
} LsStatus;

// A finite lattice domain together with its killing rates and a dense,
// precomputed Green's function.
typedef struct LsDomain LsDomain;

// A finished experiment run: pass/fail verdict plus the full report.
typedef struct LsReport LsReport;

// A random-walk loop soup sampled on some [`LsDomain`].
typedef struct LsSoup LsSoup;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static, NUL-terminated string. Never null; do not
// free.
const char *ls_version(void);

// Message for the most recent failing call on the current thread, or null if
// nothing has failed yet. The pointer stays valid until the next failing
// `ls_*` call on the same thread; do not free.
const char *ls_last_error_message(void);

// Number of named experiments in the registry.
uintptr_t ls_experiment_count(void);

// Name of the experiment at `index` (0-based, registry order), or null if
// the index is out of range. The pointer is static; do not free.
const char *ls_experiment_name(uintptr_t index);

// Build a `width × height` grid domain with constant mass `mass` and
// precompute its Green's function (dense inverse, so keep grids small).
//
// On success writes a fresh handle to `*out`; release it with
// [`ls_domain_free`].
//
// # Safety
// `out` must point to writable memory for one pointer.
enum LsStatus ls_domain_new_grid(int32_t width, int32_t height, double mass, struct LsDomain **out);

// Release a domain handle. Passing null is a no-op.
//
// # Safety
// `domain` must be null or a pointer from [`ls_domain_new_grid`] that has not
// been freed before.
void ls_domain_free(struct LsDomain *domain);

// Number of sites in the domain, written to `*out`.
//
// # Safety
// `domain` must be a live domain handle (or null) and `out` must point to
// writable memory for one `uintptr_t`.
enum LsStatus ls_domain_site_count(const struct LsDomain *domain, uintptr_t *out);

// Green's function entry G(i, j) for site indices in domain order, written to
// `*out`.
//
// # Safety
// `domain` must be a live domain handle (or null) and `out` must point to
// writable memory for one `double`.
enum LsStatus ls_domain_green(const struct LsDomain *domain, uintptr_t i, uintptr_t j, double *out);

// Sample a loop soup of intensity `lambda` on `domain`, keeping loops of
// length at most `maxlen`. The same `(domain, lambda, maxlen, seed)` always
// yields the same soup.
//
// On success writes a fresh handle to `*out`; release it with
// [`ls_soup_free`].
//
// # Safety
// `domain` must be a live domain handle (or null) and `out` must point to
// writable memory for one pointer.
enum LsStatus ls_soup_sample(const struct LsDomain *domain,
                             double lambda,
                             uintptr_t maxlen,
                             uint64_t seed,
                             struct LsSoup **out);

// Release a soup handle. Passing null is a no-op.
//
// # Safety
// `soup` must be null or a pointer from [`ls_soup_sample`] that has not been
// freed before.
void ls_soup_free(struct LsSoup *soup);

// Number of loops in the soup, written to `*out`.
//
// # Safety
// `soup` must be a live soup handle (or null) and `out` must point to
// writable memory for one `uintptr_t`.
enum LsStatus ls_soup_loop_count(const struct LsSoup *soup, uintptr_t *out);

// Total number of lattice steps over all loops in the soup, written to
// `*out`.
//
// # Safety
// `soup` must be a live soup handle (or null) and `out` must point to
// writable memory for one `uintptr_t`.
enum LsStatus ls_soup_total_steps(const struct LsSoup *soup, uintptr_t *out);

// Draw the occupation field of `soup` into `out[0..len]`, one value per site
// in domain order. `len` must equal the domain's site count and the soup must
// have been sampled on `domain`. The continuous excursion parts derive from
// the soup's own seed, so the result is a deterministic function of
// `(domain, soup)`.
//
// # Safety
// `domain` and `soup` must be live handles (or null) and `out` must point to
// writable memory for `len` doubles.
enum LsStatus ls_soup_occupation(const struct LsDomain *domain,
                                 const struct LsSoup *soup,
                                 double *out,
                                 uintptr_t len);

// Run a registry experiment under its pinned default configuration.
// `workers` sets the worker-thread count (0 means one per core). On success
// writes a fresh report handle to `*out`; release it with
// [`ls_report_free`].
//
// # Safety
// `name` must be null or a NUL-terminated string, and `out` must point to
// writable memory for one pointer.
enum LsStatus ls_experiment_run_default(const char *name, uintptr_t workers, struct LsReport **out);

// Run a registry experiment with an explicit seed and replica count
// (`replicas >= 1`); everything else keeps the pinned defaults. On success
// writes a fresh report handle to `*out`; release it with
// [`ls_report_free`].
//
// # Safety
// `name` must be null or a NUL-terminated string, and `out` must point to
// writable memory for one pointer.
enum LsStatus ls_experiment_run(const char *name,
                                uint64_t seed,
                                uint64_t replicas,
                                uintptr_t workers,
                                struct LsReport **out);

// Release a report handle. Passing null is a no-op.
//
// # Safety
// `report` must be null or a pointer from an `ls_experiment_run*` call that
// has not been freed before.
void ls_report_free(struct LsReport *report);

// Whether every asserted criterion in the report passed, written to `*out`.
//
// # Safety
// `report` must be a live report handle (or null) and `out` must point to
// writable memory for one `bool`.
enum LsStatus ls_report_passed(const struct LsReport *report, bool *out);

// Serialize the report to its canonical JSON form. On success writes a
// heap-allocated, NUL-terminated string to `*out`; release it with
// [`ls_string_free`].
//
// # Safety
// `report` must be a live report handle (or null) and `out` must point to
// writable memory for one pointer.
enum LsStatus ls_report_json(const struct LsReport *report, char **out);

// Release a string returned by this library. Passing null is a no-op.
//
// # Safety
// `s` must be null or a pointer returned through an `ls_*` out-parameter
// documented to be freed here, and must not have been freed before.
void ls_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOOPSOUP_H */
