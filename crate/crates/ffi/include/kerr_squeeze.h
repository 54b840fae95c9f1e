#ifndef KERR_SQUEEZE_H
#define KERR_SQUEEZE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define KS_OK 0

#define KS_ERR_NULL_POINTER 1

#define KS_ERR_INVALID_INPUT 2

#define KS_ERR_WINDOW_TOO_SMALL 3

#define KS_ERR_SPECTRAL_CLIPPING 4

#define KS_ERR_NUMERICAL 5

#define KS_ERR_UNDEFINED 6

#define KS_ERR_GRID_TOO_LARGE 7

#define KS_ERR_INCONCLUSIVE 8

#define KS_ERR_PANIC 99

#define KS_SHAPE_SECH 0

#define KS_SHAPE_GAUSSIAN 1

// Opaque complex envelope on a time grid.
typedef struct KsEnvelope KsEnvelope;

// Opaque mean field plus fluctuation covariance.
typedef struct KsQuantumState KsQuantumState;

// Opaque key-distribution session record.
typedef struct KsSession KsSession;

// Fibre parameters: β₂ in ps²/m, γ in 1/(W·m), length in m, loss in 1/m.
typedef struct KsFibre {
  double beta2;
  double gamma;
  double length;
  double loss;
} KsFibre;

typedef struct KsSiftSummary {
  double sift_rate;
  size_t key_length;
  // 1 when Alice's and Bob's keys are identical.
  int32_t keys_agree;
} KsSiftSummary;

typedef struct KsEavesdropReport {
  int32_t flag;
  int32_t unusable;
  double cond_var_x;
  double cond_var_p;
} KsEavesdropReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Length in bytes of the last error message on this thread (0 if none).
size_t ks_last_error_length(void);

// Copies the last error message, NUL-terminated and truncated to `len`
// bytes including the terminator. Returns the number of bytes written
// without the terminator.
size_t ks_last_error_message(char *buf, size_t len);

// The calibrated fibre (9 pJ fundamental soliton at 130 fs) of given length.
struct KsFibre ks_fibre_calibrated(double length);

// Builds an unchirped pulse of `energy_pj` with intensity FWHM `fwhm_fs`.
int32_t ks_pulse_new(int32_t shape,
                     double fwhm_fs,
                     double energy_pj,
                     size_t n_samples,
                     double window_ps,
                     struct KsEnvelope **out_env);

void ks_envelope_free(struct KsEnvelope *env);

// Number of time samples (0 for a null handle).
size_t ks_envelope_len(const struct KsEnvelope *env);

// Pulse energy in pJ (NaN for a null handle).
double ks_envelope_energy(const struct KsEnvelope *env);

// Copies the samples (√W) into `re` and `im`, each `len` long; `len` must
// equal the envelope length.
int32_t ks_envelope_samples(const struct KsEnvelope *env, double *re, double *im, size_t len);

// Classical split-step propagation through `fibre`.
int32_t ks_propagate(const struct KsEnvelope *env,
                     const struct KsFibre *fibre,
                     double max_phase_per_step,
                     double max_step,
                     struct KsEnvelope **out_env);

// Propagation with linearized vacuum fluctuations.
int32_t ks_propagate_quantum(const struct KsEnvelope *env,
                             const struct KsFibre *fibre,
                             double max_phase_per_step,
                             double max_step,
                             struct KsQuantumState **out_state);

void ks_quantum_free(struct KsQuantumState *state);

// Photon-number noise ratio (1 = shot noise) behind a knife edge at
// `cutoff` rad/ps; pass -INFINITY for the unfiltered beam.
int32_t ks_quantum_noise_ratio(const struct KsQuantumState *state, double cutoff, double *ratio);

// Knife-edge scan with an ideal detector; writes one dB value per cutoff
// in ascending cutoff order (`n >= 8`).
int32_t ks_squeezing_scan(const struct KsQuantumState *state,
                          const double *cutoffs,
                          size_t n,
                          double *ratios_db);

// Seeded session on a pair made from two amplitude-squeezed inputs with
// amplitude variance `amplitude_variance`, interfered at π/2.
int32_t ks_session_run(double amplitude_variance,
                       double transmittance,
                       double excess_noise,
                       double tap,
                       size_t n_slots,
                       size_t pulses_per_slot,
                       uint64_t seed,
                       struct KsSession **out_session);

void ks_session_free(struct KsSession *session);

// Fraction of slots in which both parties chose the same basis.
double ks_session_matched_fraction(const struct KsSession *session);

int32_t ks_sift(const struct KsSession *session, size_t block_size, struct KsSiftSummary *summary);

// Conditional-variance test; `KS_ERR_INCONCLUSIVE` when fewer than 100
// matched slots per basis are available.
int32_t ks_detect_eavesdropper(const struct KsSession *session,
                               double threshold,
                               struct KsEavesdropReport *report);

// repetition rate × sift rate × (1 − overhead), bits/s.
int32_t ks_raw_bit_rate(double repetition_rate_hz, double sift_rate, double overhead, double *rate);

// Runs a built-in scenario by name, or every scenario in a TOML config
// file, writing into `out_dir/<name>/`.
int32_t ks_run_scenario(const char *name_or_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KERR_SQUEEZE_H */
