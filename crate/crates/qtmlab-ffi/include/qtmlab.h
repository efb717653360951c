#ifndef QTMLAB_H
#define QTMLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define QTMLAB_OK 0

#define QTMLAB_ERR_VALIDATION 1

#define QTMLAB_ERR_BUDGET 2

#define QTMLAB_ERR_UNREACHABLE 3

#define QTMLAB_ERR_ARGUMENT 4

/**
 * Opaque unitary-decomposition handle.
 */
typedef struct QtmlabDecomposition QtmlabDecomposition;

/**
 * Opaque spin-boson model handle.
 */
typedef struct QtmlabModel QtmlabModel;

/**
 * Factor descriptor: `kind` 0 = two-level rotation on (i, j),
 * 1 = phase on coordinate i (j unused). `n` is the angle multiple in
 * rational-angle mode, or -1 in exact mode.
 */
typedef struct QtmlabFactor {
  int32_t kind;
  uintptr_t i;
  uintptr_t j;
  double angle;
  int64_t n;
} QtmlabFactor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Releases a string returned by this library.
 */
void qtmlab_string_free(char *s);

/**
 * Parses a spin-boson model description (JSON) into a handle.
 */
int32_t qtmlab_model_from_json(const char *json, struct QtmlabModel **out);

void qtmlab_model_free(struct QtmlabModel *model);

/**
 * Computes nu, gamma, sigma, and (at zero temperature) phi.
 * `has_phi` receives 0 or 1.
 */
int32_t qtmlab_model_coefficients(const struct QtmlabModel *model,
                                  double *nu,
                                  double *gamma,
                                  double *sigma,
                                  double *phi,
                                  int32_t *has_phi);

/**
 * <psi0|P(t)|psi0> for psi0 = (re0 + i im0, re1 + i im1) in the
 * sigma_z basis.
 */
int32_t qtmlab_p_expectation(const struct QtmlabModel *model,
                             double t,
                             double re0,
                             double im0,
                             double re1,
                             double im1,
                             double *out_re,
                             double *out_im);

/**
 * Searches epsilon in [0, eps_max] (eps_max <= 0 selects the default
 * range) for J(nu*delta) = 0 with the model's delta and density.
 * Returns 3 when no decoherence-free point is reachable; the best
 * parameters found are still written.
 */
int32_t qtmlab_tune(const struct QtmlabModel *model,
                    double eps_max,
                    double *out_epsilon,
                    double *out_nu,
                    double *out_gamma,
                    int32_t *out_free);

/**
 * Decomposes a unitary given as JSON {"matrix": [[[re, im], ...], ...]}.
 * epsilon > 0 selects rational-angle mode with base angle theta0
 * (theta0 <= 0 selects acos(3/5)) and search bound n_max.
 */
int32_t qtmlab_decompose(const char *matrix_json,
                         double epsilon,
                         double theta0,
                         uint64_t n_max,
                         struct QtmlabDecomposition **out);

void qtmlab_decomposition_free(struct QtmlabDecomposition *d);

uintptr_t qtmlab_decomposition_count(const struct QtmlabDecomposition *d);

double qtmlab_decomposition_residual(const struct QtmlabDecomposition *d);

/**
 * Copies factor `k` into `out`.
 */
int32_t qtmlab_decomposition_factor(const struct QtmlabDecomposition *d,
                                    uintptr_t k,
                                    struct QtmlabFactor *out);

/**
 * Runs a circuit description (JSON) on a basis state given as a bit
 * string ("" selects all zeros) and returns the measurement
 * distribution as a JSON object keyed by bit strings.
 */
int32_t qtmlab_circuit_run_json(const char *circuit_json, const char *input_bits, char **out_json);

/**
 * Runs a machine description (JSON) on an input word (single-character
 * or comma-separated symbols) for at most t_max steps. Returns 0 when
 * halted, 2 when the budget ran out; the outcome JSON
 * {"halted", "t", "distribution"} is written either way.
 */
int32_t qtmlab_qtm_run_json(const char *machine_json,
                            const char *input_word,
                            uintptr_t t_max,
                            char **out_json);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* QTMLAB_H */
