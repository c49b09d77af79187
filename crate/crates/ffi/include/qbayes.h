/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef QBAYES_H
#define QBAYES_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every exported function.
typedef enum QbStatus {
  QB_STATUS_OK = 0,
  QB_STATUS_NULL_POINTER = 1,
  QB_STATUS_INVALID_ARGUMENT = 2,
  QB_STATUS_INVALID_STATE = 3,
  QB_STATUS_DIMENSION = 4,
  QB_STATUS_CAPACITY = 5,
  QB_STATUS_IMPOSSIBLE_OUTCOME = 6,
  QB_STATUS_INVALID_PRIOR = 7,
  QB_STATUS_NO_INTERIOR_SOLUTION = 8,
  QB_STATUS_CONFIG = 9,
  QB_STATUS_IO = 10,
  QB_STATUS_PARSE = 11,
  QB_STATUS_BUFFER_TOO_SMALL = 12,
  QB_STATUS_PANIC = 13,
} QbStatus;

// Opaque weighted set of density operators.
typedef struct QbEnsemble QbEnsemble;

// Opaque POVM.
typedef struct QbPovm QbPovm;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on this thread.
const char *qb_last_error(void);

// Library version, NUL-terminated, static.
const char *qb_version(void);

// Ensemble of `n` qubit atoms. `weights` has `n` entries summing to one;
// `bloch` holds `3n` coordinates.
enum QbStatus qb_ensemble_from_bloch(const double *weights,
                                     const double *bloch,
                                     size_t n,
                                     struct QbEnsemble **out);

// Discretizes a prior given as JSON.
enum QbStatus qb_ensemble_from_prior_json(const char *json, struct QbEnsemble **out);

// Parses an ensemble in its JSON form `{dim, atoms}`.
enum QbStatus qb_ensemble_from_json(const char *json, struct QbEnsemble **out);

// Writes the JSON form into `buf` including the terminating NUL. `needed`
// receives the required capacity; a short buffer yields
// `QB_STATUS_BUFFER_TOO_SMALL` and leaves `buf` untouched.
enum QbStatus qb_ensemble_to_json(const struct QbEnsemble *e,
                                  char *buf,
                                  size_t cap,
                                  size_t *needed);

void qb_ensemble_free(struct QbEnsemble *e);

enum QbStatus qb_ensemble_len(const struct QbEnsemble *e, size_t *out);

enum QbStatus qb_ensemble_dim(const struct QbEnsemble *e, size_t *out);

// Copies the weights into `out`, which must hold `qb_ensemble_len` values.
enum QbStatus qb_ensemble_weights(const struct QbEnsemble *e, double *out, size_t cap);

// Bloch vector of the single-copy marginal of a qubit ensemble.
enum QbStatus qb_ensemble_marginal_bloch(const struct QbEnsemble *e, double *out);

// Marginal state as `2·dim²` doubles: row-major (re, im) pairs.
enum QbStatus qb_ensemble_marginal_state(const struct QbEnsemble *e, double *out, size_t cap);

// Tetrahedral SIC POVM on a qubit.
enum QbStatus qb_povm_sic(struct QbPovm **out);

// Spin measurement along a unit `axis`; outcome 0 is `+1`.
enum QbStatus qb_povm_spin(const double *axis, struct QbPovm **out);

// Parses a POVM in its JSON form `{dim, effects}`.
enum QbStatus qb_povm_from_json(const char *json, struct QbPovm **out);

void qb_povm_free(struct QbPovm *p);

enum QbStatus qb_povm_len(const struct QbPovm *p, size_t *out);

// Posterior after one outcome. `p_k` may be null.
enum QbStatus qb_bayes_update(const struct QbEnsemble *prior,
                              const struct QbPovm *povm,
                              size_t outcome,
                              struct QbEnsemble **posterior,
                              double *p_k);

// Posterior after outcome counts of one POVM. `log_evidence` may be null.
enum QbStatus qb_counts_update(const struct QbEnsemble *prior,
                               const struct QbPovm *povm,
                               const uint64_t *counts,
                               size_t n,
                               struct QbEnsemble **posterior,
                               double *log_evidence);

// Posterior after `n_plus` results `+1` and `n_minus` results `−1` along
// `axis`.
enum QbStatus qb_qubit_counts_update(const struct QbEnsemble *prior,
                                     const double *axis,
                                     uint64_t n_plus,
                                     uint64_t n_minus,
                                     struct QbEnsemble **posterior);

// Probabilities of `0..=n` results `+1` among `n` future spin measurements
// along `axis`. `out` must hold `n + 1` values.
enum QbStatus qb_posterior_predictive(const struct QbEnsemble *e,
                                      const double *axis,
                                      size_t n,
                                      double *out,
                                      size_t cap);

// Maximum-entropy qubit state with `⟨σ_z⟩ = e_z`, as 8 doubles: row-major
// (re, im) pairs.
enum QbStatus qb_maxent_qubit_z(double e_z, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QBAYES_H */
