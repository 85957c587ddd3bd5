#ifndef ALRISK_H
#define ALRISK_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum AlriskEstimator {
  ALRISK_ESTIMATOR_NAIVE = 0,
  ALRISK_ESTIMATOR_PURE = 1,
  ALRISK_ESTIMATOR_LURE = 2,
} AlriskEstimator;

/**
 * Result of every fallible call.
 */
typedef enum AlriskStatus {
  ALRISK_STATUS_OK = 0,
  ALRISK_STATUS_NULL_POINTER = 1,
  ALRISK_STATUS_INVALID_ARGUMENT = 2,
  ALRISK_STATUS_INVALID_PROPOSAL = 3,
  ALRISK_STATUS_DEGENERATE_PROPOSAL = 4,
  ALRISK_STATUS_CONFIG = 5,
  ALRISK_STATUS_CONSISTENCY = 6,
  ALRISK_STATUS_RESOURCE = 7,
  ALRISK_STATUS_SINGULAR = 8,
  ALRISK_STATUS_IO = 9,
  ALRISK_STATUS_PANIC = 10,
} AlriskStatus;

/**
 * Labelled pool with per-point losses.
 */
typedef struct AlriskPool AlriskPool;

/**
 * Acquisition proposal.
 */
typedef struct AlriskProposal AlriskProposal;

/**
 * Sequence of acquisitions with their masses and losses.
 */
typedef struct AlriskTrajectory AlriskTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or an empty string. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *alrisk_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *alrisk_version(void);

/**
 * Pool of `n` points with the given losses. Features are the point indices.
 *
 * # Safety
 * `losses` must point to `n` doubles and `out_pool` must be writable.
 */
enum AlriskStatus alrisk_pool_from_losses(const double *losses,
                                          size_t n,
                                          struct AlriskPool **out_pool);

/**
 * Pool of `n` points with `dim` features each (row-major), labels and
 * optional losses (`losses` may be null).
 *
 * # Safety
 * `features` must point to `n * dim` doubles, `labels` to `n` doubles and
 * `losses`, when not null, to `n` doubles.
 */
enum AlriskStatus alrisk_pool_new(const double *features,
                                  size_t n,
                                  size_t dim,
                                  const double *labels,
                                  const double *losses,
                                  struct AlriskPool **out_pool);

/**
 * # Safety
 * `pool` must come from this library and not be used afterwards.
 */
void alrisk_pool_free(struct AlriskPool *pool);

/**
 * # Safety
 * `pool` must be a live handle and `out_len` writable.
 */
enum AlriskStatus alrisk_pool_len(const struct AlriskPool *pool, size_t *out_len);

/**
 * Mean loss over the whole pool.
 *
 * # Safety
 * `pool` must be a live handle and `out_risk` writable.
 */
enum AlriskStatus alrisk_pool_empirical_risk(const struct AlriskPool *pool, double *out_risk);

/**
 * # Safety
 * `out_proposal` must be writable.
 */
enum AlriskStatus alrisk_proposal_uniform(struct AlriskProposal **out_proposal);

/**
 * Masses proportional to `exp(temperature * score)` over one fixed score per
 * pool point.
 *
 * # Safety
 * `scores` must point to `n` doubles and `out_proposal` must be writable.
 */
enum AlriskStatus alrisk_proposal_boltzmann(double temperature,
                                            const double *scores,
                                            size_t n,
                                            struct AlriskProposal **out_proposal);

/**
 * Highest fixed score with probability `1 - epsilon`, otherwise uniform.
 *
 * # Safety
 * `scores` must point to `n` doubles and `out_proposal` must be writable.
 */
enum AlriskStatus alrisk_proposal_epsilon_greedy(double epsilon,
                                                 const double *scores,
                                                 size_t n,
                                                 struct AlriskProposal **out_proposal);

/**
 * Masses proportional to the pool losses.
 *
 * # Safety
 * `out_proposal` must be writable.
 */
enum AlriskStatus alrisk_proposal_optimal_loss(struct AlriskProposal **out_proposal);

/**
 * Boltzmann over summed squared distances to the acquired points.
 *
 * # Safety
 * `out_proposal` must be writable.
 */
enum AlriskStatus alrisk_proposal_geometric_boltzmann(double beta,
                                                      struct AlriskProposal **out_proposal);

/**
 * Makes the proposal never propose the given indices.
 *
 * # Safety
 * `proposal` must be a live handle and `indices` must point to `n` values.
 */
enum AlriskStatus alrisk_proposal_set_ignored(struct AlriskProposal *proposal,
                                              const size_t *indices,
                                              size_t n);

/**
 * # Safety
 * `proposal` must come from this library and not be used afterwards.
 */
void alrisk_proposal_free(struct AlriskProposal *proposal);

/**
 * Samples `m` acquisitions using stream 0 of `seed`.
 *
 * # Safety
 * `pool` and `proposal` must be live handles and `out_trajectory` writable.
 */
enum AlriskStatus alrisk_sample_trajectory(const struct AlriskPool *pool,
                                           const struct AlriskProposal *proposal,
                                           size_t m,
                                           uint64_t seed,
                                           struct AlriskTrajectory **out_trajectory);

/**
 * Trajectory from recorded acquisitions over a pool of `pool_size` points.
 *
 * # Safety
 * `indices`, `masses` and `losses` must each point to `m` values and
 * `out_trajectory` must be writable.
 */
enum AlriskStatus alrisk_trajectory_new(const size_t *indices,
                                        const double *masses,
                                        const double *losses,
                                        size_t m,
                                        size_t pool_size,
                                        struct AlriskTrajectory **out_trajectory);

/**
 * # Safety
 * `trajectory` must be a live handle and `out_len` writable.
 */
enum AlriskStatus alrisk_trajectory_len(const struct AlriskTrajectory *trajectory, size_t *out_len);

/**
 * Copies the steps into caller arrays of capacity `capacity`; any of the
 * three arrays may be null to skip it.
 *
 * # Safety
 * Non-null arrays must have room for `capacity` values.
 */
enum AlriskStatus alrisk_trajectory_steps(const struct AlriskTrajectory *trajectory,
                                          size_t *indices,
                                          double *masses,
                                          double *losses,
                                          size_t capacity);

/**
 * # Safety
 * `trajectory` must come from this library and not be used afterwards.
 */
void alrisk_trajectory_free(struct AlriskTrajectory *trajectory);

/**
 * Evaluates an estimator. `weights`, when not null, receives the per-step
 * weights and must have room for the trajectory length.
 *
 * # Safety
 * `trajectory` must be a live handle and `out_value` writable.
 */
enum AlriskStatus alrisk_estimate(const struct AlriskTrajectory *trajectory,
                                  enum AlriskEstimator estimator,
                                  double *out_value,
                                  double *weights);

/**
 * Writes the `m` LURE levelling constants for acquisition count `m` and
 * pool size `n` into `out_c`.
 *
 * # Safety
 * `out_c` must have room for `m` doubles.
 */
enum AlriskStatus alrisk_lure_constants(size_t m, size_t n, double *out_c);

/**
 * Exact mean and variance of an estimator over every acquisition sequence of
 * length `m`, conditional on the pool.
 *
 * # Safety
 * `pool` and `proposal` must be live handles; `out_mean` and `out_variance`
 * must be writable.
 */
enum AlriskStatus alrisk_enumerate_moments(const struct AlriskPool *pool,
                                           const struct AlriskProposal *proposal,
                                           size_t m,
                                           enum AlriskEstimator estimator,
                                           double *out_mean,
                                           double *out_variance);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALRISK_H */
