#ifndef MLFAIR_H
#define MLFAIR_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MlfairStatus {
  MLFAIR_STATUS_OK = 0,
  MLFAIR_STATUS_NULL_POINTER = 1,
  MLFAIR_STATUS_INVALID_INPUT = 2,
  MLFAIR_STATUS_NUMERIC = 3,
  MLFAIR_STATUS_IO = 4,
  MLFAIR_STATUS_PANIC = 5,
} MlfairStatus;

typedef enum MlfairEmbedder {
  MLFAIR_EMBEDDER_SPECTRAL = 0,
  MLFAIR_EMBEDDER_DEEP_WALK = 1,
} MlfairEmbedder;

typedef struct MlfairAttributes MlfairAttributes;

typedef struct MlfairEmbedding MlfairEmbedding;

typedef struct MlfairGraph MlfairGraph;

typedef struct MlfairHierarchy MlfairHierarchy;

/**
 * Refinement hyperparameters; start from [`mlfair_refine_params_default`].
 */
typedef struct MlfairRefineParams {
  double lambda_r;
  double gamma;
  size_t epochs;
  double learning_rate;
  size_t layers;
  uint64_t seed;
} MlfairRefineParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL after a
 * success. The pointer stays valid until the next call on this thread.
 */
const char *mlfair_last_error(void);

/**
 * Reads a whitespace-separated `u v [w]` edge list.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum MlfairStatus mlfair_graph_from_edge_file(const char *path, struct MlfairGraph **out);

/**
 * Builds a graph on nodes `0..n` from `m` edges. `weights` may be NULL for
 * unit weights.
 *
 * # Safety
 * `src` and `dst` (and `weights` when non-NULL) must point to `m` readable
 * elements; `out` must be writable.
 */
enum MlfairStatus mlfair_graph_from_edges(size_t n,
                                          const size_t *src,
                                          const size_t *dst,
                                          const double *weights,
                                          size_t m,
                                          struct MlfairGraph **out);

/**
 * # Safety
 * `g` must be a live graph handle; `out` must be writable.
 */
enum MlfairStatus mlfair_graph_node_count(const struct MlfairGraph *g, size_t *out);

/**
 * Unordered edges, self-loops excluded.
 *
 * # Safety
 * `g` must be a live graph handle; `out` must be writable.
 */
enum MlfairStatus mlfair_graph_edge_count(const struct MlfairGraph *g, size_t *out);

/**
 * Sum of weighted degrees (self-loops count twice).
 *
 * # Safety
 * `g` must be a live graph handle; `out` must be writable.
 */
enum MlfairStatus mlfair_graph_total_degree(const struct MlfairGraph *g, double *out);

/**
 * # Safety
 * `g` must be NULL or a handle not yet freed.
 */
void mlfair_graph_free(struct MlfairGraph *g);

/**
 * One categorical attribute: node `u` has value `codes[u]` in `0..values`.
 *
 * # Safety
 * `codes` must point to `n` readable elements; `out` must be writable.
 */
enum MlfairStatus mlfair_attributes_from_codes(const size_t *codes,
                                               size_t n,
                                               size_t values,
                                               struct MlfairAttributes **out);

/**
 * Reads a `node,attr1,...` CSV and one-hot encodes it in `g`'s node order.
 *
 * # Safety
 * `path` must be a NUL-terminated string, `g` a live graph handle and `out`
 * writable.
 */
enum MlfairStatus mlfair_attributes_from_csv(const char *path,
                                             const struct MlfairGraph *g,
                                             struct MlfairAttributes **out);

/**
 * # Safety
 * `s` must be NULL or a handle not yet freed.
 */
void mlfair_attributes_free(struct MlfairAttributes *s);

/**
 * Attribute divergence `1 - 1/(1 + KL(su || sv))` of two distributions.
 *
 * # Safety
 * `su` and `sv` must point to `len` readable elements; `out` must be writable.
 */
enum MlfairStatus mlfair_divergence(const double *su, const double *sv, size_t len, double *out);

/**
 * Coarsens `levels` times. The inputs are copied; the handles stay owned by
 * the caller.
 *
 * # Safety
 * `g` and `s` must be live handles; `out` must be writable.
 */
enum MlfairStatus mlfair_coarsen(const struct MlfairGraph *g,
                                 const struct MlfairAttributes *s,
                                 size_t levels,
                                 double lambda_c,
                                 struct MlfairHierarchy **out);

/**
 * Number of coarsening steps actually taken.
 *
 * # Safety
 * `h` must be a live handle; `out` must be writable.
 */
enum MlfairStatus mlfair_hierarchy_depth(const struct MlfairHierarchy *h, size_t *out);

/**
 * Node count of level `level` (0 is the input graph).
 *
 * # Safety
 * `h` must be a live handle; `out` must be writable.
 */
enum MlfairStatus mlfair_hierarchy_level_nodes(const struct MlfairHierarchy *h,
                                               size_t level,
                                               size_t *out);

/**
 * Copy of the coarsest graph, the one to embed before refinement.
 *
 * # Safety
 * `h` must be a live handle; `out` must be writable.
 */
enum MlfairStatus mlfair_hierarchy_coarsest_graph(const struct MlfairHierarchy *h,
                                                  struct MlfairGraph **out);

/**
 * # Safety
 * `h` must be NULL or a handle not yet freed.
 */
void mlfair_hierarchy_free(struct MlfairHierarchy *h);

/**
 * Base embedding with default walk parameters for DeepWalk.
 *
 * # Safety
 * `g` must be a live handle; `out` must be writable.
 */
enum MlfairStatus mlfair_embed(const struct MlfairGraph *g,
                               enum MlfairEmbedder kind,
                               size_t dim,
                               uint64_t seed,
                               struct MlfairEmbedding **out);

struct MlfairRefineParams mlfair_refine_params_default(void);

/**
 * Trains the refinement model on the coarsest level with `base` as input
 * and returns the unit-norm embedding of the finest level.
 *
 * # Safety
 * `h` and `base` must be live handles, `params` readable and `out` writable.
 */
enum MlfairStatus mlfair_refine(const struct MlfairHierarchy *h,
                                const struct MlfairEmbedding *base,
                                const struct MlfairRefineParams *params,
                                struct MlfairEmbedding **out);

/**
 * # Safety
 * `e` must be a live handle; `out` must be writable.
 */
enum MlfairStatus mlfair_embedding_rows(const struct MlfairEmbedding *e, size_t *out);

/**
 * # Safety
 * `e` must be a live handle; `out` must be writable.
 */
enum MlfairStatus mlfair_embedding_dim(const struct MlfairEmbedding *e, size_t *out);

/**
 * Copies the embedding row-major into `buf`, which must hold exactly
 * `rows * dim` values.
 *
 * # Safety
 * `e` must be a live handle and `buf` must point to `len` writable values.
 */
enum MlfairStatus mlfair_embedding_copy(const struct MlfairEmbedding *e, double *buf, size_t len);

/**
 * # Safety
 * `e` must be NULL or a handle not yet freed.
 */
void mlfair_embedding_free(struct MlfairEmbedding *e);

/**
 * Demographic-parity dispersion over the advantaged classes.
 *
 * # Safety
 * `y_hat` and `group` must point to `n` values, `advantaged` to
 * `n_advantaged` values; `out` must be writable.
 */
enum MlfairStatus mlfair_delta_dp(const size_t *y_hat,
                                  const size_t *group,
                                  size_t n,
                                  const size_t *advantaged,
                                  size_t n_advantaged,
                                  double *out);

/**
 * Equality-of-opportunity dispersion over the advantaged classes.
 *
 * # Safety
 * `y_hat`, `y` and `group` must point to `n` values, `advantaged` to
 * `n_advantaged` values; `out` must be writable.
 */
enum MlfairStatus mlfair_delta_eo(const size_t *y_hat,
                                  const size_t *y,
                                  const size_t *group,
                                  size_t n,
                                  const size_t *advantaged,
                                  size_t n_advantaged,
                                  double *out);

/**
 * Runs the full pipeline from a `key=value` config file. A non-NULL
 * `out_dir` overrides the file's output directory.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string; `out_dir` NULL or one.
 */
enum MlfairStatus mlfair_pipeline_run(const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MLFAIR_H */
