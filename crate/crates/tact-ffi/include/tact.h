#ifndef TACT_H
#define TACT_H

/* Generated by cbindgen from tact-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum {
  TACT_STATUS_OK = 0,
  TACT_STATUS_NULL_ARGUMENT = 1,
  TACT_STATUS_INVALID_UTF8 = 2,
  TACT_STATUS_IO = 3,
  TACT_STATUS_PARSE = 4,
  TACT_STATUS_VOCAB = 5,
  TACT_STATUS_NUMERIC = 6,
  TACT_STATUS_CONTRACT = 7,
  TACT_STATUS_CONFIG = 8,
  TACT_STATUS_CHECKPOINT = 9,
  TACT_STATUS_INDEX = 10,
  TACT_STATUS_PANIC = 11,
} TactStatus;

/**
 * Opaque fact graph handle.
 */
typedef struct TactGraph TactGraph;

/**
 * Opaque trained-model handle.
 */
typedef struct TactModel TactModel;

/**
 * Opaque scoring session: a model bound to a fact graph.
 */
typedef struct TactSession TactSession;

/**
 * Training options. Zero/NULL fields fall back to the engine defaults
 * (dim 32, layers 2, hops 2, batch 16, epochs 10, one negative per
 * positive, lr 0.01, margin 8, relation-corruption probability 0.75,
 * parts "ngr", variant "full").
 */
typedef struct {
  uintptr_t dim;
  uintptr_t layers;
  uintptr_t hops;
  uintptr_t epochs;
  uintptr_t batch_size;
  uintptr_t n_neg;
  double lr;
  double margin;
  /**
   * Negative, e.g. -1.0, keeps the default.
   */
  double rel_neg_prob;
  uint64_t seed;
  /**
   * Subset of "ngr"; NULL means "ngr".
   */
  const char *parts;
  /**
   * One of "full", "base", "no-ra", "no-rc"; NULL means "full".
   */
  const char *variant;
} TactTrainOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *tact_last_error(void);

/**
 * Library version as a static string.
 */
const char *tact_version(void);

/**
 * Load `<dir>/train.txt` as a fact graph with fresh vocabularies.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
TactStatus tact_graph_load_dir(const char *dir, TactGraph **out);

/**
 * # Safety
 * `graph` must come from `tact_graph_load_dir` and not be freed twice.
 */
void tact_graph_free(TactGraph *graph);

/**
 * # Safety
 * `graph` must be a valid handle.
 */
uintptr_t tact_graph_num_entities(const TactGraph *graph);

/**
 * # Safety
 * `graph` must be a valid handle.
 */
uintptr_t tact_graph_num_relations(const TactGraph *graph);

/**
 * # Safety
 * `graph` must be a valid handle.
 */
uintptr_t tact_graph_num_triples(const TactGraph *graph);

/**
 * Train a model on a fact graph. `opts` may be NULL for defaults.
 *
 * # Safety
 * `graph` must be a valid handle, `out` a valid pointer; `opts`, when
 * non-NULL, must point at a properly initialised options struct.
 */
TactStatus tact_train(const TactGraph *graph, const TactTrainOptions *opts, TactModel **out);

/**
 * # Safety
 * `model` must come from `tact_train` or `tact_model_load`.
 */
void tact_model_free(TactModel *model);

/**
 * # Safety
 * `model` must be a valid handle and `path` NUL-terminated.
 */
TactStatus tact_model_save(const TactModel *model, const char *path);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` a valid pointer.
 */
TactStatus tact_model_load(const char *path, TactModel **out);

/**
 * Bind a model to a fact graph for scoring. The graph is re-interned
 * against the model's relation vocabulary (every relation string in the
 * graph must be known to the model). Both inputs are snapshotted.
 *
 * # Safety
 * `model` and `graph` must be valid handles and `out` a valid pointer.
 */
TactStatus tact_session_create(const TactModel *model, const TactGraph *graph, TactSession **out);

/**
 * # Safety
 * `session` must come from `tact_session_create`.
 */
void tact_session_free(TactSession *session);

/**
 * Score one triple (entity and relation given by name).
 *
 * # Safety
 * `session` must be a valid handle, the strings NUL-terminated, and
 * `out_score` a valid pointer.
 */
TactStatus tact_session_score(const TactSession *session,
                              const char *head,
                              const char *rel,
                              const char *tail,
                              double *out_score);

/**
 * Filtered rank of `rel` among all candidate relations for the pair;
 * competing candidates stored as facts in the session graph are skipped.
 *
 * # Safety
 * Same requirements as `tact_session_score`.
 */
TactStatus tact_session_relation_rank(const TactSession *session,
                                      const char *head,
                                      const char *rel,
                                      const char *tail,
                                      double *out_rank);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* TACT_H */
