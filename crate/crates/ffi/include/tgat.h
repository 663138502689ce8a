#ifndef TGAT_H
#define TGAT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define TGAT_OK 0

/**
 * A required pointer argument was null.
 */
#define TGAT_ERR_NULL 1

/**
 * A file could not be read.
 */
#define TGAT_ERR_IO 2

/**
 * A file was read but its contents were malformed.
 */
#define TGAT_ERR_PARSE 3

/**
 * A configuration value was invalid.
 */
#define TGAT_ERR_CONFIG 4

/**
 * The model could not produce an embedding (unknown node, bad time).
 */
#define TGAT_ERR_INFERENCE 5

/**
 * The caller's output buffer is too small.
 */
#define TGAT_ERR_BUFFER 6

/**
 * A string argument was not valid UTF-8.
 */
#define TGAT_ERR_UTF8 7

/**
 * An internal panic was caught at the boundary.
 */
#define TGAT_ERR_PANIC 99

/**
 * Opaque handle to an in-memory temporal graph.
 */
typedef struct TgatGraph TgatGraph;

/**
 * Opaque handle to a trained model and its resolved configuration.
 */
typedef struct TgatModel TgatModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; empty after success.
 */
const char *tgat_last_error(void);

/**
 * Loads a graph file written by `tgat ingest` or `tgat synth`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
int32_t tgat_graph_load(const char *path, TgatGraph **out);

/**
 * Reads an interaction CSV directly. `node_dim` sets the width of the
 * zero node features; `time_divisor` rescales timestamps.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
int32_t tgat_graph_ingest_csv(const char *path,
                              uintptr_t node_dim,
                              double time_divisor,
                              TgatGraph **out);

/**
 * # Safety
 * `graph` must be null or a handle from this library not yet freed.
 */
void tgat_graph_free(TgatGraph *graph);

/**
 * Node count, or 0 for a null handle.
 *
 * # Safety
 * `graph` must be null or a live handle.
 */
uintptr_t tgat_graph_num_nodes(const TgatGraph *graph);

/**
 * Event count, or 0 for a null handle.
 *
 * # Safety
 * `graph` must be null or a live handle.
 */
uintptr_t tgat_graph_num_events(const TgatGraph *graph);

/**
 * Loads a checkpoint written by `tgat train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
int32_t tgat_model_load(const char *path, TgatModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library not yet freed.
 */
void tgat_model_free(TgatModel *model);

/**
 * Length of one embedding vector, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uintptr_t tgat_model_embed_dim(const TgatModel *model);

/**
 * Writes the embedding of `node` at time `t` into `out[0..out_len]`,
 * using every event of `graph` strictly before `t`. Produces exactly the
 * values printed by `tgat embed`.
 *
 * # Safety
 * `model` and `graph` must be live handles; `out` must point to at least
 * `out_len` writable doubles.
 */
int32_t tgat_embed(const TgatModel *model,
                   const TgatGraph *graph,
                   uintptr_t node,
                   double t,
                   double *out,
                   uintptr_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TGAT_H */
