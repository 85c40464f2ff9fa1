#ifndef PARTUNE_H
#define PARTUNE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum PartuneStatus {
  PARTUNE_STATUS_OK = 0,
  PARTUNE_STATUS_NULL_ARGUMENT = 1,
  PARTUNE_STATUS_INVALID_UTF8 = 2,
  PARTUNE_STATUS_IO = 3,
  PARTUNE_STATUS_SYNTAX = 4,
  PARTUNE_STATUS_INVALID_INPUT = 5,
  PARTUNE_STATUS_OVERSUBSCRIBED = 6,
  PARTUNE_STATUS_PANIC = 7,
} PartuneStatus;

typedef enum PartuneMode {
  PARTUNE_MODE_SYNCHRONOUS = 0,
  PARTUNE_MODE_ASYNCHRONOUS = 1,
} PartuneMode;

typedef enum PartunePlacement {
  PARTUNE_PLACEMENT_SINGLE_SOCKET = 0,
  PARTUNE_PLACEMENT_DATA_PARALLEL = 1,
  PARTUNE_PLACEMENT_MODEL_PARALLEL = 2,
} PartunePlacement;

/**
 * Opaque parsed graph.
 */
typedef struct PartuneGraph PartuneGraph;

/**
 * Opaque hardware description.
 */
typedef struct PartuneHardware PartuneHardware;

/**
 * Opaque simulation result.
 */
typedef struct PartuneSimResult PartuneSimResult;

typedef struct PartuneWidth {
  uint32_t heavy_count;
  uint32_t heavy_depth;
  uint32_t max_width;
  uint32_t avg_width;
} PartuneWidth;

typedef struct PartuneConfig {
  uint32_t pools;
  uint32_t intra_threads;
  uint32_t kernel_threads;
} PartuneConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *partune_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *partune_version(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, freed once.
 */
void partune_string_free(char *s);

/**
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
enum PartuneStatus partune_graph_from_json(const char *json, struct PartuneGraph **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum PartuneStatus partune_graph_from_file(const char *path, struct PartuneGraph **out);

/**
 * # Safety
 * `g` must be NULL or a handle from this library, freed once.
 */
void partune_graph_free(struct PartuneGraph *g);

/**
 * Number of nodes in the graph, 0 for NULL.
 *
 * # Safety
 * `g` must be NULL or a live handle.
 */
size_t partune_graph_len(const struct PartuneGraph *g);

/**
 * Topological order as newline-separated node ids.
 *
 * # Safety
 * `g` must be a live handle and `out` writable.
 */
enum PartuneStatus partune_graph_topological_order(const struct PartuneGraph *g, char **out);

/**
 * # Safety
 * `g` must be a live handle and `out` writable.
 */
enum PartuneStatus partune_graph_width(const struct PartuneGraph *g, struct PartuneWidth *out);

/**
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
enum PartuneStatus partune_hardware_from_json(const char *json, struct PartuneHardware **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum PartuneStatus partune_hardware_from_file(const char *path, struct PartuneHardware **out);

/**
 * # Safety
 * `hw` must be NULL or a handle from this library, freed once.
 */
void partune_hardware_free(struct PartuneHardware *hw);

/**
 * Width-based configuration for `g` on `hw`.
 *
 * # Safety
 * `g` and `hw` must be live handles and `out` writable.
 */
enum PartuneStatus partune_recommend(const struct PartuneGraph *g,
                                     const struct PartuneHardware *hw,
                                     struct PartuneConfig *out);

/**
 * # Safety
 * `g` and `hw` must be live handles, `cfg` readable and `out` writable.
 */
enum PartuneStatus partune_simulate(const struct PartuneGraph *g,
                                    const struct PartuneHardware *hw,
                                    const struct PartuneConfig *cfg,
                                    enum PartuneMode mode,
                                    enum PartunePlacement placement,
                                    struct PartuneSimResult **out);

/**
 * # Safety
 * `r` must be NULL or a handle from this library, freed once.
 */
void partune_sim_result_free(struct PartuneSimResult *r);

/**
 * Makespan in time units, NaN for NULL.
 *
 * # Safety
 * `r` must be NULL or a live handle.
 */
double partune_sim_makespan(const struct PartuneSimResult *r);

/**
 * Per-node schedule as CSV with a header row.
 *
 * # Safety
 * `r` must be a live handle and `out` writable.
 */
enum PartuneStatus partune_sim_trace_csv(const struct PartuneSimResult *r, char **out);

/**
 * Best single-socket asynchronous configuration with at most `max_pools`
 * pools, and its makespan in time units.
 *
 * # Safety
 * `g` and `hw` must be live handles, `out` and `makespan` writable.
 */
enum PartuneStatus partune_sweep_argmin(const struct PartuneGraph *g,
                                        const struct PartuneHardware *hw,
                                        uint32_t max_pools,
                                        struct PartuneConfig *out,
                                        double *makespan);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PARTUNE_H */
