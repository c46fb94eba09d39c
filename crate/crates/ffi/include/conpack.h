#ifndef CONPACK_H
#define CONPACK_H

/* Generated by cbindgen from crates/ffi. Do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum CpStatus {
  CP_STATUS_OK = 0,
  CP_STATUS_NULL_POINTER = 1,
  CP_STATUS_INVALID_ARGUMENT = 2,
  CP_STATUS_IO = 3,
  CP_STATUS_FORMAT = 4,
  CP_STATUS_INVALID_DATA = 5,
  CP_STATUS_INCONSISTENT = 6,
  CP_STATUS_EMPTY = 7,
  CP_STATUS_UTF8 = 8,
  CP_STATUS_OUT_OF_BOUNDS = 9,
  CP_STATUS_PANIC = 10,
} CpStatus;

/*
 Top-K weighting rule.
 */
typedef enum CpWeightMode {
  CP_WEIGHT_MODE_MEAN = 0,
  CP_WEIGHT_MODE_SUM = 1,
} CpWeightMode;

typedef enum CpStrategy {
  CP_STRATEGY_FFD = 0,
  CP_STRATEGY_BUCKET = 1,
} CpStrategy;

/*
 Ranked top-K concepts for a list of samples.
 */
typedef struct CpAssignments CpAssignments;

/*
 Dense row-major embedding matrix.
 */
typedef struct CpEmbeddings CpEmbeddings;

/*
 Growable list of items to pack.
 */
typedef struct CpItems CpItems;

/*
 A packing plan.
 */
typedef struct CpPlan CpPlan;

/*
 Concept names with their embeddings.
 */
typedef struct CpVocabulary CpVocabulary;

/*
 Packing knobs. A zero cap means "no cap".
 */
typedef struct CpPackingConfig {
  uint32_t capacity;
  enum CpStrategy strategy;
  uint32_t num_buckets;
  uintptr_t max_samples_per_pack;
  double min_utilization;
  uintptr_t max_sources_per_pack;
  uintptr_t shards;
  uint64_t seed;
} CpPackingConfig;

/*
 Plan statistics. Ratios are NaN when the plan has no packs.
 */
typedef struct CpPackingStats {
  uint32_t capacity;
  uintptr_t num_samples;
  uintptr_t num_packed;
  uintptr_t num_packs;
  uintptr_t overflow_count;
  uint64_t total_tokens;
  uint64_t padding_tokens;
  double compression_ratio;
  double compression_ratio_with_overflow;
  double utilization;
  double success_rate;
  double min_utilization;
  uintptr_t max_samples_in_pack;
  bool empty;
} CpPackingStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Load an EMB1 embedding file.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CpStatus cp_embeddings_load(const char *path, struct CpEmbeddings **out);

/*
 Copy `rows * dim` floats into a new matrix.

 # Safety
 `data` must point to `rows * dim` floats; `out` must be writable.
 */
enum CpStatus cp_embeddings_from_data(uintptr_t rows,
                                      uintptr_t dim,
                                      const float *data,
                                      struct CpEmbeddings **out);

/*
 # Safety
 `m` must be a live handle.
 */
uintptr_t cp_embeddings_rows(const struct CpEmbeddings *m);

/*
 # Safety
 `m` must be a live handle.
 */
uintptr_t cp_embeddings_dim(const struct CpEmbeddings *m);

/*
 Copy the matrix into `buf`, which must hold `rows * dim` floats.

 # Safety
 `m` must be a live handle and `buf` writable for `len` floats.
 */
enum CpStatus cp_embeddings_copy(const struct CpEmbeddings *m, float *buf, uintptr_t len);

/*
 Row-normalized copy of `m`.

 # Safety
 `m` must be a live handle; `out` must be writable.
 */
enum CpStatus cp_embeddings_normalize(const struct CpEmbeddings *m, struct CpEmbeddings **out);

/*
 # Safety
 `m` must be a live handle and `path` a NUL-terminated string.
 */
enum CpStatus cp_embeddings_save(const struct CpEmbeddings *m, const char *path);

/*
 # Safety
 `m` must be null or a handle not yet freed.
 */
void cp_embeddings_free(struct CpEmbeddings *m);

/*
 Load a `index<TAB>name` TSV and its EMB1 embedding file.

 # Safety
 Paths must be NUL-terminated strings; `out` must be writable.
 */
enum CpStatus cp_vocabulary_load(const char *tsv_path,
                                 const char *embeddings_path,
                                 struct CpVocabulary **out);

/*
 # Safety
 `v` must be a live handle.
 */
uintptr_t cp_vocabulary_size(const struct CpVocabulary *v);

/*
 # Safety
 `v` must be null or a handle not yet freed.
 */
void cp_vocabulary_free(struct CpVocabulary *v);

/*
 Exact top-`k` concepts for every image row.

 # Safety
 Handles must be live; `out` must be writable.
 */
enum CpStatus cp_topk(const struct CpEmbeddings *images,
                      const struct CpVocabulary *vocab,
                      uintptr_t k,
                      struct CpAssignments **out);

/*
 # Safety
 `path` must be NUL-terminated; `out` must be writable.
 */
enum CpStatus cp_assignments_load(const char *path, struct CpAssignments **out);

/*
 # Safety
 `a` must be live and `path` NUL-terminated.
 */
enum CpStatus cp_assignments_save(const struct CpAssignments *a, const char *path);

/*
 # Safety
 `a` must be a live handle.
 */
uintptr_t cp_assignments_len(const struct CpAssignments *a);

/*
 Number of concepts assigned to sample `i`, or 0 when out of range.

 # Safety
 `a` must be a live handle.
 */
uintptr_t cp_assignments_k(const struct CpAssignments *a, uintptr_t i);

/*
 Copy sample `i`'s concept indices and similarities, best first. Both
 buffers must hold at least `cp_assignments_k(a, i)` entries.

 # Safety
 `a` must be live; buffers must be writable for `cap` entries.
 */
enum CpStatus cp_assignments_get(const struct CpAssignments *a,
                                 uintptr_t i,
                                 uintptr_t *indices,
                                 double *similarities,
                                 uintptr_t cap);

/*
 Pseudo-caption for sample `i`; free the result with `cp_string_free`.

 # Safety
 Handles must be live; `out` must be writable.
 */
enum CpStatus cp_pseudo_caption(const struct CpAssignments *a,
                                uintptr_t i,
                                const struct CpVocabulary *vocab,
                                char **out);

/*
 # Safety
 `a` must be null or a handle not yet freed.
 */
void cp_assignments_free(struct CpAssignments *a);

/*
 Normalized inverse-frequency weight per sample, written to `weights`
 (length `cp_assignments_len(a)`).

 # Safety
 `a` must be live; `weights` writable for `len` doubles.
 */
enum CpStatus cp_image_weights(const struct CpAssignments *a,
                               uintptr_t vocab_size,
                               enum CpWeightMode mode,
                               double *weights,
                               uintptr_t len);

/*
 Draw `n` indices from a normalized weight vector into `out`.

 # Safety
 `weights` must hold `len` doubles and `out` be writable for `n` entries.
 */
enum CpStatus cp_sample_balanced(const double *weights,
                                 uintptr_t len,
                                 uintptr_t n,
                                 uint64_t seed,
                                 bool replacement,
                                 uintptr_t *out);

/*
 Total tokens for one sample. Pass `width = height = 0` for text-only.

 # Safety
 `out` must be writable.
 */
enum CpStatus cp_estimate_tokens(uint32_t width,
                                 uint32_t height,
                                 uint32_t text_tokens,
                                 uint32_t patch,
                                 uint32_t merge,
                                 uint64_t *out);

struct CpItems *cp_items_new(void);

/*
 Load a manifest (full records or `{"id","source","length"}` lines).

 # Safety
 `path` must be NUL-terminated; `out` must be writable.
 */
enum CpStatus cp_items_load(const char *path, struct CpItems **out);

/*
 # Safety
 `items` must be live; strings NUL-terminated.
 */
enum CpStatus cp_items_push(struct CpItems *items,
                            const char *id,
                            const char *source,
                            uint32_t length);

/*
 # Safety
 `items` must be a live handle.
 */
uintptr_t cp_items_len(const struct CpItems *items);

/*
 # Safety
 `items` must be null or a handle not yet freed.
 */
void cp_items_free(struct CpItems *items);

struct CpPackingConfig cp_packing_config_default(void);

/*
 # Safety
 `items` and `config` must be valid; `out` must be writable.
 */
enum CpStatus cp_pack(const struct CpItems *items,
                      const struct CpPackingConfig *config,
                      struct CpPlan **out);

/*
 # Safety
 `plan` must be a live handle.
 */
uintptr_t cp_plan_num_packs(const struct CpPlan *plan);

/*
 # Safety
 `plan` must be a live handle.
 */
uintptr_t cp_plan_overflow_len(const struct CpPlan *plan);

/*
 Number of items in pack `pack`, or 0 when out of range.

 # Safety
 `plan` must be a live handle.
 */
uintptr_t cp_plan_pack_len(const struct CpPlan *plan, uintptr_t pack);

/*
 Length and offset of item `item` in pack `pack`; its id is returned as
 an owned string through `id` when `id` is non-null.

 # Safety
 `plan` must be live; out pointers writable or null (for `id`).
 */
enum CpStatus cp_plan_item(const struct CpPlan *plan,
                           uintptr_t pack,
                           uintptr_t item,
                           uint32_t *length,
                           uint64_t *offset,
                           char **id);

/*
 # Safety
 `plan` must be live; `out` must be writable.
 */
enum CpStatus cp_plan_stats(const struct CpPlan *plan,
                            double min_utilization,
                            struct CpPackingStats *out);

/*
 Write the plan as JSON Lines.

 # Safety
 `plan` must be live and `path` NUL-terminated.
 */
enum CpStatus cp_plan_save(const struct CpPlan *plan, const char *path, double min_utilization);

/*
 Read and validate a plan file.

 # Safety
 `path` must be NUL-terminated; `out` must be writable.
 */
enum CpStatus cp_plan_load(const char *path, struct CpPlan **out);

/*
 # Safety
 `plan` must be null or a handle not yet freed.
 */
void cp_plan_free(struct CpPlan *plan);

/*
 Message for the last failed call on this thread, or null. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *cp_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *cp_version(void);

/*
 Release a string returned by this library.

 # Safety
 `s` must come from this library and not have been freed already.
 */
void cp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONPACK_H */
