#ifndef VADKIT_H
#define VADKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum VadStatus {
  VAD_STATUS_OK = 0,
  VAD_STATUS_NULL_POINTER = 1,
  VAD_STATUS_INVALID_ARGUMENT = 2,
  VAD_STATUS_BUFFER_TOO_SMALL = 3,
  VAD_STATUS_IO = 4,
  VAD_STATUS_FORMAT = 5,
  VAD_STATUS_SCHEMA = 6,
  VAD_STATUS_GLANCE_OUT_OF_RANGE = 7,
  VAD_STATUS_LENGTH_MISMATCH = 8,
  VAD_STATUS_SINGLE_CLASS = 9,
  VAD_STATUS_CLIENT = 10,
  VAD_STATUS_PANIC = 11,
} VadStatus;

/**
 * A trained scorer.
 */
typedef struct VadModel VadModel;

/**
 * A validated feature stream.
 */
typedef struct VadStream VadStream;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *vadkit_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *vadkit_last_error(void);

/**
 * Releases a string returned by this library.
 */
void vadkit_string_free(char *s);

enum VadStatus vadkit_stream_read(const char *path, struct VadStream **out);

void vadkit_stream_free(struct VadStream *stream);

/**
 * Snippet count, or 0 for a null handle.
 */
size_t vadkit_stream_len(const struct VadStream *stream);

/**
 * Feature dimension, or 0 for a null handle.
 */
size_t vadkit_stream_dim(const struct VadStream *stream);

/**
 * Owned copy of the video id; release with `vadkit_string_free`.
 */
char *vadkit_stream_video_id(const struct VadStream *stream);

enum VadStatus vadkit_model_load(const char *path, struct VadModel **out);

void vadkit_model_free(struct VadModel *model);

/**
 * Per-snippet anomaly scores of `stream`.
 */
enum VadStatus vadkit_score(const struct VadModel *model,
                            const struct VadStream *stream,
                            double *out_scores,
                            size_t capacity,
                            size_t *out_len);

/**
 * Indices whose score is strictly above `theta`.
 */
enum VadStatus vadkit_select_frames(const double *scores,
                                    size_t len,
                                    double theta,
                                    size_t *out_indices,
                                    size_t capacity,
                                    size_t *out_len);

/**
 * Mines pseudo-anomalous snippets; `out_mask[t]` is set to 1 for mined
 * snippets and 0 elsewhere (`len` entries). Glances must be strictly
 * increasing.
 */
enum VadStatus vadkit_mine_pseudo_snippets(const double *scores,
                                           size_t len,
                                           const size_t *glances,
                                           size_t glance_count,
                                           double alpha,
                                           uint8_t *out_mask);

/**
 * Max-normalised sum of Gaussians of width `sigma` centred on every
 * snippet whose mask entry is non-zero; writes `len` values.
 */
enum VadStatus vadkit_gaussian_splat(const uint8_t *mask, size_t len, double sigma, double *out);

enum VadStatus vadkit_roc_auc(const double *scores, const uint8_t *labels, size_t len, double *out);

enum VadStatus vadkit_average_precision(const double *scores,
                                        const uint8_t *labels,
                                        size_t len,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VADKIT_H */
