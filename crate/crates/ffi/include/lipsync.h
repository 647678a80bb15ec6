/* Generated by cbindgen. Do not edit. */

#ifndef LIPSYNC_H
#define LIPSYNC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LsStatus {
  LS_STATUS_OK = 0,
  // `ls_session_poll_event` found no pending frame.
  LS_STATUS_NO_EVENT = 1,
  LS_STATUS_NULL_POINTER = 2,
  LS_STATUS_INVALID_ARGUMENT = 3,
  LS_STATUS_IO = 4,
  LS_STATUS_FORMAT = 5,
  LS_STATUS_MODEL_FILE = 6,
  // The call is not valid in the handle's current state.
  LS_STATUS_STATE = 7,
  LS_STATUS_INTERNAL = 8,
} LsStatus;

// A loaded model. Immutable; one model may back many sessions on any threads.
typedef struct LsModel LsModel;

// Streaming state for one audio stream. Not safe for concurrent use.
typedef struct LsSession LsSession;

// Peak limiter settings applied to incoming audio.
typedef struct LsLimiterConfig {
  double boost_db;
  double ceiling_db;
  double attack_ms;
  double release_ms;
} LsLimiterConfig;

// One filtered 24 fps frame.
typedef struct LsEvent {
  uint64_t frame;
  // Media time of the frame in milliseconds, frame * 1000 / 24.
  double time_ms;
  // Viseme code, 0..=11; see `ls_viseme_name`.
  uint8_t viseme;
  double wall_latency_ms;
} LsEvent;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread. Valid until the next failing
// call on the same thread; never null.
const char *ls_last_error_message(void);

// Loads a model file. On success `*out` owns a handle to release with `ls_model_free`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum LsStatus ls_model_load(const char *path, struct LsModel **out);

// Releases a model. Sessions created from it stay valid. Null is ignored.
//
// # Safety
// `model` must come from `ls_model_load` and not be freed twice.
void ls_model_free(struct LsModel *model);

// Temporal shift of the model in 100 Hz steps, or -1 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
int32_t ls_model_shift(const struct LsModel *model);

// Opens a session with the default limiter (`limiter` null) or the given one.
//
// # Safety
// `model` must be a live handle, `limiter` null or valid, `out` a valid pointer.
enum LsStatus ls_session_new(const struct LsModel *model,
                             const struct LsLimiterConfig *limiter,
                             struct LsSession **out);

// Feeds `len` mono 16 kHz samples. Completed frames become available to
// `ls_session_poll_event`.
//
// # Safety
// `session` must be a live handle and `pcm` point to `len` samples (may be null
// when `len` is 0).
enum LsStatus ls_session_push(struct LsSession *session, const int16_t *pcm, size_t len);

// Flushes the frames held back for lookahead. Pushing afterwards is an error.
//
// # Safety
// `session` must be a live handle.
enum LsStatus ls_session_finish(struct LsSession *session);

// Pops the oldest pending frame into `*out`, or returns `NoEvent`.
//
// # Safety
// `session` must be a live handle and `out` a valid pointer.
enum LsStatus ls_session_poll_event(struct LsSession *session, struct LsEvent *out);

// Feature lookahead, shift and filter delay of the session's chain in ms.
//
// # Safety
// `session` must be a live handle and `out` a valid pointer.
enum LsStatus ls_algorithmic_latency_ms(const struct LsSession *session, double *out);

// Mean compute time per 100 Hz step so far, in ms.
//
// # Safety
// `session` must be a live handle and `out` a valid pointer.
enum LsStatus ls_session_processing_ms(const struct LsSession *session, double *out);

// Releases a session. Null is ignored.
//
// # Safety
// `session` must come from `ls_session_new` and not be freed twice.
void ls_session_free(struct LsSession *session);

// Static name of a viseme code, or null for an unknown code.
const char *ls_viseme_name(uint8_t code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LIPSYNC_H */
