#ifndef C2F_H
#define C2F_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum C2fStatus {
  C2F_STATUS_OK = 0,
  // Bad arguments or configuration.
  C2F_STATUS_USAGE = 1,
  // Unreadable or inconsistent files.
  C2F_STATUS_DATA = 2,
  C2F_STATUS_NULL_POINTER = 4,
  // A string argument was not valid UTF-8.
  C2F_STATUS_UTF8 = 5,
  // The library panicked; the handle should be considered unusable.
  C2F_STATUS_PANIC = 6,
} C2fStatus;

// An opened model with everything generation needs.
typedef struct C2fModel C2fModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or an empty string. The
// pointer stays valid until the next failing call on the same thread.
const char *c2f_last_error(void);

// Library version as a static string.
const char *c2f_version(void);

// Open the artifacts in `work_dir` and the checkpoint at `model_path`
// (`<work_dir>/model.bin` when null).
//
// # Safety
// `work_dir` must be a valid C string, `model_path` null or a valid C
// string, and `out` a valid pointer to write the handle to.
enum C2fStatus c2f_model_open(const char *work_dir, const char *model_path, struct C2fModel **out);

// # Safety
// `model` must be null or a handle from [`c2f_model_open`] not yet freed.
void c2f_model_free(struct C2fModel *model);

// Generate one review for a raw user id, item id and 1-based rating.
// `beam` of zero uses the configured width. On success `*out_json` holds a
// JSON object with the aspect sequence, sketches, sentences and text.
//
// # Safety
// `model` must be a live handle, `user` and `item` valid C strings and
// `out_json` a valid pointer.
enum C2fStatus c2f_generate(const struct C2fModel *model,
                            const char *user,
                            const char *item,
                            uint32_t rating,
                            uint32_t beam,
                            char **out_json);

// Number of learned aspects in the model, or zero for a null handle.
//
// # Safety
// `model` must be null or a live handle.
uintptr_t c2f_model_num_aspects(const struct C2fModel *model);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void c2f_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* C2F_H */
