#ifndef FLIPKV_H
#define FLIPKV_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define FLIPKV_OK 0

#define FLIPKV_ERR_NULL 1

#define FLIPKV_ERR_CONFIG 2

#define FLIPKV_ERR_CAPACITY 3

#define FLIPKV_ERR_IO 4

#define FLIPKV_ERR_MISSING_KEY 5

#define FLIPKV_ERR_DUPLICATE_KEY 6

#define FLIPKV_ERR_WIDTH 7

#define FLIPKV_ERR_BUFFER_TOO_SMALL 8

#define FLIPKV_ERR_PANIC 9

/*
 Opaque store handle.
 */
typedef struct FlipkvStore FlipkvStore;

/*
 Accounting for one operation. `label` and `addr` are -1 when absent.
 */
typedef struct FlipkvReport {
  uint64_t bits_flipped;
  uint64_t aux_bits_flipped;
  uint64_t words_touched;
  uint64_t lines_touched;
  double modeled_latency_ns;
  int64_t label;
  int64_t addr;
} FlipkvReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Creates a store of `n_buckets` buckets of `bucket_bytes` bytes each.
 `initial` holds `initial_len` bytes of old bucket contents laid out
 back to back from bucket 0; the remaining buckets start zeroed.
 Words are 32 bits and lines 512 bits when those fit the bucket width.
 `scheme` is one of `conventional`, `dcw`, `fnw`, `minshift`, `cap16`
 or `pnw`; `k` and `seed` configure the pnw model.

 # Safety
 `initial` must point to `initial_len` readable bytes (or be null when
 `initial_len` is 0), `scheme` must be a NUL-terminated string and `out`
 a writable pointer.
 */
int32_t flipkv_store_new(size_t bucket_bytes,
                         size_t n_buckets,
                         const uint8_t *initial,
                         size_t initial_len,
                         const char *scheme,
                         size_t k,
                         uint64_t seed,
                         struct FlipkvStore **out);

/*
 Creates a store from a JSON run configuration. The device starts with
 the configuration's warm-up contents.

 # Safety
 `config_json` and `scheme` must be NUL-terminated strings and `out` a
 writable pointer.
 */
int32_t flipkv_store_from_config(const char *config_json,
                                 const char *scheme,
                                 struct FlipkvStore **out);

/*
 Releases a store. Null is ignored.

 # Safety
 `store` must come from a constructor in this library and not have been
 freed already.
 */
void flipkv_store_free(struct FlipkvStore *store);

/*
 Stores `value` (exactly one bucket wide) under `key`. `report` may be
 null.

 # Safety
 Pointers must be valid for the given lengths; `store` must be live.
 */
int32_t flipkv_put(struct FlipkvStore *store,
                   const uint8_t *key,
                   size_t key_len,
                   const uint8_t *value,
                   size_t value_len,
                   struct FlipkvReport *report);

/*
 Replaces the value of a live key. `report` may be null.

 # Safety
 Pointers must be valid for the given lengths; `store` must be live.
 */
int32_t flipkv_update(struct FlipkvStore *store,
                      const uint8_t *key,
                      size_t key_len,
                      const uint8_t *value,
                      size_t value_len,
                      struct FlipkvReport *report);

/*
 Removes a live key. `report` may be null.

 # Safety
 `key` must be valid for `key_len` bytes; `store` must be live.
 */
int32_t flipkv_delete(struct FlipkvStore *store,
                      const uint8_t *key,
                      size_t key_len,
                      struct FlipkvReport *report);

/*
 Copies the value of `key` into `out`. `out_len` receives the value size
 in bytes; when `out_cap` is smaller nothing is copied and
 `FLIPKV_ERR_BUFFER_TOO_SMALL` is returned.

 # Safety
 `key` must be valid for `key_len` bytes, `out` writable for `out_cap`
 bytes and `out_len` writable; `store` must be live.
 */
int32_t flipkv_get(struct FlipkvStore *store,
                   const uint8_t *key,
                   size_t key_len,
                   uint8_t *out,
                   size_t out_cap,
                   size_t *out_len);

/*
 Refits the placement model without writing to the device. A no-op for
 baseline schemes.

 # Safety
 `store` must be live.
 */
int32_t flipkv_retrain(struct FlipkvStore *store);

/*
 Device flips so far, metadata included. 0 for a null store.

 # Safety
 `store` must be live or null.
 */
uint64_t flipkv_total_flips(const struct FlipkvStore *store);

/*
 Number of live keys. 0 for a null store.

 # Safety
 `store` must be live or null.
 */
size_t flipkv_live_count(const struct FlipkvStore *store);

/*
 Writes the device snapshot (contents and wear counters) to `path`.

 # Safety
 `store` must be live and `path` a NUL-terminated string.
 */
int32_t flipkv_save_snapshot(const struct FlipkvStore *store, const char *path);

/*
 Hamming distance between two `len`-byte buffers; `u64::MAX` if either
 pointer is null.

 # Safety
 `a` and `b` must be readable for `len` bytes.
 */
uint64_t flipkv_hamming(const uint8_t *a, const uint8_t *b, size_t len);

/*
 Message of the last failure on this thread, or null. Free with
 [`flipkv_string_free`].
 */
char *flipkv_last_error_message(void);

/*
 Frees a string returned by this library. Null is ignored.

 # Safety
 `s` must come from [`flipkv_last_error_message`] and not be freed twice.
 */
void flipkv_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLIPKV_H */
